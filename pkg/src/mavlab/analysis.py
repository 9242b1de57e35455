"""Features, standardization, PCA, KMeans++ and OLS for MAV opportunities."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from . import special
from .errors import DataError, NumericError
from .fee_model import DEFAULT_FEE_BPS, SwapWindows, clean_mav
from .market_data import SwapEvent
from .misalignment import MisalignmentEpisode

log = logging.getLogger(__name__)

FEATURES = ("time_decay", "clean_mav", "avg_gas", "vmax_on_usage")


@dataclass(frozen=True)
class FeatureRow:
    start_minute: int
    time_decay: float
    clean_mav: float
    avg_gas: float
    vmax_on_usage: float

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in FEATURES)


def feature_matrix(rows: Sequence[FeatureRow]) -> np.ndarray:
    return np.array([r.values() for r in rows], dtype=float).reshape(len(rows), len(FEATURES))


def build_features(
    episodes: Sequence[MisalignmentEpisode],
    swaps: Sequence[SwapEvent],
    fee_bps: float = DEFAULT_FEE_BPS,
) -> tuple[list[FeatureRow], list[tuple[int, str]]]:
    """One feature row per usable episode, plus ``(start_minute, reason)`` for dropped ones.

    Gas and volume are read from the swaps in the minute that closes at the
    peak, i.e. ``[peak_minute, peak_minute + 60)``, with the stale-carry rule
    of ``SwapWindows``.
    """
    windows = SwapWindows(swaps)
    rows, dropped = [], []
    for ep in episodes:
        if not ep.resolved:
            dropped.append((ep.start_minute, "unresolved"))
            continue
        net = clean_mav(ep.peak_mav, fee_bps)
        if not net > 0:
            dropped.append((ep.start_minute, "non-positive clean MAV"))
            continue
        trade_time = ep.peak_minute + 60
        try:
            gas = windows.avg_gas(trade_time).value
            volume = windows.volume(trade_time).value
        except DataError:
            dropped.append((ep.start_minute, "no swaps before the opportunity"))
            continue
        if not volume > 0:
            dropped.append((ep.start_minute, "zero previous-minute volume"))
            continue
        notional = ep.peak_mav.v_max * ep.peak_mav.p_amm
        rows.append(FeatureRow(ep.start_minute, float(ep.decay_seconds), net, gas, notional / volume))
    return rows, dropped


def standardize(table: np.ndarray, mode: str = "zscore", names: Sequence[str] | None = None) -> np.ndarray:
    """Column-wise standardization with sample (ddof=1) standard deviations.

    ``zscore`` subtracts the mean and divides by the sd; ``scale`` only
    divides by the sd, leaving the columns un-centred.
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2:
        raise DataError("standardize needs a 2-D table with at least 2 rows")
    sd = table.std(axis=0, ddof=1)
    names = list(names) if names is not None else [f"column {j}" for j in range(table.shape[1])]
    for j, s in enumerate(sd):
        if not s > 0:
            raise DataError(f"{names[j]} has zero variance")
    if mode == "zscore":
        return (table - table.mean(axis=0)) / sd
    if mode == "scale":
        return table / sd
    raise ValueError(f"unknown standardization mode {mode!r}")


@dataclass(frozen=True)
class PcaResult:
    fractions: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray  # columns are unit eigenvectors
    mean: np.ndarray
    zero_eigen: np.ndarray

    def project(self, table: np.ndarray, n_components: int | None = None) -> np.ndarray:
        comps = self.components if n_components is None else self.components[:, :n_components]
        return (np.asarray(table, dtype=float) - self.mean) @ comps


def pca(table: np.ndarray) -> PcaResult:
    """Eigendecomposition of the sample covariance, largest variance first."""
    table = np.asarray(table, dtype=float)
    n, d = table.shape
    if n <= d:
        raise DataError(f"pca needs more rows than columns, got {n}x{d}")
    mean = table.mean(axis=0)
    centred = table - mean
    cov = centred.T @ centred / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vals = np.clip(vals, 0.0, None)
    zero = vals <= 1e-12 * max(vals[0], 1e-300)
    vals = np.where(zero, 0.0, vals)
    # fix the sign so the largest loading of each component is positive
    for j in range(d):
        k = np.argmax(np.abs(vecs[:, j]))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    total = vals.sum()
    if not total > 0:
        raise NumericError("covariance matrix is zero")
    if zero.any():
        log.warning("pca: %d zero eigenvalue(s)", int(zero.sum()))
    return PcaResult(vals / total, vals, vecs, mean, zero)


@dataclass(frozen=True)
class ClusterReport:
    k: int
    labels: np.ndarray
    inertia: float
    centroids: np.ndarray
    counts: np.ndarray
    means: np.ndarray  # per-cluster means of the summary table
    n_iter: int = 0

    def to_dict(self, names: Sequence[str] = FEATURES) -> dict:
        return {
            "k": self.k,
            "inertia": self.inertia,
            "counts": [int(c) for c in self.counts],
            "labels": [int(v) for v in self.labels],
            "centroids": self.centroids.tolist(),
            "means": [dict(zip(names, row.tolist())) for row in self.means],
        }


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _seed_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float):
    k = centroids.shape[0]
    d = _sq_dist(x, centroids)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(x)), labels].sum())
    scale = max(inertia, 1.0)
    it = 0
    for it in range(1, max_iter + 1):
        new = np.empty_like(centroids)
        for j in range(k):
            members = x[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                # refill an empty cluster with the point farthest from its centroid
                far = int(d[np.arange(len(x)), labels].argmax())
                new[j] = x[far]
        shift = float(np.abs(new - centroids).max())
        centroids = new
        d = _sq_dist(x, centroids)
        labels = d.argmin(axis=1)
        new_inertia = float(d[np.arange(len(x)), labels].sum())
        if new_inertia > inertia + 1e-12 * scale:
            raise NumericError(f"Lloyd iteration {it} increased inertia {inertia} -> {new_inertia}")
        inertia = new_inertia
        if shift < tol:
            break
    return centroids, labels, inertia, it


def kmeanspp(
    table: np.ndarray,
    k: int,
    restarts: int = 16,
    seed: int = 0,
    summary: np.ndarray | None = None,
    max_iter: int = 300,
    tol: float = 1e-10,
) -> ClusterReport:
    """KMeans with D^2 seeding; the restart with the lowest inertia wins.

    Each restart draws from its own stream spawned from ``seed``, so results
    are reproducible. Clusters are relabelled by decreasing size, making
    label 0 the largest group. ``summary`` (defaults to ``table``) is the
    table whose per-cluster means are reported.
    """
    x = np.asarray(table, dtype=float)
    n = x.shape[0]
    if k > n:
        raise DataError(f"k={k} exceeds the number of rows {n}")
    if k < 1 or restarts < 1:
        raise DataError("k and restarts must be >= 1")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.Generator(np.random.PCG64(child))
        cents, labels, inertia, it = _lloyd(x, _seed_centroids(x, k, rng), max_iter, tol)
        if best is None or inertia < best[2]:
            best = (cents, labels, inertia, it)
    cents, labels, inertia, it = best

    counts = np.bincount(labels, minlength=k)
    first_seen = np.array([np.argmax(labels == j) if counts[j] else n for j in range(k)])
    order = sorted(range(k), key=lambda j: (-counts[j], first_seen[j]))
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    labels = remap[labels]
    cents = cents[order]
    counts = counts[order]

    summ = x if summary is None else np.asarray(summary, dtype=float)
    means = np.array([
        summ[labels == j].mean(axis=0) if counts[j] else np.full(summ.shape[1], np.nan)
        for j in range(k)
    ])
    return ClusterReport(k, labels, inertia, cents, counts, means, it)


def inertia_curve(table: np.ndarray, ks: Sequence[int], restarts: int = 16, seed: int = 0) -> dict[int, float]:
    return {k: kmeanspp(table, k, restarts, seed).inertia for k in ks}


def elbow(inertia_by_k: Mapping[int, float]) -> int:
    """The k with the largest second difference of the inertia curve; ties go to the smaller k."""
    ks = sorted(inertia_by_k)
    if len(ks) < 3:
        raise DataError("elbow needs inertias for at least 3 values of k")
    if any(b - a != 1 for a, b in zip(ks, ks[1:])):
        raise DataError("elbow needs consecutive k values")
    best_k, best = None, -math.inf
    for k in ks[1:-1]:
        d2 = inertia_by_k[k - 1] - 2 * inertia_by_k[k] + inertia_by_k[k + 1]
        if d2 > best:
            best_k, best = k, d2
    return best_k


def cluster_table_text(report: ClusterReport, names: Sequence[str] = FEATURES) -> str:
    header = ["group", "count", *names]
    rows = [[str(j), str(int(report.counts[j]))] + [f"{v:.4f}" for v in report.means[j]]
            for j in range(report.k)]
    widths = [max(len(r[c]) for r in [header, *rows]) for c in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in [header, *rows]]
    return "\n".join(lines) + "\n"


@dataclass
class RegressionReport:
    names: list[str]
    coef: np.ndarray
    std_err: np.ndarray
    t_stat: np.ndarray
    p_value: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n: int
    df_resid: int
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    f_pvalue: float
    durbin_watson: float
    omnibus: float | None
    omnibus_p: float | None
    skew: float
    kurtosis: float
    jarque_bera: float
    jarque_bera_p: float
    cond_no: float
    residuals: np.ndarray = field(repr=False)
    excluded: dict = field(default_factory=dict)

    def param(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "df_resid": self.df_resid,
            "params": {
                name: {
                    "coef": float(self.coef[j]),
                    "std_err": float(self.std_err[j]),
                    "t": float(self.t_stat[j]),
                    "p_value": float(self.p_value[j]),
                    "ci_low": float(self.ci_low[j]),
                    "ci_high": float(self.ci_high[j]),
                }
                for j, name in enumerate(self.names)
            },
        }
        for f in fields(self):
            if f.name in ("names", "coef", "std_err", "t_stat", "p_value", "ci_low", "ci_high",
                          "n", "df_resid", "residuals"):
                continue
            out[f.name] = getattr(self, f.name)
        return out

    def summary_text(self) -> str:
        lines = [
            f"R-squared: {self.r_squared:.3f}   Adj. R-squared: {self.adj_r_squared:.3f}",
            f"F-statistic: {self.f_statistic:.2f}   Prob (F-statistic): {self.f_pvalue:.3g}",
            f"{'':8s}{'coef':>12s}{'std err':>12s}{'t':>9s}{'P>|t|':>9s}{'[0.025':>12s}{'0.975]':>12s}",
        ]
        for j, name in enumerate(self.names):
            lines.append(
                f"{name:8s}{self.coef[j]:12.4f}{self.std_err[j]:12.3f}{self.t_stat[j]:9.3f}"
                f"{self.p_value[j]:9.3f}{self.ci_low[j]:12.3f}{self.ci_high[j]:12.3f}"
            )
        omni = "n/a" if self.omnibus is None else f"{self.omnibus:.3f}"
        lines.append(f"Omnibus: {omni}   Durbin-Watson: {self.durbin_watson:.3f}")
        lines.append(f"Jarque-Bera (JB): {self.jarque_bera:.3f}   Prob(JB): {self.jarque_bera_p:.3g}")
        lines.append(f"Skew: {self.skew:.3f}   Kurtosis: {self.kurtosis:.3f}   Cond. No.: {self.cond_no:.1f}")
        return "\n".join(lines) + "\n"


def durbin_watson(residuals) -> float:
    e = np.asarray(residuals, dtype=float)
    return float(np.sum(np.diff(e) ** 2) / np.sum(e ** 2))


def _skew_kurtosis(e: np.ndarray) -> tuple[float, float]:
    c = e - e.mean()
    m2 = np.mean(c ** 2)
    return float(np.mean(c ** 3) / m2 ** 1.5), float(np.mean(c ** 4) / m2 ** 2)


def _omnibus(skew: float, kurt: float, n: int) -> tuple[float, float] | tuple[None, None]:
    """D'Agostino-Pearson K^2 from the skewness and kurtosis z-scores."""
    if n < 8:
        return None, None
    y = skew * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    y = y if y != 0 else 1.0
    z_skew = delta * math.log(y / alpha + math.sqrt((y / alpha) ** 2 + 1.0))

    mean_b2 = 3.0 * (n - 1) / (n + 1)
    var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1.0) ** 2 * (n + 3) * (n + 5))
    x = (kurt - mean_b2) / math.sqrt(var_b2)
    sqrt_beta1 = (6.0 * (n * n - 5 * n + 2) / ((n + 7.0) * (n + 9))
                  * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2.0) * (n - 3))))
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1 ** 2))
    denom = 1.0 + x * math.sqrt(2.0 / (a - 4.0))
    if denom == 0:
        return None, None
    term2 = math.copysign(((1.0 - 2.0 / a) / abs(denom)) ** (1.0 / 3.0), denom)
    z_kurt = (1.0 - 2.0 / (9.0 * a) - term2) / math.sqrt(2.0 / (9.0 * a))
    k2 = z_skew ** 2 + z_kurt ** 2
    return k2, math.exp(-k2 / 2.0)


def ols(design: np.ndarray, response: np.ndarray, names: Sequence[str] | None = None) -> RegressionReport:
    """Least squares via QR with the usual diagnostics.

    ``design`` must contain a constant column; R-squared is the centred one.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).ravel()
    n, d = x.shape
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(d)]
    if y.size != n:
        raise DataError("design and response lengths differ")
    if n <= d:
        raise DataError(f"need more observations than parameters, got n={n}, d={d}")
    if not any(np.all(x[:, j] == x[0, j]) and x[0, j] != 0 for j in range(d)):
        raise DataError("design needs an intercept column")

    q, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    col_scale = np.linalg.norm(x, axis=0)
    for j in range(d):
        if diag[j] <= 1e-10 * max(col_scale[j], 1e-300):
            raise NumericError(f"design is rank deficient: column {names[j]!r} depends on earlier columns")
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - x @ coef
    df = n - d
    ssr = float(resid @ resid)
    sigma2 = ssr / df
    r_inv = np.linalg.inv(r)
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore"):
        t = coef / se
    p = np.array([special.t_sf_two_sided(float(v), df) for v in t])
    q975 = special.t_ppf(0.975, df)

    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / df
    k_model = d - 1
    if k_model > 0 and ssr > 0:
        f_stat = ((sst - ssr) / k_model) / sigma2
        f_p = special.f_sf(f_stat, k_model, df)
    else:
        f_stat, f_p = math.inf, 0.0

    if ssr > 0:
        dw = durbin_watson(resid)
        skew, kurt = _skew_kurtosis(resid)
        omni, omni_p = _omnibus(skew, kurt, n)
    else:
        dw, skew, kurt, omni, omni_p = math.nan, 0.0, 3.0, None, None
    jb = n / 6.0 * (skew ** 2 + (kurt - 3.0) ** 2 / 4.0)
    return RegressionReport(
        names=names, coef=coef, std_err=se, t_stat=t, p_value=p,
        ci_low=coef - q975 * se, ci_high=coef + q975 * se,
        n=n, df_resid=df, r_squared=r2, adj_r_squared=adj,
        f_statistic=f_stat, f_pvalue=f_p, durbin_watson=dw,
        omnibus=omni, omnibus_p=omni_p, skew=skew, kurtosis=kurt,
        jarque_bera=jb, jarque_bera_p=math.exp(-jb / 2.0),
        cond_no=float(np.linalg.cond(x)), residuals=resid,
    )


def decay_design(rows: Sequence[FeatureRow], with_usage: bool = False) -> tuple[np.ndarray, list[str]]:
    """Columns x1 = clean_mav**-0.5, x2 = avg_gas**-0.5 (optionally x3 = vmax_on_usage),
    each divided by its sample sd but not centred, followed by a constant."""
    m = feature_matrix(rows)
    if np.any(m[:, 1] <= 0) or np.any(m[:, 2] <= 0):
        raise DataError("clean_mav and avg_gas must be positive for the decay regression")
    cols = [m[:, 1] ** -0.5, m[:, 2] ** -0.5]
    names = ["x1", "x2"]
    if with_usage:
        cols.append(m[:, 3])
        names.append("x3")
    scaled = standardize(np.column_stack(cols), mode="scale", names=names)
    return np.column_stack([scaled, np.ones(len(rows))]), names + ["const"]


def regress_decay(rows: Sequence[FeatureRow]) -> RegressionReport:
    """Regress time_decay on transformed clean MAV and gas (rows of one cluster).

    vmax_on_usage is fitted in a side model only; its coefficient and
    p-value are kept under ``excluded``.
    """
    if len(rows) < 10:
        raise DataError(f"decay regression needs at least 10 rows, got {len(rows)}")
    y = feature_matrix(rows)[:, 0]
    design, names = decay_design(rows)
    report = ols(design, y, names)
    try:
        wide, wide_names = decay_design(rows, with_usage=True)
        side = ols(wide, y, wide_names)
        j = wide_names.index("x3")
        report.excluded = {"vmax_on_usage": {"coef": float(side.coef[j]), "p_value": float(side.p_value[j])}}
        log.info("vmax_on_usage left out of the decay model (p=%.3g)", side.p_value[j])
    except (DataError, NumericError) as exc:
        report.excluded = {"vmax_on_usage": {"error": str(exc)}}
    return report
