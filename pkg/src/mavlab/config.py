"""Run configuration for the command-line pipeline."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    swaps_path: str
    bars_path: str
    out_dir: str = "out"
    quote_token: str = "x"
    swaps_schema: str | None = None
    fee_bps: float = 8.0
    threshold: str | float = "iqr"  # "iqr" or a fixed absolute price difference
    rolling: bool = False
    rolling_window: int = 1440
    k_min: int = 2
    k_max: int = 10
    restarts: int = 16
    seed: int = 0
    stated_ratio: float | None = None  # externally quoted MAV/volume ratio to cross-check

    def __post_init__(self):
        if not self.swaps_path or not self.bars_path:
            raise ConfigError("swaps_path and bars_path must be non-empty")
        if not self.out_dir:
            raise ConfigError("out_dir must be non-empty")
        if self.quote_token not in ("x", "y"):
            raise ConfigError("quote_token must be 'x' or 'y'")
        if self.swaps_schema not in (None, "csv", "jsonl"):
            raise ConfigError("swaps_schema must be 'csv' or 'jsonl'")
        if not (isinstance(self.fee_bps, (int, float)) and self.fee_bps >= 0):
            raise ConfigError("fee_bps must be >= 0")
        if isinstance(self.threshold, str):
            if self.threshold != "iqr":
                raise ConfigError("threshold must be 'iqr' or a number")
        elif not (isinstance(self.threshold, (int, float)) and self.threshold >= 0):
            raise ConfigError("a fixed threshold must be a non-negative number")
        if self.rolling and self.threshold != "iqr":
            raise ConfigError("rolling thresholds only apply to threshold='iqr'")
        if self.rolling_window < 4:
            raise ConfigError("rolling_window must be >= 4")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError("need 1 <= k_min <= k_max")
        if self.k_max - self.k_min < 2:
            raise ConfigError("the k range must hold at least 3 values for the elbow rule")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")

    @classmethod
    def from_json(cls, path) -> RunConfig:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such config file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        # relative data paths resolve against the config file's directory
        for key in ("swaps_path", "bars_path", "out_dir"):
            if key in raw and isinstance(raw[key], str) and not Path(raw[key]).is_absolute():
                raw[key] = str(path.parent / raw[key])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def digest(self) -> str:
        """Hash of the settings, independent of where inputs and outputs live."""
        d = asdict(self)
        d["swaps_path"] = Path(self.swaps_path).name
        d["bars_path"] = Path(self.bars_path).name
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
