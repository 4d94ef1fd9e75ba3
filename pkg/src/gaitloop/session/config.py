"""Session configuration: YAML with a fixed key set; unknown keys are rejected."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..cue_engine import Strategy, TriggerMode
from ..errors import ConfigError
from ..walker_sim import WalkerProfile

DEFAULT_BEATS = (1.16, 1.41, 1.58, 1.75, 1.91)

DEFAULT_WALKER = {
    "slc_true": [0.6, 0.3],
    "f_baseline": 1.7,
    "entrainment_gain": 1.0,
    "noise_f": 0.05,
    "noise_l": 0.03,
    "habituation_rate": 0.0,
    "distraction_penalty": 0.9,
}


@dataclass(frozen=True)
class SessionConfig:
    mode: str = "Simulate"
    # "Fixed", "Adaptive" or "both"; secondary_task is true, false or "both"
    strategy: str = "both"
    secondary_task: bool | str = "both"
    trigger_mode: str = "StrideOnly"
    abs_deviation: bool = False
    n_window: int = 5
    cadence_band: float = 0.05
    condition_duration: float = 240.0
    baseline_duration: float = 360.0
    training_beats: tuple[float, ...] = DEFAULT_BEATS
    beats_per_block: int = 50
    walker: dict[str, Any] | None = field(default_factory=lambda: dict(DEFAULT_WALKER))
    input_log: str | None = None
    seed: int = 0
    out_dir: str = "out"
    alpha_f: float = 1.5
    alpha_l: float = 10.0
    alpha_e: float = 0.05
    freeze_hyperparameters: bool = False
    buffer_cap: int = 500
    snapshot_every: int = 0
    baseline_aggregate: str = "median"

    def __post_init__(self) -> None:
        object.__setattr__(self, "training_beats", tuple(float(b) for b in self.training_beats))
        if self.mode not in ("Simulate", "Replay"):
            raise ConfigError(f"mode must be Simulate or Replay, got {self.mode!r}")
        if self.strategy not in ("Fixed", "Adaptive", "both"):
            raise ConfigError(f"strategy must be Fixed, Adaptive or both, got {self.strategy!r}")
        if self.secondary_task not in (True, False, "both"):
            raise ConfigError(f"secondary_task must be true, false or both, got {self.secondary_task!r}")
        try:
            TriggerMode(self.trigger_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.condition_duration < 0 or self.baseline_duration <= 0:
            raise ConfigError("baseline_duration must be > 0 and condition_duration >= 0")
        if not self.training_beats or any(not b > 0 for b in self.training_beats):
            raise ConfigError("training_beats must be a nonempty list of positive frequencies")
        if self.baseline_aggregate not in ("median", "mean"):
            raise ConfigError("baseline_aggregate must be median or mean")
        if self.beats_per_block < 1:
            raise ConfigError("beats_per_block must be >= 1")
        if self.mode == "Simulate" and self.walker is None:
            raise ConfigError("Simulate mode needs a walker profile")
        if self.mode == "Replay" and not self.input_log:
            raise ConfigError("Replay mode needs input_log")
        if self.walker is not None:
            try:
                WalkerProfile.from_dict(self.walker)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"walker: {exc}") from None

    @property
    def profile(self) -> WalkerProfile:
        if self.walker is None:
            raise ConfigError("no walker profile configured")
        return WalkerProfile.from_dict(self.walker)

    def conditions(self) -> list[tuple[Strategy, bool]]:
        strategies = [Strategy.FIXED, Strategy.ADAPTIVE] if self.strategy == "both" else [Strategy(self.strategy)]
        tasks = [False, True] if self.secondary_task == "both" else [bool(self.secondary_task)]
        return [(s, t) for s in strategies for t in tasks]

    def rng(self, name: str) -> np.random.Generator:
        """Independent generator for the named sub-stream of ``seed``."""
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])

    def with_(self, **kw) -> "SessionConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["training_beats"] = list(self.training_beats)
        return d


_KEYS = {f.name for f in fields(SessionConfig)}


def config_from_dict(d: dict[str, Any]) -> SessionConfig:
    unknown = sorted(set(d) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "walker" in d and d["walker"] is not None:
        wk = set(d["walker"]) - set(DEFAULT_WALKER)
        if wk:
            raise ConfigError(f"unknown walker keys: {', '.join(sorted(wk))}")
    try:
        return SessionConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None, **overrides: Any) -> SessionConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data.update(loaded or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def dump_config(cfg: SessionConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
