"""Run configuration: defaults, JSON file, flag overrides and run manifests."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .dataset import WEAK_BEAM_THRESHOLD
from .errors import ConfigError
from .fileio import atomic_write_text, sha256_file
from .linksim import ScenarioProfile, default_indoor, default_outdoor
from .training import TrainConfig
from .wiring import Fanouts, LayerCounts

EXCLUSION_MODES = ("beam", "sample")


@dataclass(frozen=True)
class TrainSettings:
    """Everything in :class:`TrainConfig` except the per-model horizon and seed."""

    epochs: int = 40
    learning_rate: float = 0.02
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    balanced_sampling: bool = True
    clip_norm: float | None = 10.0
    ode_unfolds: int = 6

    def for_horizon(self, horizon: int, seed: int) -> TrainConfig:
        return TrainConfig(horizon=horizon, seed=seed, **asdict(self))


@dataclass(frozen=True)
class GradcheckSettings:
    instances: int = 20
    eps: float = 1e-5
    tolerance: float = 1e-4


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "ltc_run"
    horizons: tuple[int, ...] = (1, 5, 10)
    t_ob: int = 32
    stride: int = 1
    threshold: float = WEAK_BEAM_THRESHOLD
    exclusion: str = "beam"
    workers: int = 1
    counts: LayerCounts = field(default_factory=LayerCounts)
    fanouts: Fanouts = field(default_factory=Fanouts)
    train: TrainSettings = field(default_factory=TrainSettings)
    gradcheck: GradcheckSettings = field(default_factory=GradcheckSettings)
    indoor: ScenarioProfile | None = None
    outdoor: tuple[ScenarioProfile, ...] | None = None

    def resolved(self) -> "RunConfig":
        """Fill in seed-derived profiles and validate every field."""
        cfg = self
        if cfg.indoor is None:
            cfg = replace(cfg, indoor=default_indoor(cfg.seed))
        if cfg.outdoor is None:
            cfg = replace(cfg, outdoor=tuple(default_outdoor(cfg.seed)))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        problems = []
        if not self.horizons or any(int(k) != k or k < 1 for k in self.horizons):
            problems.append(f"horizons must be positive integers, got {list(self.horizons)}")
        if len(set(self.horizons)) != len(self.horizons):
            problems.append("horizons must be distinct")
        if self.t_ob < 2:
            problems.append(f"t_ob must be >= 2, got {self.t_ob}")
        if self.stride < 1:
            problems.append(f"stride must be >= 1, got {self.stride}")
        if not 0.0 <= self.threshold <= 1.0:
            problems.append(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.exclusion not in EXCLUSION_MODES:
            problems.append(f"exclusion must be one of {EXCLUSION_MODES}")
        if self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if problems:
            raise ConfigError("; ".join(problems))
        self.train.for_horizon(1, self.seed)  # TrainConfig validates itself
        if self.indoor is not None:
            for p in (self.indoor, *(self.outdoor or ())):
                p.validate(min_length=self.t_ob + max(self.horizons))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["horizons"] = list(self.horizons)
        if self.outdoor is not None:
            data["outdoor"] = [p.to_dict() for p in self.outdoor]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        nested = {"counts": LayerCounts, "fanouts": Fanouts, "train": TrainSettings,
                  "gradcheck": GradcheckSettings}
        try:
            for key, kind in nested.items():
                if key in data:
                    data[key] = kind(**data[key])
            if "horizons" in data:
                data["horizons"] = tuple(data["horizons"])
            if data.get("indoor") is not None:
                data["indoor"] = ScenarioProfile.from_dict(data["indoor"])
            if data.get("outdoor") is not None:
                data["outdoor"] = tuple(ScenarioProfile.from_dict(p) for p in data["outdoor"])
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    # output layout
    @property
    def root(self) -> Path:
        return Path(self.out_dir)

    @property
    def scenario_dir(self) -> Path:
        return self.root / "scenarios"

    @property
    def model_dir(self) -> Path:
        return self.root / "models"

    @property
    def eval_dir(self) -> Path:
        return self.root / "eval"

    def model_path(self, horizon: int) -> Path:
        return self.model_dir / f"ltc_K{horizon}.json"

    def history_path(self, horizon: int) -> Path:
        return self.model_dir / f"history_K{horizon}.csv"

    def manifest_path(self, command: str) -> Path:
        return self.root / "manifests" / f"{command}.json"


def read_config_file(path) -> dict:
    """A config JSON, or a run manifest (its ``config`` entry is used)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if "manifest_version" in data:
        data = data["config"]
    return data


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    data = read_config_file(path) if path is not None else {}
    cfg = RunConfig.from_dict(data)
    changes = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "epochs" in changes:
        cfg = replace(cfg, train=replace(cfg.train, epochs=changes.pop("epochs")))
    if "horizons" in changes:
        changes["horizons"] = tuple(changes["horizons"])
    try:
        cfg = replace(cfg, **changes)
    except TypeError as exc:
        raise ConfigError(f"bad override: {exc}") from exc
    return cfg.resolved()


def write_manifest(cfg: RunConfig, command: str, artifacts: list[Path]) -> Path:
    """Record the resolved config, seeds and output hashes for ``command``.

    Artifact paths are stored relative to the output directory and the
    manifest has no timestamps, so identical runs give identical manifests.
    """
    root = cfg.root
    seeds = {"run": cfg.seed, "wiring": cfg.seed, "training": cfg.seed,
             "profiles": {p.name: p.seed for p in (cfg.indoor, *cfg.outdoor)}}
    manifest = {
        "manifest_version": 1,
        "package_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "artifacts": {Path(p).relative_to(root).as_posix(): sha256_file(p)
                      for p in sorted(artifacts)},
    }
    path = cfg.manifest_path(command)
    atomic_write_text(path, json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path
