"""Run configuration: one JSON document with a section per pipeline stage."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .eval_harness import ChannelGeometry, SweepConfig
from .ib_mask import IbConfig
from .transceiver import TrainConfig

SEED_ENV = "SEMCOM_SEED"


@dataclass
class DatasetConfig:
    kind: str = "gaussian_mixture"  # or "idx"
    num_classes: int = 4
    dim: int = 8
    per_class: int = 1000
    spread: float = 1.2
    train_fraction: float = 0.8
    idx_images: str | None = None
    idx_labels: str | None = None

    def validate(self) -> "DatasetConfig":
        if self.kind not in ("gaussian_mixture", "idx"):
            raise ConfigError("dataset.kind must be 'gaussian_mixture' or 'idx'")
        if self.kind == "gaussian_mixture":
            if self.num_classes < 2:
                raise ConfigError("dataset.num_classes must be >= 2")
            if self.dim < 2:
                raise ConfigError("dataset.dim must be >= 2")
            if self.per_class < 1:
                raise ConfigError("dataset.per_class must be >= 1")
            if not self.spread > 0:
                raise ConfigError("dataset.spread must be > 0")
        elif not (self.idx_images and self.idx_labels):
            raise ConfigError("dataset.idx_images and dataset.idx_labels are required for kind 'idx'")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("dataset.train_fraction must lie strictly between 0 and 1")
        return self


@dataclass
class ChannelConfig:
    s: int = 16
    capacity: int = 2
    mean_snr_db: float = 0.0
    variance_db: float = 15.0
    dispersion: str = "variance"
    # recorded only; pilots are not simulated
    total_subcarriers: int = 272
    pilots: int = 16

    def validate(self) -> "ChannelConfig":
        if self.s < 1 or self.capacity < 1:
            raise ConfigError("channel.s and channel.capacity must be >= 1")
        if self.variance_db < 0:
            raise ConfigError("channel.variance_db must be >= 0")
        if self.dispersion not in ("variance", "std"):
            raise ConfigError("channel.dispersion must be 'variance' or 'std'")
        return self

    def geometry(self) -> ChannelGeometry:
        return ChannelGeometry(self.s, self.capacity, self.dispersion)


@dataclass
class HalfSplitConfig:
    noisy_snr_db: float = 0.0


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    transceiver: TrainConfig = field(default_factory=TrainConfig)
    ib: IbConfig = field(default_factory=IbConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    halfsplit: HalfSplitConfig = field(default_factory=HalfSplitConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with the global seed pushed into every seeded section."""
        cfg = copy.deepcopy(self)
        cfg.seed = int(seed)
        cfg.transceiver.seed = cfg.seed
        cfg.ib.seed = cfg.seed
        cfg.sweep.seed = cfg.seed
        return cfg

    def validate(self) -> "RunConfig":
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        self.dataset.validate()
        self.channel.validate()
        try:
            self.transceiver.validate()
            self.ib.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.sweep.validate()
        if self.channel.s * self.channel.capacity < self.transceiver.m:
            raise ConfigError(
                f"channel.s * channel.capacity = {self.channel.s * self.channel.capacity} "
                f"cannot carry transceiver.m = {self.transceiver.m} units")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def paper_scale(self) -> "RunConfig":
        """512 feature units over 256 data subcarriers with 2 units each, beta 0.3."""
        cfg = copy.deepcopy(self)
        cfg.transceiver.m = 512
        cfg.channel.s = 256
        cfg.channel.capacity = 2
        cfg.ib.beta = 0.3
        return cfg


_SECTIONS = {"dataset": DatasetConfig, "transceiver": TrainConfig, "ib": IbConfig,
             "channel": ChannelConfig, "sweep": SweepConfig, "halfsplit": HalfSplitConfig}


def _build(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")
    kwargs = dict(data)
    if cls is IbConfig and "sigma_pre_clamp" in kwargs:
        kwargs["sigma_pre_clamp"] = tuple(kwargs["sigma_pre_clamp"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - {"seed", "out", *_SECTIONS})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    cfg = RunConfig()
    if "seed" in data:
        if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
            raise ConfigError("seed must be an integer")
        cfg.seed = data["seed"]
    if "out" in data:
        cfg.out = str(data["out"])
    for name, cls in _SECTIONS.items():
        if name in data:
            setattr(cfg, name, _build(cls, data[name], name))
    return cfg


def load_config(path=None, seed_override: int | None = None, out_override: str | None = None,
                paper_scale: bool = False, env=None) -> RunConfig:
    """Read a config file (or defaults) and apply seed precedence: flag > env > file."""
    env = os.environ if env is None else env
    if path is None:
        cfg = RunConfig()
    else:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except ValueError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        cfg = config_from_dict(data)
    seed = cfg.seed
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if seed_override is not None:
        seed = seed_override
    cfg = cfg.with_seed(seed)
    if out_override is not None:
        cfg.out = out_override
    if paper_scale:
        cfg = cfg.paper_scale()
    return cfg.validate()
