"""Declarative experiment configuration (YAML on disk).

Defaults follow the published training setup: Adam at 1e-4, batch 64,
128 middle-layer filters, train SNR uniform in [-5, 5] dB, early stopping
after 10 stagnant epochs, P_avg = 1, T = 1000 linear schedule sampled with
100 steps, 8:1:1 split. Desk-scale runs override sizes in their YAML.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

DATA_ROOT_ENV = "JSCCDIFF_DATA_ROOT"


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class DatasetConfig:
    name: str = "shapes"  # "shapes" (synthetic) or "folder"
    root: str | None = None
    image_size: int = 32
    n_images: int = 1000  # synthetic datasets only
    seed: int = 0
    max_shapes: int = 3  # shapes only: 1..max_shapes per image
    background: str = "gradient"  # shapes only: "gradient" or "flat"


@dataclass
class OperatorConfig:
    kind: str = "avg_pool"
    factor: int = 2


@dataclass
class JsccConfig:
    c_out: int = 2
    n_down: int = 3
    base_filters: int = 128
    attention: bool = True
    lr: float = 1e-4
    batch: int = 64
    snr_range: tuple[float, float] = (-5.0, 5.0)
    patience: int = 10
    max_epochs: int = 1000
    seed: int = 0


@dataclass
class ChannelSection:
    P_avg: float = 1.0


@dataclass
class DiffusionConfig:
    T: int = 1000
    sampling_steps: int = 100
    schedule: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.02
    base_channels: int = 32
    channel_mult: tuple[int, ...] = (1, 2, 2)
    attention_res: tuple[int, ...] = (8,)
    lr: float = 2e-4
    batch: int = 64
    epochs: int = 10
    ema_decay: float = 0.999
    seed: int = 0
    travel_length: int = 0
    travel_repeat: int = 0


@dataclass
class EvalConfig:
    snr_list: tuple[float, ...] = (-5.0, -3.0, -1.0, 1.0, 3.0, 5.0)
    seeds: tuple[int, ...] = (0,)
    methods: tuple[str, ...] = ("ours", "upsample")
    max_images: int | None = None
    batch: int = 64
    perceptual: str = "random-conv"


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    split_seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    jscc: JsccConfig = field(default_factory=JsccConfig)
    channel: ChannelSection = field(default_factory=ChannelSection)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "results"

    def validate(self) -> None:
        if len(self.split_ratios) != 3 or abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split_ratios must be three numbers summing to 1, got {self.split_ratios}")
        if any(r < 0 for r in self.split_ratios):
            raise ConfigError("split_ratios must be nonnegative")
        lo, hi = self.jscc.snr_range
        if lo > hi:
            raise ConfigError(f"jscc.snr_range is reversed: {self.jscc.snr_range}")
        if self.channel.P_avg <= 0:
            raise ConfigError("channel.P_avg must be positive")
        if not 0 < self.diffusion.sampling_steps <= self.diffusion.T:
            raise ConfigError("diffusion.sampling_steps must lie in [1, T]")
        if self.diffusion.schedule != "linear":
            raise ConfigError(f"unsupported noise schedule {self.diffusion.schedule!r}")
        if self.dataset.name not in ("shapes", "folder"):
            raise ConfigError(f"unknown dataset {self.dataset.name!r}")
        if self.dataset.background not in ("gradient", "flat") or self.dataset.max_shapes < 1:
            raise ConfigError(f"invalid shapes options: max_shapes={self.dataset.max_shapes}, background={self.dataset.background!r}")
        if self.dataset.name == "folder":
            root = self.dataset_root()
            if root is None or not root.is_dir():
                raise ConfigError(f"dataset root {root} does not exist (set dataset.root or ${DATA_ROOT_ENV})")

    def dataset_root(self) -> Path | None:
        root = self.dataset.root or os.environ.get(DATA_ROOT_ENV)
        return Path(root) if root else None

    @property
    def image_shape(self) -> tuple[int, int, int]:
        s = self.dataset.image_size
        return (3, s, s)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        try:
            cfg = _build(cls, d or {})
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
        cfg.validate()
        return cfg


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _build(cls, d: dict):
    if not isinstance(d, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(d).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value)
        elif isinstance(default, tuple) and value is not None:
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read a YAML config, apply dotted-key overrides, validate."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    for key, value in (overrides or {}).items():
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
