"""Run configuration and its flat key-value text form."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..constraints import LossWeights
from ..core import Topology
from ..errors import DomainError

INIT_MODES = ("random", "first_order")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one training run.

    Epoch counts refer to passes over a dataset of ``dataset_size`` DC levels
    split into batches of ``batch_size``. ``curriculum`` lists extra cycle
    counts at which the reconstruction loss is also applied (empty: final
    cycle only). ``data_seed`` defaults to a value derived from ``seed``.
    """

    K: int = 3
    N: int = 80
    Q: int = 32
    delta: float = 0.4
    decoder_depth: int | None = None
    lambda_dr: float = 0.01
    lambda_tpt: float = 1e-4
    tpt: float = 16.0
    epochs: int = 400
    batch_size: int = 256
    lr_max: float = 1e-2
    lr_min: float = 1e-3
    finetune_epochs: int = 100
    finetune_lr: float = 1e-3
    grad_clip: float = 1.0
    eval_every: int = 5
    dataset_size: int = 8192
    input_low: float = -0.35
    input_high: float = 0.35
    data_seed: int | None = None
    train_noise: bool = True
    snr_trials: int = 32
    select_trials: int = 4
    curriculum: tuple = field(default_factory=tuple)
    init: str = "random"
    q_init: float = 0.25
    c_init: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "curriculum", tuple(int(c) for c in self.curriculum))
        if not -0.5 <= self.input_low < self.input_high <= 0.5:
            raise DomainError("input range must be a non-empty subset of [-0.5, 0.5]")
        for name in ("epochs", "batch_size", "dataset_size", "snr_trials", "select_trials", "eval_every"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.finetune_epochs < 0:
            raise DomainError("finetune_epochs must be >= 0")
        if self.lr_max < 0 or self.lr_min < 0 or self.finetune_lr < 0:
            raise DomainError("learning rates must be non-negative")
        if self.q_init <= 0 or self.c_init <= 0:
            raise DomainError("q_init and c_init must be positive")
        if self.init not in INIT_MODES:
            raise DomainError(f"init must be one of {INIT_MODES}")
        if any(not 1 <= c <= self.N for c in self.curriculum):
            raise DomainError("curriculum cycles must lie in 1..N")
        self.topology()
        self.loss_weights()

    def topology(self) -> Topology:
        return Topology(K=self.K, N=self.N, Q=self.Q, delta=self.delta, decoder_depth=self.decoder_depth)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_dr, self.lambda_tpt, self.tpt)

    @property
    def dataset_seed(self) -> int:
        return self.seed + 1_000_003 if self.data_seed is None else self.data_seed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["curriculum"] = list(self.curriculum)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DomainError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


def load_config(path) -> RunConfig:
    """Read a flat YAML mapping whose keys are :class:`RunConfig` field names."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise DomainError("config file must hold a flat mapping")
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise DomainError(f"config must be flat; nested keys: {', '.join(nested)}")
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
