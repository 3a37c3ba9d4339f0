"""Run configuration shared by training, decoding and the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .corpus import LengthCaps


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.0005
    batch_size: int = 16
    clip_norm: float = 5.0
    lam: float = 0.5
    hidden: int = 256
    embedding_dim: int = 300
    init_range: float = 0.1
    vocab_max: int = 120000
    epochs: int = 20
    patience: int = 5
    seed: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    query_cap: int = 20
    sentence_cap: int = 50
    sentences_cap: int = 240
    description_cap: int = 60
    tie_doc_encoders: bool = True
    query_shares_word_encoder: bool = False
    vocab_include_descriptions: bool = True
    beam_width: int = 1

    def __post_init__(self):
        for name in ("lr", "batch_size", "clip_norm", "hidden", "embedding_dim", "init_range",
                     "vocab_max", "query_cap", "sentence_cap", "sentences_cap", "description_cap",
                     "beam_width", "eps_adam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.epochs < 0 or self.patience < 0:
            raise ValueError("epochs and patience must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")

    @property
    def caps(self) -> LengthCaps:
        return LengthCaps(self.query_cap, self.sentence_cap, self.sentences_cap, self.description_cap)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


def coerce_value(name: str, raw: str):
    """Parse a string into the type of TrainConfig field ``name``."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    if name not in fields:
        raise ValueError(f"unknown config key {name!r}")
    kind = type(fields[name].default)
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    return kind(raw.strip())


def read_config_file(path: str | Path) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = coerce_value(key, value)
    return out


def write_config_file(cfg: TrainConfig, path: str | Path) -> None:
    lines = [f"{k}={v}" for k, v in cfg.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


DEFAULT_HYPERPARAMETERS = {
    "lr": 0.0005,
    "batch_size": 16,
    "clip_norm": 5.0,
    "hidden": 256,
    "embedding_dim": 300,
    "lam": 0.5,
    "init_range": 0.1,
    "vocab_max": 120000,
}
