"""Run configuration: defaults <- config file <- command-line overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .contrastive import ContrastiveConfig
from .encoder import EncoderConfig
from .labelspace import LabelConfig


@dataclass
class TrainerConfig:
    batch_size_users: int = 8
    lr_encoder: float = 1e-5
    lr_other: float = 1e-3
    lam: float = 1.0
    epochs: int = 10
    patience: int = 3
    seed: int = 0
    max_posts: int = 50
    max_words: int = 70

    def validate(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.lr_encoder <= 0 or self.lr_other <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size_users < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("batch size, epochs and patience must be >= 1")


@dataclass
class LLMConfig:
    base_url: str = "https://api.openai.com/v1"
    model_id: str = "gpt-3.5-turbo-0301"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_retries: int = 3
    workers: int = 4
    rate_per_sec: float = 2.0


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    cl: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    label: LabelConfig = field(default_factory=LabelConfig)
    train: TrainerConfig = field(default_factory=TrainerConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cl"]["aspects"] = list(d["cl"]["aspects"])
        return d

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "RunConfig":
        cfg = cls()
        for key, value in _flatten(data or {}).items():
            cfg.set(key, value)
        return cfg

    def set(self, dotted: str, value: Any) -> None:
        """Set ``section.key``; ``lambda`` is accepted for ``train.lam``."""
        section, _, name = dotted.partition(".")
        if name == "lambda":
            name = "lam"
        target = getattr(self, section, None)
        if not is_dataclass(target) or name not in {f.name for f in fields(target)}:
            raise KeyError(f"unknown config key {dotted!r}")
        current = getattr(target, name)
        setattr(target, name, _coerce(value, current))

    def copy(self) -> "RunConfig":
        return copy.deepcopy(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


def _flatten(data: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, full + "."))
        else:
            out[full] = value
    return out


def _coerce(value: Any, current: Any) -> Any:
    if isinstance(value, str) and not isinstance(current, str):
        if isinstance(current, bool):
            return value.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(current, tuple):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        value = json.loads(value) if value.strip().lower() not in ("inf", "infinity") else float("inf")
    if isinstance(current, tuple):
        return tuple(value)
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def parse_override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep:
        raise ValueError(f"override {text!r} must look like section.key=value")
    return key.strip(), value
