"""Run configuration: nested dataclasses, JSON round trip, ``key=value`` overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .data import ConfigError, SyntheticSpec, TransferPair, build_transfer_pair, load_split, synthetic_splits
from .encoder import EncoderConfig
from .model import ModelConfig
from .objectives import Hyperparams

SELECTION_SPLITS = ("source_dev", "target_dev", "none")


@dataclass
class DataConfig:
    source_domain: str = "synsrc"
    target_domain: str = "syntgt"
    source_train: str | None = None
    source_dev: str | None = None
    target_train: str | None = None
    target_dev: str | None = None
    target_test: str | None = None
    # used when no file paths are given
    synthetic_seed: int = 0
    synthetic_train: int = 20
    synthetic_dev: int = 10
    synthetic_test: int = 20
    synthetic_domain_shift: float = 0.5
    synthetic_aspect_vocab: int = 10
    synthetic_opinion_vocab: int = 10


@dataclass
class TrainConfig:
    lr_encoder: float = 5e-5
    lr_classifier: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 4
    epochs: int = 10
    max_steps: int | None = None
    seed: int = 0
    run_dir: str = "runs/default"
    selection_split: str = "source_dev"
    inject_gold_pairs: bool = True
    contrastive_warmup_steps: int = 0
    adversarial: bool = False
    adv_weight: float = 1.0
    adv_hidden: int = 100
    dtype: str = "float32"

    def __post_init__(self):
        if self.lr_encoder <= 0 or self.lr_classifier <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if self.selection_split not in SELECTION_SPLITS:
            raise ConfigError(f"selection_split must be one of {SELECTION_SPLITS}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hyper"]["lambda"] = out["hyper"].pop("lam")
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = json.loads(json.dumps(raw))  # detach from caller's dict
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        hyper = raw.get("hyper", {})
        if "lambda" in hyper:
            hyper["lam"] = hyper.pop("lambda")
        sections = {}
        for f in dataclasses.fields(cls):
            section_cls = f.default_factory
            values = raw.get(f.name, {})
            known = {g.name for g in dataclasses.fields(section_cls)}
            bad = set(values) - known
            if bad:
                raise ConfigError(f"unknown key(s) in [{f.name}]: {sorted(bad)}")
            try:
                sections[f.name] = section_cls(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{f.name}] {exc}") from None
        return cls(**sections)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``section.key=value`` or bare ``key=value`` overrides.

    A bare key must name exactly one field across all sections.
    """
    raw = config.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        if "." in key:
            section, name = key.split(".", 1)
            if section not in raw or name not in raw[section]:
                raise ConfigError(f"unknown config key {key!r}")
        else:
            owners = [s for s, vals in raw.items() if key in vals]
            if len(owners) != 1:
                raise ConfigError(
                    f"unknown config key {key!r}" if not owners
                    else f"ambiguous key {key!r}; qualify it as one of {[o + '.' + key for o in owners]}"
                )
            section, name = owners[0], key
        raw[section][name] = _parse_value(value)
    return RunConfig.from_dict(raw)


def load_transfer_pair(data: DataConfig) -> TransferPair:
    """Read the configured split files, or generate the synthetic corpus if none are set."""
    paths = {
        "source": {"train": data.source_train, "dev": data.source_dev},
        "target": {"train": data.target_train, "dev": data.target_dev, "test": data.target_test},
    }
    if any(p for splits in paths.values() for p in splits.values()):
        if not data.source_train or not data.target_train:
            raise ConfigError("file-based data needs at least source_train and target_train")
        domain = {"source": data.source_domain, "target": data.target_domain}
        loaded = {
            side: {name: load_split(p, domain[side]) for name, p in splits.items() if p}
            for side, splits in paths.items()
        }
        return build_transfer_pair(loaded["source"], loaded["target"])
    spec = SyntheticSpec(
        aspect_vocab=data.synthetic_aspect_vocab,
        opinion_vocab=data.synthetic_opinion_vocab,
        domain_shift=data.synthetic_domain_shift,
        source_domain=data.source_domain,
        target_domain=data.target_domain,
    )
    src, tgt = synthetic_splits(
        data.synthetic_seed, spec, data.synthetic_train, data.synthetic_dev, data.synthetic_test
    )
    return build_transfer_pair(src, tgt)
