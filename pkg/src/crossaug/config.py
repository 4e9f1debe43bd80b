"""Run configuration: built-in profiles, flat key=value files, overrides.

Precedence, lowest to highest: profile defaults, config file entries, then
explicit overrides (CLI flags). The file format is one `key=value` per
line; blank lines and `#` comments are ignored. Unknown keys are rejected
so typos fail loudly. The CROSSAUG_CONFIG environment variable names a
default config file used when no --config flag is given.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from .model import LossWeights
from .noise import NoiseConfig
from .tagger import TaggerConfig
from .trainer import TrainConfig

ENV_CONFIG = "CROSSAUG_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    profile: str = "desk"
    seed: int = 0
    # model dimensions
    embed_dim: int = 32
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    discriminator_hidden: int = 32
    attention_dim: int = 0  # 0 means: same as decoder_hidden
    dropout_rate: float = 0.1
    max_vocab: int = 10000
    # corruption
    p_drop: float = 0.1
    p_mask: float = 0.1
    p_shuffle: float = 0.5
    shuffle_window: int = 3
    # training
    batch_size: int = 8
    epochs1: int = 12
    epochs2: int = 8
    learning_rate: float = 2e-3
    disc_learning_rate: float = 2e-3
    grad_clip: float = 5.0
    dev_fraction: float = 0.1
    audit: bool = False
    # tagger
    tagger_embed_dim: int = 32
    tagger_hidden_dim: int = 64
    tagger_dropout: float = 0.1
    tagger_epochs: int = 20
    tagger_batch_size: int = 32
    tagger_learning_rate: float = 1e-3

    def noise_config(self, seed: int | None = None) -> NoiseConfig:
        return NoiseConfig(p_drop=self.p_drop, p_mask=self.p_mask,
                           p_shuffle=self.p_shuffle, shuffle_window=self.shuffle_window,
                           seed=self.seed if seed is None else seed)

    def model_options(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "encoder_hidden": self.encoder_hidden,
            "decoder_hidden": self.decoder_hidden,
            "discriminator_hidden": self.discriminator_hidden,
            "attention_dim": self.attention_dim or None,
            "dropout_rate": self.dropout_rate,
        }

    def train_config(self, epochs: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=epochs,
            learning_rate=self.learning_rate,
            disc_learning_rate=self.disc_learning_rate,
            grad_clip=self.grad_clip,
            phase1_weights=LossWeights(1.0, 0.0, 10.0),
            phase2_weights=LossWeights(1.0, 1.0, 10.0),
            noise=self.noise_config(),
            dev_fraction=self.dev_fraction,
            seed=self.seed,
            audit=self.audit,
        )

    def tagger_config(self) -> TaggerConfig:
        return TaggerConfig(
            embed_dim=self.tagger_embed_dim,
            hidden_dim=self.tagger_hidden_dim,
            dropout=self.tagger_dropout,
            epochs=self.tagger_epochs,
            batch_size=self.tagger_batch_size,
            learning_rate=self.tagger_learning_rate,
            seed=self.seed,
            max_vocab=self.max_vocab,
        )


# Appendix-of-record dimensions versus a laptop-sized variant for tests.
PROFILES = {
    "paper": {
        "embed_dim": 512,
        "encoder_hidden": 1024,
        "decoder_hidden": 1024,
        "discriminator_hidden": 300,
        "dropout_rate": 0.5,
        "batch_size": 32,
        "epochs1": 50,
        "epochs2": 50,
        "learning_rate": 5e-4,
        "disc_learning_rate": 5e-4,
        "tagger_embed_dim": 100,
        "tagger_hidden_dim": 200,
    },
    "desk": {},  # the RunConfig defaults
}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, text: str):
    kind = _FIELDS[key].type
    if kind == "bool":
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: cannot read {text!r} as a boolean")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError as err:
        raise ConfigError(f"{key}: cannot read {text!r} as {kind}") from err
    return text.strip()


def parse_settings(text: str) -> dict:
    """Parse key=value lines into a raw string mapping (later lines win)."""
    settings = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        settings[key.strip()] = value.strip()
    return settings


def apply_settings(cfg: RunConfig, settings: dict) -> RunConfig:
    """A copy of cfg with the given raw settings coerced and applied."""
    unknown = [k for k in settings if k not in _FIELDS]
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    coerced = {k: _coerce(k, str(v)) for k, v in settings.items()}
    return dataclasses.replace(cfg, **coerced)


def from_profile(name: str) -> RunConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    cfg = RunConfig(profile=name)
    return dataclasses.replace(cfg, **PROFILES[name])


def load_run_config(profile: str | None = None, config_path=None,
                    overrides: dict | None = None) -> RunConfig:
    """Resolve the effective configuration.

    The profile may come from (in priority order) the overrides, the
    explicit argument, the config file, or the desk default. The file path
    defaults to $CROSSAUG_CONFIG when set.
    """
    overrides = dict(overrides or {})
    path = config_path or os.environ.get(ENV_CONFIG) or None
    file_settings = {}
    if path:
        file_settings = parse_settings(Path(path).read_text(encoding="utf-8"))
    name = str(
        overrides.get("profile")
        or profile
        or file_settings.get("profile")
        or "desk"
    )
    cfg = from_profile(name)
    file_settings.pop("profile", None)
    overrides.pop("profile", None)
    cfg = apply_settings(cfg, file_settings)
    cfg = apply_settings(cfg, overrides)
    return cfg
