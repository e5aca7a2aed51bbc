"""Training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    corpus_dir: str = ""
    out_dir: str = ""
    frags_dir: str | None = None      # required for the reconnection model
    epochs: int = 100
    batch_size: int = 2
    learning_rate: float = 1e-4
    dropout: float = 0.2
    bg_weight: float = 0.5            # background class weight in (0, 1)
    patience: int = 10                # early stopping on validation loss
    seed: int = 0
    patch_size: int = 64              # patch-model crop edge, px
    patches_per_image: int = 8
    train_size: int = 128             # reconnect-model working edge, px
    val_fraction: float = 0.2         # held-out image fraction

    def __post_init__(self):
        positives = {
            "epochs": self.epochs, "batch_size": self.batch_size,
            "learning_rate": self.learning_rate, "patience": self.patience,
            "patch_size": self.patch_size,
            "patches_per_image": self.patches_per_image,
            "train_size": self.train_size,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not 0.0 < self.bg_weight < 1.0:
            raise ConfigError("background weight must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("validation fraction must lie in (0, 1)")
