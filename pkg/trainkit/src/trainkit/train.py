"""Training loops for the learned patch-segmentation and reconnection models.

Both models minimize class-weighted binary cross entropy with early stopping
on the validation loss; every resolved hyperparameter is logged next to the
artifact.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import data
from .config import TrainConfig
from .models import TinyUNet


def weighted_bce(logits: torch.Tensor, target: torch.Tensor,
                 bg_weight: float) -> torch.Tensor:
    """Per-class weighting: background pixels weigh bg_weight, foreground
    pixels (1 - bg_weight)."""
    w = torch.where(target > 0.5, 1.0 - bg_weight, bg_weight)
    return F.binary_cross_entropy_with_logits(logits, target, weight=w)


def _epoch_loss(model, xs, ys, cfg: TrainConfig, optimizer=None,
                generator=None) -> float:
    n = xs.shape[0]
    if optimizer is not None:
        order = torch.randperm(n, generator=generator)
    else:
        order = torch.arange(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        x = xs[idx].unsqueeze(1)
        y = ys[idx].unsqueeze(1)
        if optimizer is not None:
            optimizer.zero_grad()
            loss = weighted_bce(model(x), y, cfg.bg_weight)
            loss.backward()
            optimizer.step()
        else:
            with torch.no_grad():
                loss = weighted_bce(model(x), y, cfg.bg_weight)
        total += float(loss.detach()) * len(idx)
    return total / n


def _fit(cfg: TrainConfig, kind: str,
         train_pair: tuple[np.ndarray, np.ndarray],
         val_pair: tuple[np.ndarray, np.ndarray],
         extra_meta: dict) -> Path:
    torch.manual_seed(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    model = TinyUNet(dropout=cfg.dropout)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    xs_t, ys_t = (torch.from_numpy(a) for a in train_pair)
    xs_v, ys_v = (torch.from_numpy(a) for a in val_pair)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_rows = []
    best_val = float("inf")
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        train_loss = _epoch_loss(model, xs_t, ys_t, cfg, optimizer, generator)
        model.eval()
        val_loss = _epoch_loss(model, xs_v, ys_v, cfg)
        log_rows.append({"epoch": epoch, "train_loss": f"{train_loss:.6f}",
                         "val_loss": f"{val_loss:.6f}"})
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    model_path = out_dir / f"{kind}_model.pt"
    torch.save(best_state, model_path)
    with open(out_dir / "train_log.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss",
                                               "val_loss"])
        writer.writeheader()
        writer.writerows(log_rows)
    meta = {"kind": kind, "best_val_loss": best_val,
            "epochs_ran": len(log_rows), "n_params": model.n_params(),
            "config": dataclasses.asdict(cfg), **extra_meta}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2,
                                                  sort_keys=True) + "\n")
    return model_path


def train_patch_model(cfg: TrainConfig) -> Path:
    """Image patch -> mask patch segmenter on corpus crops."""
    samples = data.load_corpus(cfg.corpus_dir)
    train_samples, val_samples = data.split_samples(samples, cfg.val_fraction)
    train_pair = data.sample_patch_pairs(train_samples, cfg.patches_per_image,
                                         cfg.patch_size, cfg.seed)
    val_pair = data.sample_patch_pairs(val_samples, cfg.patches_per_image,
                                       cfg.patch_size, cfg.seed + 1)
    return _fit(cfg, "patch", train_pair, val_pair,
                {"n_train": len(train_pair[0]), "n_val": len(val_pair[0])})


def train_reconnect_model(cfg: TrainConfig) -> Path:
    """Fragmented mask -> full ground-truth mask, at a reduced working edge."""
    if not cfg.frags_dir:
        raise data.ConfigError("reconnection training requires frags_dir")
    samples = data.load_corpus(cfg.corpus_dir)
    train_samples, val_samples = data.split_samples(samples, cfg.val_fraction)
    train_pair = data.load_fragment_pairs(train_samples, cfg.frags_dir,
                                          cfg.train_size)
    val_pair = data.load_fragment_pairs(val_samples, cfg.frags_dir,
                                        cfg.train_size)
    return _fit(cfg, "reconnect", train_pair, val_pair,
                {"train_size": cfg.train_size,
                 "n_train": len(train_pair[0]), "n_val": len(val_pair[0])})
