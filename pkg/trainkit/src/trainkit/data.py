"""Training data read from the pipeline package's on-disk corpus formats.

Consumes only files: `corpus/{id}/image.png` + `gt.png` + `manifest.json`
(corpus layout) and `frags/{id}/gt_frag_{i}.png` (fragment command output).
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from . import pngio
from .errors import ConfigError

MANIFEST_SCHEMA_VERSION = 1


def normalize(raster: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; robust to upstream contrast preprocessing."""
    x = raster.astype(np.float32)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def load_corpus(corpus_dir: str | Path) -> list[dict]:
    root = Path(corpus_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json under {corpus_dir}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise ConfigError("unsupported corpus manifest schema version")
    samples = []
    for entry in manifest["samples"]:
        samples.append({
            "id": entry["id"],
            "image": pngio.read_gray(root / entry["image"]),
            "gt": pngio.read_mask(root / entry["gt"]),
        })
    return samples


def split_samples(samples: list[dict], val_fraction: float,
                  min_train: int = 10) -> tuple[list[dict], list[dict]]:
    """Deterministic split by corpus order; validation takes the tail."""
    n_val = max(1, int(round(len(samples) * val_fraction)))
    if len(samples) - n_val < min_train:
        raise ConfigError(
            f"corpus too small: {len(samples)} samples leave fewer than "
            f"{min_train} for training after holding out {n_val}")
    return samples[:-n_val], samples[-n_val:]


def sample_patch_pairs(samples: list[dict], patches_per_image: int,
                       patch_size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(image patch, mask patch) crops, half anchored on the foreground."""
    xs, ys = [], []
    for i, s in enumerate(samples):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        img, gt = s["image"], s["gt"]
        h, w = gt.shape
        if h < patch_size or w < patch_size:
            raise ConfigError("patch size exceeds corpus image size")
        fg = np.argwhere(gt > 0)
        for k in range(patches_per_image):
            if k % 2 == 0 and len(fg):
                r, c = fg[rng.integers(len(fg))]
                r0 = int(np.clip(r - patch_size // 2, 0, h - patch_size))
                c0 = int(np.clip(c - patch_size // 2, 0, w - patch_size))
            else:
                r0 = int(rng.integers(0, h - patch_size + 1))
                c0 = int(rng.integers(0, w - patch_size + 1))
            xs.append(normalize(img[r0:r0 + patch_size, c0:c0 + patch_size]))
            ys.append(gt[r0:r0 + patch_size, c0:c0 + patch_size]
                      .astype(np.float32))
    return np.stack(xs), np.stack(ys)


def shrink_mask(mask: np.ndarray, edge: int) -> np.ndarray:
    """Connectivity-preserving downsample: any covered pixel stays set.

    Nearest-neighbour downsampling breaks thin lines into fragments, which
    would corrupt the reconnection targets themselves.
    """
    small = cv2.resize(mask.astype(np.float32), (edge, edge),
                       interpolation=cv2.INTER_AREA)
    return (small > 0).astype(np.uint8)


def load_fragment_pairs(samples: list[dict], frags_dir: str | Path,
                        train_size: int) -> tuple[np.ndarray, np.ndarray]:
    """(fragmented variant, full gt) mask pairs, resized to the working edge."""
    root = Path(frags_dir)
    xs, ys = [], []
    for s in samples:
        sdir = root / s["id"]
        variants = sorted(sdir.glob("gt_frag_*.png"))
        if not variants:
            raise ConfigError(f"no fragment variants for {s['id']} under {frags_dir}")
        gt_small = shrink_mask(s["gt"], train_size)
        # the undamaged mask is included as its own target (weighted by
        # repetition) so the model learns to preserve already-intact input
        # exactly instead of thickening it
        for _ in range(3):
            xs.append(gt_small.astype(np.float32))
            ys.append(gt_small.astype(np.float32))
        for vpath in variants:
            frag_small = shrink_mask(pngio.read_mask(vpath), train_size)
            xs.append(frag_small.astype(np.float32))
            ys.append(gt_small.astype(np.float32))
    return np.stack(xs), np.stack(ys)
