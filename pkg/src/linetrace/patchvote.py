"""Random patch sampling and pixel-wise majority voting (stage 2).

Patches are anchored on foreground pixels: the anchor is drawn uniformly
over the foreground, then the patch window is drawn uniformly among all
in-bounds windows containing the anchor, so every patch is full-size and
contains at least one anchor pixel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoLineDetected, ParameterError
from . import imgio
from .raster import BinaryMask, GrayImage, Point, as_gray, as_mask


@dataclass
class Patch:
    offset: Point
    payload: np.ndarray

    @property
    def size(self) -> tuple[int, int]:
        return self.payload.shape  # type: ignore[return-value]

    def window(self) -> tuple[slice, slice]:
        r, c = self.offset
        h, w = self.payload.shape
        return slice(r, r + h), slice(c, c + w)


def _check_patch_size(shape: tuple[int, int], patch_size: tuple[int, int]) -> tuple[int, int]:
    ph, pw = int(patch_size[0]), int(patch_size[1])
    if ph < 1 or pw < 1:
        raise ParameterError("patch size must be positive")
    if ph > shape[0] or pw > shape[1]:
        raise ParameterError("patch larger than the image")
    return ph, pw


def _window_origin(anchor: int, extent: int, patch: int, rng: np.random.Generator) -> int:
    lo = max(0, anchor - patch + 1)
    hi = min(anchor, extent - patch)
    return int(rng.integers(lo, hi + 1))


def sample_training_patches(img: GrayImage, gt: BinaryMask, count: int,
                            patch_size: tuple[int, int] = (512, 512),
                            seed: int = 0) -> list[tuple[Patch, Patch]]:
    """Co-located (image, mask) patch pairs anchored on GT foreground."""
    img = as_gray(img)
    gt = as_mask(gt)
    if img.shape != gt.shape:
        raise ParameterError("image and mask dimensions differ")
    ph, pw = _check_patch_size(img.shape, patch_size)
    fg = np.argwhere(gt > 0)
    if len(fg) == 0:
        raise ParameterError("ground truth has no foreground to anchor on")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(int(count)):
        ar, ac = fg[rng.integers(len(fg))]
        r0 = _window_origin(int(ar), img.shape[0], ph, rng)
        c0 = _window_origin(int(ac), img.shape[1], pw, rng)
        off = Point(r0, c0)
        pairs.append((Patch(off, img[r0:r0 + ph, c0:c0 + pw].copy()),
                      Patch(off, gt[r0:r0 + ph, c0:c0 + pw].copy())))
    return pairs


def sample_inference_patches(img: GrayImage, stage1_mask: BinaryMask, count: int,
                             patch_size: tuple[int, int] = (512, 512),
                             seed: int = 0) -> list[Patch]:
    """Image patches anchored uniformly (i.i.d.) on stage-1 positives."""
    img = as_gray(img)
    stage1_mask = as_mask(stage1_mask)
    if img.shape != stage1_mask.shape:
        raise ParameterError("image and stage-1 mask dimensions differ")
    ph, pw = _check_patch_size(img.shape, patch_size)
    fg = np.argwhere(stage1_mask > 0)
    if len(fg) == 0:
        raise NoLineDetected("stage-1 mask is empty")
    rng = np.random.default_rng(seed)
    patches = []
    for _ in range(int(count)):
        ar, ac = fg[rng.integers(len(fg))]
        r0 = _window_origin(int(ar), img.shape[0], ph, rng)
        c0 = _window_origin(int(ac), img.shape[1], pw, rng)
        patches.append(Patch(Point(r0, c0), img[r0:r0 + ph, c0:c0 + pw].copy()))
    return patches


def majority_vote(preds: list[Patch], parent_shape: tuple[int, int],
                  threshold: float = 0.7) -> BinaryMask:
    """Per-pixel mean of covering patch bits, thresholded inclusively.

    Pixels covered by no patch are 0.  Voting is order-independent: the
    accumulator is a commutative sum.
    """
    h, w = int(parent_shape[0]), int(parent_shape[1])
    acc = np.zeros((h, w), np.float64)
    cnt = np.zeros((h, w), np.int64)
    for p in preds:
        bits = as_mask(p.payload)
        rs, cs = p.window()
        if rs.stop > h or cs.stop > w or rs.start < 0 or cs.start < 0:
            raise ParameterError("patch extends outside the parent bounds")
        acc[rs, cs] += bits
        cnt[rs, cs] += 1
    out = np.zeros((h, w), np.uint8)
    covered = cnt > 0
    out[covered] = (acc[covered] / cnt[covered] >= threshold).astype(np.uint8)
    return out


def save_patch_set(patches: list[Patch], parent_shape: tuple[int, int],
                   out_dir: str | Path, kind: str = "mask") -> None:
    """Serialize patches as PNGs plus offsets.json for interchange."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, p in enumerate(patches):
        name = f"patch_{i:04d}.png"
        if kind == "mask":
            imgio.write_mask_png(out / name, as_mask(p.payload))
        else:
            imgio.write_gray_png(out / name, as_gray(p.payload))
        records.append({"index": i, "offset": [p.offset.row, p.offset.col],
                        "size": list(p.payload.shape), "path": name})
    meta = {"parent_shape": list(parent_shape), "kind": kind, "patches": records}
    (out / "offsets.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_patch_set(in_dir: str | Path) -> tuple[list[Patch], tuple[int, int]]:
    root = Path(in_dir)
    meta_path = root / "offsets.json"
    if not meta_path.exists():
        raise ParameterError(f"no offsets.json under {in_dir}")
    meta = json.loads(meta_path.read_text())
    patches = []
    for rec in sorted(meta["patches"], key=lambda r: r["index"]):
        if meta["kind"] == "mask":
            payload = imgio.read_mask_png(root / rec["path"])
        else:
            payload = imgio.read_gray_png(root / rec["path"])
        patches.append(Patch(Point(*rec["offset"]), payload))
    return patches, tuple(meta["parent_shape"])  # type: ignore[return-value]
