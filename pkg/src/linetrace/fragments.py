"""Virtual fragment generation: break a complete line mask into pieces.

Each variant removes a few random disks centered on the line while keeping
the tip pixel intact, producing training/testing material for the
reconnection stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import GenerationError, ParameterError
from .raster import BinaryMask, Point, as_mask


@dataclass(frozen=True)
class FragmentSpec:
    radius_range: tuple[int, int] = (10, 50)
    removals_range: tuple[int, int] = (1, 5)
    variants: int = 10
    tip_guard: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.radius_range[0] <= self.radius_range[1]:
            raise ParameterError("radius range must satisfy 1 <= min <= max")
        if self.removals_range[0] < 0 or self.removals_range[0] > self.removals_range[1]:
            raise ParameterError("removals range must be nonempty and nonnegative")
        if self.variants < 1:
            raise ParameterError("at least one variant required")


@dataclass
class FragmentVariant:
    mask: BinaryMask
    disks: list[tuple[int, int, int]]  # (row, col, radius) of each removal


def generate_fragments(gt: BinaryMask, tip: Point,
                       spec: FragmentSpec) -> list[FragmentVariant]:
    """Broken variants of ``gt``: disks erased on the line, tip preserved.

    Disk centers are rejection-sampled on the foreground so that no center
    lands within the tip guard and no disk covers the tip pixel.
    """
    gt = as_mask(gt)
    if not gt.any():
        raise ParameterError("ground-truth mask is empty")
    tip = Point(int(tip[0]), int(tip[1]))
    h, w = gt.shape
    if not (0 <= tip.row < h and 0 <= tip.col < w) or not gt[tip.row, tip.col]:
        raise ParameterError("tip must lie on the ground-truth foreground")

    fg = np.argwhere(gt > 0)
    variants = []
    for v in range(spec.variants):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(v,)))
        mask = gt.copy()
        disks: list[tuple[int, int, int]] = []
        k = int(rng.integers(spec.removals_range[0], spec.removals_range[1] + 1))
        for _ in range(k):
            for _attempt in range(500):
                cy, cx = (int(x) for x in fg[rng.integers(len(fg))])
                r = int(rng.integers(spec.radius_range[0], spec.radius_range[1] + 1))
                d2 = (cy - tip.row) ** 2 + (cx - tip.col) ** 2
                if d2 > spec.tip_guard ** 2 and d2 > r * r:
                    break
            else:
                raise GenerationError("cannot place a removal disk away from the tip")
            hole = np.zeros((h, w), np.uint8)
            cv2.circle(hole, (cx, cy), r, 1, thickness=-1)
            mask[hole > 0] = 0
            disks.append((cy, cx, r))
        mask[tip.row, tip.col] = 1  # tip pixel is never erased
        variants.append(FragmentVariant(mask=mask, disks=disks))
    return variants
