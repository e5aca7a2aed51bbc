"""Raster primitives shared by every pipeline stage.

Conventions used throughout the package:

* ``GrayImage``  -- 2-D ``uint16`` array, intensities in ``[0, 65535]``.
* ``ProbMap``    -- 2-D ``float64`` array, values in ``[0.0, 1.0]``.
* ``BinaryMask`` -- 2-D ``uint8`` array, values in ``{0, 1}``.
* ``Point``      -- ``(row, col)`` with row 0 at the top.

All functions are pure: inputs are never mutated and repeated calls agree
bit-exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Literal, NamedTuple

import cv2
import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize as _skimage_skeletonize

from .errors import ParameterError

GrayImage = np.ndarray
ProbMap = np.ndarray
BinaryMask = np.ndarray


class Point(NamedTuple):
    row: int
    col: int


# structuring elements for 4- and 8-connectivity
_STRUCT = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}

_NEIGHBORS8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def as_gray(img: np.ndarray) -> GrayImage:
    a = np.asarray(img)
    if a.ndim != 2 or a.size == 0:
        raise ParameterError("GrayImage must be a nonempty 2-D array")
    if a.min() < 0 or a.max() > 65535:
        raise ParameterError("GrayImage intensities must lie in [0, 65535]")
    return a.astype(np.uint16, copy=False)


def as_mask(m: np.ndarray) -> BinaryMask:
    a = np.asarray(m)
    if a.ndim != 2 or a.size == 0:
        raise ParameterError("BinaryMask must be a nonempty 2-D array")
    u = np.unique(a)
    if not np.isin(u, (0, 1)).all():
        raise ParameterError("BinaryMask values must be in {0, 1}")
    return a.astype(np.uint8, copy=False)


def as_probmap(p: np.ndarray) -> ProbMap:
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ParameterError("ProbMap must be a nonempty 2-D array")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ParameterError("ProbMap values must lie in [0, 1]")
    return a


def clahe_equalize(
    img: GrayImage,
    clip_limit: float = 2.0,
    tiles: tuple[int, int] = (8, 8),
    bins: int = 256,
) -> GrayImage:
    """Contrast-limited adaptive histogram equalization.

    Per-tile clipped-histogram equalization with bilinear blending between
    neighbouring tile mappings.  The mapping uses the midpoint (cdf minus
    half of the value's own bin) so that a re-application drifts by at most
    a couple of quantization levels.  Output intensities are quantized to
    ``bins`` levels spread over the 16-bit range.
    """
    img = as_gray(img)
    if clip_limit <= 0:
        raise ParameterError("clip_limit must be positive")
    tr, tc = int(tiles[0]), int(tiles[1])
    if tr < 1 or tc < 1:
        raise ParameterError("tile counts must be positive")
    h, w = img.shape
    if tr > h or tc > w:
        raise ParameterError("more tiles than pixels along an axis")

    binw = 65536.0 / bins
    lev_in = np.minimum((img.astype(np.int64) * bins) // 65536, bins - 1)

    r_edges = np.linspace(0, h, tr + 1).astype(int)
    c_edges = np.linspace(0, w, tc + 1).astype(int)
    luts = np.empty((tr, tc, bins))
    for i in range(tr):
        for j in range(tc):
            blk = lev_in[r_edges[i]:r_edges[i + 1], c_edges[j]:c_edges[j + 1]]
            n = blk.size
            hist = np.bincount(blk.ravel(), minlength=bins).astype(np.float64)
            clip = max(clip_limit * n / bins, 1.0)
            excess = np.maximum(hist - clip, 0.0).sum()
            hist = np.minimum(hist, clip) + excess / bins
            cdf = np.cumsum(hist)
            luts[i, j] = (cdf - hist / 2.0) / n * (bins - 1)

    # bilinear blend between the mappings of the four surrounding tiles
    rc = (r_edges[:-1] + r_edges[1:]) / 2.0
    cc = (c_edges[:-1] + c_edges[1:]) / 2.0
    if tr > 1:
        ri = np.clip(np.searchsorted(rc, np.arange(h)) - 1, 0, tr - 2)
        fr = np.clip((np.arange(h) - rc[ri]) / (rc[ri + 1] - rc[ri]), 0.0, 1.0)
    else:
        ri = np.zeros(h, dtype=int)
        fr = np.zeros(h)
    if tc > 1:
        ci = np.clip(np.searchsorted(cc, np.arange(w)) - 1, 0, tc - 2)
        fc = np.clip((np.arange(w) - cc[ci]) / (cc[ci + 1] - cc[ci]), 0.0, 1.0)
    else:
        ci = np.zeros(w, dtype=int)
        fc = np.zeros(w)
    ri2 = np.minimum(ri + 1, tr - 1)
    ci2 = np.minimum(ci + 1, tc - 1)

    l00 = luts[ri[:, None], ci[None, :], lev_in]
    l01 = luts[ri[:, None], ci2[None, :], lev_in]
    l10 = luts[ri2[:, None], ci[None, :], lev_in]
    l11 = luts[ri2[:, None], ci2[None, :], lev_in]
    fr_col = fr[:, None]
    fc_row = fc[None, :]
    lev = ((1 - fr_col) * (1 - fc_row) * l00 + (1 - fr_col) * fc_row * l01
           + fr_col * (1 - fc_row) * l10 + fr_col * fc_row * l11)
    lev = np.round(lev).clip(0, bins - 1)
    out = np.round((lev + 0.5) * binw - 0.5).clip(0, 65535)
    return out.astype(np.uint16)


def resize_image(img: GrayImage, target: tuple[int, int],
                 mode: Literal["bilinear", "nearest"] = "bilinear") -> GrayImage:
    """Resize a grayscale image to ``target`` (rows, cols)."""
    img = as_gray(img)
    th, tw = _check_target(target)
    if (th, tw) == img.shape:
        return img.copy()
    interp = cv2.INTER_LINEAR if mode == "bilinear" else cv2.INTER_NEAREST
    return cv2.resize(img, (tw, th), interpolation=interp)


def resize_mask(m: BinaryMask, target: tuple[int, int],
                mode: Literal["nearest"] = "nearest") -> BinaryMask:
    """Resize a binary mask; only nearest-neighbor keeps it in {0, 1}."""
    if mode != "nearest":
        raise ParameterError("BinaryMask resizing must use nearest mode")
    m = as_mask(m)
    th, tw = _check_target(target)
    if (th, tw) == m.shape:
        return m.copy()
    return cv2.resize(m, (tw, th), interpolation=cv2.INTER_NEAREST)


def resize_probmap(p: ProbMap, target: tuple[int, int]) -> ProbMap:
    p = as_probmap(p)
    th, tw = _check_target(target)
    if (th, tw) == p.shape:
        return p.copy()
    return np.clip(cv2.resize(p, (tw, th), interpolation=cv2.INTER_LINEAR), 0.0, 1.0)


def _check_target(target: tuple[int, int]) -> tuple[int, int]:
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ParameterError("resize target must be at least 1x1")
    return th, tw


def binarize(p: ProbMap, threshold: float) -> BinaryMask:
    """Threshold a probability map; the comparison is inclusive (>=)."""
    p = as_probmap(p)
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError("threshold must lie in [0, 1]")
    return (p >= threshold).astype(np.uint8)


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    bbox: tuple[int, int, int, int]  # (min_row, min_col, max_row, max_col) inclusive
    topmost: Point


def connected_components(m: BinaryMask, connectivity: int = 8) -> tuple[np.ndarray, list[Component]]:
    """Label the foreground of ``m``; returns (label map, component list).

    Background is label 0.  ``topmost`` is the leftmost pixel of the
    component's highest row.
    """
    m = as_mask(m)
    if connectivity not in (4, 8):
        raise ParameterError("connectivity must be 4 or 8")
    labels, n = ndimage.label(m, structure=_STRUCT[connectivity])
    comps: list[Component] = []
    if n:
        slices = ndimage.find_objects(labels)
        for lab, sl in enumerate(slices, start=1):
            region = labels[sl] == lab
            area = int(region.sum())
            rows, cols = np.nonzero(region)
            top = rows.min()
            left = cols[rows == top].min()
            comps.append(Component(
                label=lab,
                area=area,
                bbox=(sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1),
                topmost=Point(int(sl[0].start + top), int(sl[1].start + left)),
            ))
    return labels, comps


def count_components(m: BinaryMask, connectivity: int = 8) -> int:
    _, comps = connected_components(m, connectivity)
    return len(comps)


def skeletonize(m: BinaryMask) -> BinaryMask:
    """Thin a mask to 1-px-wide skeleton, preserving 8-connected topology."""
    m = as_mask(m)
    return _skimage_skeletonize(m.astype(bool)).astype(np.uint8)


def geodesic_farthest(skel: BinaryMask, start: Point) -> tuple[Point, int]:
    """Foreground pixel at maximum 8-connected geodesic distance from start.

    Distance counts unit steps (diagonal steps also count 1).  Ties broken by
    larger row, then larger col.
    """
    skel = as_mask(skel)
    r0, c0 = int(start[0]), int(start[1])
    h, w = skel.shape
    if not (0 <= r0 < h and 0 <= c0 < w) or not skel[r0, c0]:
        raise ParameterError("start must be a foreground pixel of the skeleton")
    dist = np.full(skel.shape, -1, dtype=np.int32)
    dist[r0, c0] = 0
    q = deque([(r0, c0)])
    best = (0, r0, c0)
    while q:
        r, c = q.popleft()
        d = dist[r, c]
        key = (d, r, c)
        if key > best:
            best = key
        for dr, dc in _NEIGHBORS8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and skel[rr, cc] and dist[rr, cc] < 0:
                dist[rr, cc] = d + 1
                q.append((rr, cc))
    d, r, c = best
    return Point(r, c), d


def dilate(m: BinaryMask, radius: int = 1) -> BinaryMask:
    """Morphological dilation by a square structuring element of given radius."""
    m = as_mask(m)
    if radius < 1:
        return m.copy()
    k = np.ones((2 * radius + 1, 2 * radius + 1), np.uint8)
    return cv2.dilate(m, k)
