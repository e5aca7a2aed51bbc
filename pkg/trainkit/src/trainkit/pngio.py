"""PNG raster formats shared with the pipeline package.

Masks: 8-bit PNG, {0, 255} mapped to {0, 1}.  Gray images: 16-bit PNG.
Probability maps: 16-bit PNG, stored value v encoding v / 65535.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .errors import ProtocolError


def read_gray(path: str | Path) -> np.ndarray:
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise ProtocolError(f"cannot read {path}")
    if a.ndim != 2:
        raise ProtocolError(f"{path}: expected grayscale, got shape {a.shape}")
    if a.dtype == np.uint8:
        return a.astype(np.uint16) * 257
    return a.astype(np.uint16)


def read_mask(path: str | Path) -> np.ndarray:
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise ProtocolError(f"cannot read {path}")
    if a.ndim != 2 or a.dtype != np.uint8:
        raise ProtocolError(f"{path}: masks must be 8-bit grayscale")
    return (a >= 128).astype(np.uint8)


def write_prob(path: str | Path, prob: np.ndarray) -> None:
    enc = np.round(np.clip(prob, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), enc):
        raise OSError(f"cannot write {path}")


def read_prob(path: str | Path) -> np.ndarray:
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise ProtocolError(f"cannot read {path}")
    if a.ndim != 2 or a.dtype != np.uint16:
        raise ProtocolError(f"{path}: probability maps must be 16-bit grayscale")
    return a.astype(np.float64) / 65535.0
