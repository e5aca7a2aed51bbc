"""Raster file I/O: 8/16-bit grayscale PNG and binary PGM (P5).

Masks are stored as 8-bit PNG with {0, 255} mapped to {0, 1}; probability
maps are stored as 16-bit PNG where stored value v encodes v / 65535.
"""

from __future__ import annotations

import re
from pathlib import Path

import cv2
import numpy as np

from .errors import ParameterError
from .raster import BinaryMask, GrayImage, ProbMap, as_gray, as_mask, as_probmap


def write_gray_png(path: str | Path, img: GrayImage) -> None:
    img = as_gray(img)
    if not cv2.imwrite(str(path), img):
        raise OSError(f"cannot write {path}")


def read_gray_png(path: str | Path) -> GrayImage:
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise OSError(f"cannot read {path}")
    if a.ndim != 2:
        raise ParameterError(f"{path}: expected grayscale, got shape {a.shape}")
    if a.dtype == np.uint8:
        return a.astype(np.uint16) * 257  # replicate bits: 0..255 -> 0..65535
    return a.astype(np.uint16)


def write_mask_png(path: str | Path, m: BinaryMask) -> None:
    m = as_mask(m)
    if not cv2.imwrite(str(path), m * np.uint8(255)):
        raise OSError(f"cannot write {path}")


def read_mask_png(path: str | Path) -> BinaryMask:
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise OSError(f"cannot read {path}")
    if a.ndim != 2 or a.dtype != np.uint8:
        raise ParameterError(f"{path}: masks must be 8-bit grayscale")
    return (a >= 128).astype(np.uint8)


def write_probmap_png(path: str | Path, p: ProbMap) -> None:
    p = as_probmap(p)
    enc = np.round(p * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), enc):
        raise OSError(f"cannot write {path}")


def read_probmap_png(path: str | Path) -> ProbMap:
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise OSError(f"cannot read {path}")
    if a.ndim != 2 or a.dtype != np.uint16:
        raise ParameterError(f"{path}: probability maps must be 16-bit grayscale")
    return a.astype(np.float64) / 65535.0


def write_pgm(path: str | Path, img: GrayImage) -> None:
    """Binary PGM (P5); 16-bit payloads are written big-endian per the format."""
    img = as_gray(img)
    maxval = 255 if img.max() <= 255 else 65535
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        if maxval <= 255:
            f.write(img.astype(np.uint8).tobytes())
        else:
            f.write(img.astype(">u2").tobytes())


def read_pgm(path: str | Path) -> GrayImage:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise ParameterError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(m.group(i)) for i in (1, 2, 3))
    payload = data[m.end():]
    if maxval <= 255:
        a = np.frombuffer(payload[: h * w], dtype=np.uint8).reshape(h, w)
        return a.astype(np.uint16)
    a = np.frombuffer(payload[: 2 * h * w], dtype=">u2").reshape(h, w)
    return a.astype(np.uint16)
