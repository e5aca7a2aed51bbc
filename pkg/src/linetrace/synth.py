"""Seeded synthetic phantom corpus and a stage-1 corruption oracle.

A phantom is a smooth catheter-like curve descending from the top border
into the interior of the image, optionally crossed by straight distractor
bars and occluder disks, over a flat noisy background.  The corruption
oracle turns a ground-truth mask into a probability map exhibiting the
break / false-positive failure modes of a real first-stage segmenter.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import GenerationError, ParameterError
from . import imgio
from .raster import (
    BinaryMask, GrayImage, Point, ProbMap, as_mask, binarize,
    count_components, geodesic_farthest, skeletonize,
)

MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PhantomSpec:
    size: tuple[int, int] = (512, 512)
    control_points: int = 6
    thickness_range: tuple[int, int] = (3, 6)
    distractor_count: int = 2
    distractor_thickness: tuple[int, int] = (9, 14)
    occluder_count: int = 0
    occluder_radius_range: tuple[int, int] = (20, 60)
    noise_sigma: float = 200.0
    background_level: int = 12000
    curve_level: int = 30000
    distractor_level: int = 20000
    spacing_mm_px: float = 0.14
    seed: int = 0

    def __post_init__(self):
        if self.size[0] < 256 or self.size[1] < 256:
            raise ParameterError("phantom size must be at least 256x256")
        if self.thickness_range[0] < 1 or self.thickness_range[0] > self.thickness_range[1]:
            raise ParameterError("thickness range must be nonempty with min >= 1")
        if self.control_points < 2:
            raise ParameterError("need at least 2 curve control points")
        if self.noise_sigma < 0:
            raise ParameterError("noise sigma must be nonnegative")


@dataclass(frozen=True)
class CorruptionSpec:
    break_count: tuple[int, int] = (2, 4)
    break_radius: tuple[int, int] = (10, 50)
    fp_count: tuple[int, int] = (1, 2)
    fp_length: tuple[int, int] = (30, 80)
    fp_thickness: tuple[int, int] = (2, 5)
    flip_rate: float = 0.0
    foreground_prob: float = 0.9
    fp_prob: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.break_radius[0] < 1:
            raise ParameterError("break radii must be >= 1")
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ParameterError("flip rate must lie in [0, 1]")


@dataclass
class Sample:
    image: GrayImage
    gt_mask: BinaryMask
    tip: Point
    manifest_id: str
    spacing_mm_px: float = 0.14


def _sample_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=base_seed, spawn_key=(index,)))


def generate_phantom(spec: PhantomSpec, index: int = 0,
                     manifest_id: str | None = None) -> Sample:
    """Deterministically render one phantom from (spec.seed, index)."""
    rng = _sample_rng(spec.seed, index)
    h, w = spec.size

    for _ in range(20):
        gt, tip_seed = _draw_curve(spec, rng)
        if count_components(gt, 8) == 1:
            break
    else:  # pragma: no cover - curve drawing is contiguous by construction
        raise GenerationError("could not draw a single-component curve")

    # GT tip: traverse the skeleton from its topmost pixel, same rule the
    # evaluator applies, so ground truth and prediction share a convention.
    skel = skeletonize(gt)
    rows, cols = np.nonzero(skel)
    top = rows.min()
    start = Point(int(top), int(cols[rows == top].min()))
    tip, _ = geodesic_farthest(skel, start)
    if tip.row >= h - 2:
        raise GenerationError("curve tip landed on the border; adjust the spec")

    img = np.full((h, w), spec.background_level, dtype=np.float64)
    for _ in range(spec.distractor_count):
        p0 = (int(rng.integers(0, w)), int(rng.integers(0, h)))
        p1 = (int(rng.integers(0, w)), int(rng.integers(0, h)))
        t = int(rng.integers(spec.distractor_thickness[0], spec.distractor_thickness[1] + 1))
        canvas = np.zeros((h, w), np.uint8)
        cv2.line(canvas, p0, p1, 1, thickness=t)
        img[canvas > 0] = spec.distractor_level
    img[gt > 0] = spec.curve_level
    for _ in range(spec.occluder_count):
        c = (int(rng.integers(0, w)), int(rng.integers(0, h)))
        r = int(rng.integers(spec.occluder_radius_range[0], spec.occluder_radius_range[1] + 1))
        canvas = np.zeros((h, w), np.uint8)
        cv2.circle(canvas, c, r, 1, thickness=-1)
        img[canvas > 0] = (spec.background_level + spec.curve_level) // 2
    if spec.noise_sigma > 0:
        img += rng.normal(0.0, spec.noise_sigma, size=img.shape)
    image = np.clip(np.round(img), 0, 65535).astype(np.uint16)

    mid = manifest_id if manifest_id is not None else f"s{index:04d}"
    return Sample(image=image, gt_mask=gt, tip=tip, manifest_id=mid,
                  spacing_mm_px=spec.spacing_mm_px)


def _draw_curve(spec: PhantomSpec, rng: np.random.Generator) -> tuple[BinaryMask, Point]:
    h, w = spec.size
    end_row = int(rng.uniform(0.55, 0.85) * h)
    n = spec.control_points
    rows = np.unique(np.concatenate([[0, end_row],
                                     rng.integers(1, end_row, size=max(n - 2, 0))]))
    lo, hi = 0.12 * w, 0.88 * w
    cols = np.empty(rows.size)
    cols[0] = rng.uniform(lo, hi)
    max_step = 0.10 * w
    for i in range(1, rows.size):
        cols[i] = np.clip(cols[i - 1] + rng.uniform(-max_step, max_step), lo, hi)
    f = PchipInterpolator(rows, cols)
    rr = np.arange(0, end_row + 1)
    cc = np.clip(np.round(f(rr)), 0, w - 1).astype(np.int32)

    thickness = int(rng.integers(spec.thickness_range[0], spec.thickness_range[1] + 1))
    canvas = np.zeros((h, w), np.uint8)
    pts = np.stack([cc, rr], axis=1).reshape(-1, 1, 2)
    cv2.polylines(canvas, [pts], isClosed=False, color=1, thickness=thickness)
    return as_mask(canvas), Point(int(end_row), int(cc[-1]))


def corrupt_mask(gt: BinaryMask, tip: Point, spec: CorruptionSpec,
                 index: int = 0) -> ProbMap:
    """Simulate a first-stage probability map for ``gt``.

    Breaks erase disks centered on the line (never covering the tip); false
    positives add short segments off the line; flip noise toggles isolated
    pixels.  Binarizing the output at 0.01 exposes the drawn damage.
    """
    gt = as_mask(gt)
    if not gt.any():
        raise ParameterError("ground-truth mask is empty")
    h, w = gt.shape
    tip = Point(int(tip[0]), int(tip[1]))
    if not gt[tip.row, tip.col]:
        raise ParameterError("tip must lie on the ground-truth foreground")
    rng = _sample_rng(spec.seed, index)

    out = gt.astype(np.float64) * spec.foreground_prob

    fg = np.argwhere(gt > 0)
    k = int(rng.integers(spec.break_count[0], spec.break_count[1] + 1))
    for _ in range(k):
        for _attempt in range(200):
            cy, cx = fg[rng.integers(len(fg))]
            r = int(rng.integers(spec.break_radius[0], spec.break_radius[1] + 1))
            if (cy - tip.row) ** 2 + (cx - tip.col) ** 2 > r * r:
                break
        else:
            continue  # tiny mask fully inside the tip guard; skip this break
        hole = np.zeros((h, w), np.uint8)
        cv2.circle(hole, (int(cx), int(cy)), r, 1, thickness=-1)
        out[hole > 0] = 0.0

    nfp = int(rng.integers(spec.fp_count[0], spec.fp_count[1] + 1))
    for _ in range(nfp):
        y0 = int(rng.integers(int(0.1 * h), h))
        x0 = int(rng.integers(0, w))
        ang = rng.uniform(0, 2 * np.pi)
        ln = int(rng.integers(spec.fp_length[0], spec.fp_length[1] + 1))
        x1 = int(np.clip(x0 + ln * np.cos(ang), 0, w - 1))
        y1 = int(np.clip(y0 + ln * np.sin(ang), 0, h - 1))
        t = int(rng.integers(spec.fp_thickness[0], spec.fp_thickness[1] + 1))
        seg = np.zeros((h, w), np.uint8)
        cv2.line(seg, (x0, y0), (x1, y1), 1, thickness=t)
        out = np.maximum(out, seg.astype(np.float64) * spec.fp_prob)

    if spec.flip_rate > 0:
        flips = rng.random(gt.shape) < spec.flip_rate
        out[flips & (gt == 0)] = 0.3
        out[flips & (gt > 0)] = 0.0

    out[tip.row, tip.col] = max(out[tip.row, tip.col], spec.foreground_prob)
    return out


def generate_corpus(spec: PhantomSpec, n: int, out_dir: str | Path) -> dict:
    """Write ``n`` phantom samples plus a manifest; returns the manifest."""
    if n < 1:
        raise ParameterError("corpus size must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        sample = generate_phantom(spec, index=i)
        sdir = out / sample.manifest_id
        sdir.mkdir(parents=True, exist_ok=True)
        imgio.write_gray_png(sdir / "image.png", sample.image)
        imgio.write_mask_png(sdir / "gt.png", sample.gt_mask)
        meta = {
            "id": sample.manifest_id,
            "index": i,
            "tip": [sample.tip.row, sample.tip.col],
            "spacing_mm_px": sample.spacing_mm_px,
            "size": list(sample.image.shape),
        }
        (sdir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        entries.append({
            "id": sample.manifest_id,
            "seed_index": i,
            "tip": [sample.tip.row, sample.tip.col],
            "image": f"{sample.manifest_id}/image.png",
            "gt": f"{sample.manifest_id}/gt.png",
        })
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "base_seed": spec.seed,
        "spacing_mm_px": spec.spacing_mm_px,
        "phantom_spec": asdict(spec),
        "samples": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_sample(corpus_dir: str | Path, entry: dict, spacing: float) -> Sample:
    corpus_dir = Path(corpus_dir)
    image = imgio.read_gray_png(corpus_dir / entry["image"])
    gt = imgio.read_mask_png(corpus_dir / entry["gt"])
    return Sample(image=image, gt_mask=gt, tip=Point(*entry["tip"]),
                  manifest_id=entry["id"], spacing_mm_px=spacing)


def load_manifest(corpus_dir: str | Path) -> dict:
    p = Path(corpus_dir) / "manifest.json"
    if not p.exists():
        raise ParameterError(f"no manifest.json under {corpus_dir}")
    manifest = json.loads(p.read_text())
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise ParameterError("unsupported corpus manifest schema version")
    return manifest


def corpus_digest(corpus_dir: str | Path) -> str:
    """SHA-256 over all corpus files, in sorted path order."""
    root = Path(corpus_dir)
    hasher = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            hasher.update(str(p.relative_to(root)).encode())
            hasher.update(p.read_bytes())
    return hasher.hexdigest()
