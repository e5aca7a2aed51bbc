"""Tip localization and evaluation metrics.

The tip rule follows the clinical reading convention: start at the top of
the predicted line and follow it downward; the traversal cannot jump across
breaks, so the tip of a fragmented prediction is the far end of the entry
fragment.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .raster import (
    BinaryMask, Point, as_mask, connected_components, geodesic_farthest,
    skeletonize,
)


@dataclass(frozen=True)
class TipEstimate:
    point: Point
    path_length_px: int
    component_label: int


def locate_tip(mask: BinaryMask) -> TipEstimate | None:
    """Tip of the fragment that contains the globally topmost pixel.

    The entry component is skeletonized and traversed from its topmost
    skeleton pixel; the tip is the geodesically farthest skeleton pixel.
    Returns None for an empty mask.
    """
    mask = as_mask(mask)
    if not mask.any():
        return None
    labels, comps = connected_components(mask, 8)
    entry = min(comps, key=lambda c: (c.topmost.row, c.topmost.col))
    sub = (labels == entry.label).astype(np.uint8)
    skel = skeletonize(sub)
    rows, cols = np.nonzero(skel)
    top = rows.min()
    start = Point(int(top), int(cols[rows == top].min()))
    tip, length = geodesic_farthest(skel, start)
    return TipEstimate(point=tip, path_length_px=length, component_label=entry.label)


def dsc(gt: BinaryMask, pd: BinaryMask) -> float:
    """Dice similarity coefficient 2|GT n PD| / (|GT| + |PD|); 1.0 if both empty."""
    gt = as_mask(gt)
    pd = as_mask(pd)
    if gt.shape != pd.shape:
        raise ParameterError("mask dimensions differ")
    inter = int(np.count_nonzero(gt & pd))
    total = int(np.count_nonzero(gt)) + int(np.count_nonzero(pd))
    if total == 0:
        return 1.0
    return 2.0 * inter / total


def tip_rmse(pairs: list[tuple[Point, Point]], spacing: float | None = None) -> float:
    """Root-mean-square Euclidean tip distance; scaled to mm when spacing given."""
    if not pairs:
        raise ParameterError("need at least one tip pair")
    if spacing is not None and spacing <= 0:
        raise ParameterError("pixel spacing must be positive")
    total = 0.0
    for gt, pred in pairs:
        total += (pred[0] - gt[0]) ** 2 + (pred[1] - gt[1]) ** 2
    rmse = math.sqrt(total / len(pairs))
    return rmse * spacing if spacing is not None else rmse


def mfp_stats(mask: BinaryMask, min_area: int = 10) -> tuple[int, bool]:
    """(component count after area filtering, single-component flag)."""
    mask = as_mask(mask)
    _, comps = connected_components(mask, 8)
    surviving = [c for c in comps if c.area >= min_area]
    count = len(surviving)
    return count, count == 1


@dataclass
class ImageRow:
    image_id: str
    tip_gt: Point | None
    tip_pred: Point | None
    rmse_px: float | None
    rmse_mm: float | None
    dsc: float
    components: int
    no_mfp: bool
    stage_times: dict = field(default_factory=dict)
    missed: bool = False


@dataclass
class EvalReport:
    n_images: int
    n_missed: int
    rmse_mean_px: float | None
    rmse_sd_px: float | None
    rmse_mean_mm: float | None
    rmse_sd_mm: float | None
    no_mfp_rate: float
    rmse_below_10mm_rate: float | None
    dsc_mean: float
    dsc_sd: float
    dsc_above_095_rate: float
    rows: list[ImageRow] = field(default_factory=list)


def evaluate_rows(rows: list[ImageRow], spacing: float | None) -> EvalReport:
    if not rows:
        raise ParameterError("no evaluation rows")
    hits = [r for r in rows if not r.missed]
    px = [r.rmse_px for r in hits]
    mm = [r.rmse_mm for r in hits] if spacing is not None else None

    def mean_sd(vals):
        if not vals:
            return None, None
        a = np.asarray(vals, dtype=np.float64)
        return float(a.mean()), float(a.std(ddof=0))

    rmse_mean_px, rmse_sd_px = mean_sd(px)
    rmse_mean_mm, rmse_sd_mm = mean_sd(mm) if mm is not None else (None, None)
    dscs = np.array([r.dsc for r in rows], dtype=np.float64)
    below10 = None
    if spacing is not None and hits:
        below10 = float(np.mean([1.0 if r.rmse_mm < 10.0 else 0.0 for r in hits]))
    return EvalReport(
        n_images=len(rows),
        n_missed=len(rows) - len(hits),
        rmse_mean_px=rmse_mean_px,
        rmse_sd_px=rmse_sd_px,
        rmse_mean_mm=rmse_mean_mm,
        rmse_sd_mm=rmse_sd_mm,
        no_mfp_rate=float(np.mean([1.0 if r.no_mfp else 0.0 for r in rows])),
        rmse_below_10mm_rate=below10,
        dsc_mean=float(dscs.mean()),
        dsc_sd=float(dscs.std(ddof=0)),
        dsc_above_095_rate=float(np.mean(dscs > 0.95)),
        rows=rows,
    )


def make_row(image_id: str, gt_mask: BinaryMask, gt_tip: Point,
             pred_mask: BinaryMask, spacing: float | None,
             min_area: int = 10, stage_times: dict | None = None) -> ImageRow:
    """Per-image metrics for one (ground truth, prediction) pair."""
    est = locate_tip(pred_mask)
    count, no_mfp = mfp_stats(pred_mask, min_area)
    score = dsc(gt_mask, pred_mask)
    if est is None:
        return ImageRow(image_id=image_id, tip_gt=gt_tip, tip_pred=None,
                        rmse_px=None, rmse_mm=None, dsc=score, components=count,
                        no_mfp=False, stage_times=stage_times or {}, missed=True)
    d = math.hypot(est.point.row - gt_tip[0], est.point.col - gt_tip[1])
    return ImageRow(image_id=image_id, tip_gt=gt_tip, tip_pred=est.point,
                    rmse_px=d, rmse_mm=d * spacing if spacing is not None else None,
                    dsc=score, components=count, no_mfp=no_mfp,
                    stage_times=stage_times or {})


def evaluate_corpus(results, spacing: float | None, min_area: int = 10) -> EvalReport:
    """Aggregate (pipeline result, sample) pairs into a corpus report.

    Missing tips are kept as flagged miss rows, excluded from the RMSE mean
    but counted in ``n_missed``.
    """
    pairs = list(results)
    if not pairs:
        raise ParameterError("no results to evaluate")
    rows = []
    for result, sample in pairs:
        if result.image_id and result.image_id != sample.manifest_id:
            raise ParameterError(
                f"result id {result.image_id!r} does not match sample {sample.manifest_id!r}")
        rows.append(make_row(sample.manifest_id, sample.gt_mask, sample.tip,
                             result.final_mask_fullres, spacing, min_area,
                             result.stage_times))
    return evaluate_rows(rows, spacing)


REPORT_CSV_COLUMNS = ["id", "rmse_px", "rmse_mm", "dsc", "components", "no_mfp",
                      "tip_row", "tip_col", "stage_times"]


def write_report(report: EvalReport, csv_path: str | Path, json_path: str | Path,
                 config_hash: str = "") -> None:
    with open(csv_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(REPORT_CSV_COLUMNS)
        for r in sorted(report.rows, key=lambda x: x.image_id):
            wr.writerow([
                r.image_id,
                "" if r.rmse_px is None else f"{r.rmse_px:.6f}",
                "" if r.rmse_mm is None else f"{r.rmse_mm:.6f}",
                f"{r.dsc:.6f}",
                r.components,
                int(r.no_mfp),
                "" if r.tip_pred is None else r.tip_pred.row,
                "" if r.tip_pred is None else r.tip_pred.col,
                json.dumps(r.stage_times, sort_keys=True),
            ])
    summary = {
        "n_images": report.n_images,
        "n_missed": report.n_missed,
        "rmse_mean_px": report.rmse_mean_px,
        "rmse_sd_px": report.rmse_sd_px,
        "rmse_mean_mm": report.rmse_mean_mm,
        "rmse_sd_mm": report.rmse_sd_mm,
        "no_mfp_rate": report.no_mfp_rate,
        "rmse_below_10mm_rate": report.rmse_below_10mm_rate,
        "dsc_mean": report.dsc_mean,
        "dsc_sd": report.dsc_sd,
        "dsc_above_095_rate": report.dsc_above_095_rate,
        "config_hash": config_hash,
    }
    Path(json_path).write_text(json.dumps(summary, indent=2, sort_keys=True))
