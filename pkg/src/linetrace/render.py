"""Rendering of inspection artifacts: overlays and report figures.

The per-image overlay paints the ground truth blue and the prediction red
(overlap appears magenta) on top of the input image, with both tips circled.
Report figures are written through the matplotlib Agg backend so rendering
is headless and reproducible.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

from .metrics import EvalReport
from .raster import BinaryMask, GrayImage, Point, as_gray, as_mask

_TIP_RADIUS = 12

# savefig writes a constant "Software" text chunk by default; dropping it
# keeps reruns byte-identical across matplotlib builds
_PNG_META = {"metadata": {"Software": None}}


def render_overlay(image: GrayImage, gt_mask: BinaryMask | None,
                   pred_mask: BinaryMask, gt_tip: Point | None,
                   pred_tip: Point | None, path: str | Path) -> None:
    """Write an RGB overlay PNG: GT blue, prediction red, tips circled."""
    img8 = (as_gray(image) // 257).astype(np.uint8)
    bgr = cv2.cvtColor(img8, cv2.COLOR_GRAY2BGR)
    pred = as_mask(pred_mask)
    if gt_mask is not None:
        gt = as_mask(gt_mask)
        bgr[gt > 0] = (255, 64, 64)      # blue (BGR)
    bgr[pred > 0, 2] = 255               # red channel; overlap turns magenta
    bgr[pred > 0, 1] = 48
    if gt_tip is not None:
        cv2.circle(bgr, (int(gt_tip[1]), int(gt_tip[0])), _TIP_RADIUS,
                   (255, 64, 64), 2)
    if pred_tip is not None:
        cv2.circle(bgr, (int(pred_tip[1]), int(pred_tip[0])), _TIP_RADIUS,
                   (64, 48, 255), 2)
    if not cv2.imwrite(str(path), bgr):
        raise OSError(f"could not write overlay to {path}")


def render_report_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Histogram and bar figures for an evaluation report; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    errs = [r.rmse_px for r in report.rows if r.rmse_px is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    if errs:
        ax.hist(errs, bins=30, color="#c23b3b")
    ax.set_xlabel("tip error (px)")
    ax.set_ylabel("images")
    ax.set_title("Tip localization error")
    p = out / "fig_tip_error.png"
    fig.savefig(p, dpi=100, **_PNG_META)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist([r.dsc for r in report.rows], bins=30, range=(0.0, 1.0), color="#3b6ec2")
    ax.set_xlabel("DSC")
    ax.set_ylabel("images")
    ax.set_title("Dice similarity")
    p = out / "fig_dsc.png"
    fig.savefig(p, dpi=100, **_PNG_META)
    plt.close(fig)
    written.append(p)

    counts = sorted({r.components for r in report.rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(c) for c in counts],
           [sum(1 for r in report.rows if r.components == c) for c in counts],
           color="#4c9a63")
    ax.set_xlabel("connected components (area-filtered)")
    ax.set_ylabel("images")
    ax.set_title(f"Fragmentation (single-component rate {report.no_mfp_rate:.0%})")
    p = out / "fig_components.png"
    fig.savefig(p, dpi=100, **_PNG_META)
    plt.close(fig)
    written.append(p)
    return written


def render_ablation_figure(labels: list[str], mean_errors: list[float],
                           path: str | Path) -> None:
    """Bar chart of mean tip error per stage combination."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(labels, mean_errors, color="#8a5cc2")
    ax.set_ylabel("mean tip error (px)")
    ax.set_title("Stage ablation")
    fig.savefig(path, dpi=100, **_PNG_META)
    plt.close(fig)
