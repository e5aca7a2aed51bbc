"""Three-stage pipeline orchestration.

Stage 1 segments the whole (resized, equalized) image and binarizes at a
deliberately low threshold; stage 2 re-segments random patches at original
resolution and rebuilds the mask by pixel-wise majority voting; stage 3
reconnects the remaining fragments.  Each stage can be toggled for
ablation studies without changing any artifact layout.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .backends import (
    BackendDescriptor, PredictionContext, build_full_backend,
    build_patch_backend, build_reconnector,
)
from .errors import NoLineDetected, ParameterError, StageError
from .metrics import TipEstimate, locate_tip
from .patchvote import majority_vote, sample_inference_patches
from .raster import (
    BinaryMask, GrayImage, Point, as_gray, as_mask, binarize, clahe_equalize,
    resize_image, resize_mask,
)
from .synth import Sample


@dataclass(frozen=True)
class PipelineConfig:
    stage1_backend: BackendDescriptor = BackendDescriptor("ridge")
    stage1_threshold: float = 0.01
    stage2_enabled: bool = True
    stage2_backend: BackendDescriptor = BackendDescriptor("ridge")
    patch_count: int = 200
    patch_size: tuple[int, int] = (512, 512)
    vote_threshold: float = 0.7
    stage3_enabled: bool = True
    stage3_backend: BackendDescriptor = BackendDescriptor("rule_reconnect")
    resize_target: tuple[int, int] = (1024, 1024)
    clahe_clip: float = 2.0
    clahe_tiles: tuple[int, int] = (8, 8)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.stage1_threshold <= 1.0 or not 0.0 <= self.vote_threshold <= 1.0:
            raise ParameterError("thresholds must lie in [0, 1]")
        if self.stage2_enabled and self.patch_count < 1:
            raise ParameterError("patch count must be >= 1 when stage 2 is enabled")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_stages(self, stage2: bool, stage3: bool) -> "PipelineConfig":
        d = asdict(self)
        d["stage1_backend"] = self.stage1_backend
        d["stage2_backend"] = self.stage2_backend
        d["stage3_backend"] = self.stage3_backend
        d["stage2_enabled"] = stage2
        d["stage3_enabled"] = stage3
        return PipelineConfig(**d)


@dataclass
class PipelineResult:
    image_id: str
    stage1_mask: BinaryMask
    stage2_mask: BinaryMask | None
    stage3_mask: BinaryMask | None
    final_mask: BinaryMask
    final_mask_fullres: BinaryMask
    tip: Point | None
    tip_working: Point | None
    stage_times: dict[str, float]
    config_hash: str
    seed: int
    no_line: bool = False


def run_stage1(img: GrayImage, cfg: PipelineConfig, ctx: PredictionContext) -> BinaryMask:
    backend = build_full_backend(cfg.stage1_backend)
    try:
        working = clahe_equalize(resize_image(as_gray(img), cfg.resize_target),
                                 cfg.clahe_clip, cfg.clahe_tiles)
        prob = backend.predict_full(working, ctx)
    except Exception as e:  # noqa: BLE001 - tagged and re-raised
        raise StageError("stage1", e) from e
    return binarize(prob, cfg.stage1_threshold)


def run_stage2(img: GrayImage, stage1_mask: BinaryMask, cfg: PipelineConfig,
               ctx: PredictionContext) -> BinaryMask:
    """Patch-vote refinement at original image resolution.

    Anchors come from the stage-1 mask upscaled to the original resolution;
    patches get per-patch equalization; the voted mask is mapped back to
    the working resolution with nearest-neighbor.
    """
    backend = build_patch_backend(cfg.stage2_backend)
    img = as_gray(img)
    try:
        anchors = resize_mask(as_mask(stage1_mask), img.shape)
        patches = sample_inference_patches(img, anchors, cfg.patch_count,
                                           cfg.patch_size, seed=_derive_seed(cfg.seed, ctx))
        preds = []
        for p in patches:
            p.payload = clahe_equalize(p.payload, cfg.clahe_clip, cfg.clahe_tiles)
            preds.append(backend.predict_patch(p, ctx))
        voted = majority_vote(preds, img.shape, cfg.vote_threshold)
    except NoLineDetected:
        raise
    except Exception as e:  # noqa: BLE001
        raise StageError("stage2", e) from e
    return resize_mask(voted, cfg.resize_target)


def run_stage3(mask: BinaryMask, cfg: PipelineConfig,
               ctx: PredictionContext) -> BinaryMask:
    reconnector = build_reconnector(cfg.stage3_backend)
    try:
        return reconnector.reconnect(as_mask(mask), ctx)
    except Exception as e:  # noqa: BLE001
        raise StageError("stage3", e) from e


def _derive_seed(base: int, ctx: PredictionContext) -> int:
    ss = np.random.SeedSequence(entropy=base, spawn_key=(ctx.index,))
    return int(ss.generate_state(1, np.uint64)[0])


def run_pipeline(img: GrayImage, sample: Sample | None,
                 cfg: PipelineConfig, image_id: str = "", index: int = 0) -> PipelineResult:
    """Chain the enabled stages and locate the tip at original resolution."""
    img = as_gray(img)
    ctx = PredictionContext(image_id=image_id, index=index, sample=sample, seed=cfg.seed)
    times: dict[str, float] = {}

    t0 = time.perf_counter()
    stage1 = run_stage1(img, cfg, ctx)
    times["stage1"] = time.perf_counter() - t0
    final = stage1
    stage2 = stage3 = None
    no_line = not bool(stage1.any())

    if not no_line and cfg.stage2_enabled:
        t0 = time.perf_counter()
        stage2 = run_stage2(img, stage1, cfg, ctx)
        times["stage2"] = time.perf_counter() - t0
        final = stage2
    if not no_line and cfg.stage3_enabled:
        t0 = time.perf_counter()
        stage3 = run_stage3(final, cfg, ctx)
        times["stage3"] = time.perf_counter() - t0
        final = stage3
    if no_line:
        final = np.zeros_like(stage1)

    fullres = resize_mask(final, img.shape) if final.shape != img.shape else final.copy()
    est = locate_tip(fullres)
    est_working = locate_tip(final)
    return PipelineResult(
        image_id=image_id,
        stage1_mask=stage1,
        stage2_mask=stage2,
        stage3_mask=stage3,
        final_mask=final,
        final_mask_fullres=fullres,
        tip=None if est is None else est.point,
        tip_working=None if est_working is None else est_working.point,
        stage_times=times,
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        no_line=no_line,
    )


ABLATION_GRID = [
    ("stage1", False, False),
    ("stage1+2", True, False),
    ("stage1+3", False, True),
    ("stage1+2+3", True, True),
]
