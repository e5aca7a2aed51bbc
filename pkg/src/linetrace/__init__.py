"""linetrace: multi-stage repair of fragmented thin-line segmentations.

A library and CLI that takes a (possibly fragmented) line segmentation,
refines it with patch-based majority voting, reconnects broken fragments,
and localizes the line tip, together with a seeded synthetic phantom
corpus and an evaluation harness.
"""

from .raster import (  # noqa: F401
    BinaryMask, GrayImage, Point, ProbMap, binarize, clahe_equalize,
    connected_components, count_components, geodesic_farthest, resize_image,
    resize_mask, skeletonize,
)
from .synth import CorruptionSpec, PhantomSpec, Sample, corrupt_mask, generate_corpus, generate_phantom  # noqa: F401
from .patchvote import Patch, majority_vote, sample_inference_patches, sample_training_patches  # noqa: F401
from .fragments import FragmentSpec, FragmentVariant, generate_fragments  # noqa: F401
from .backends import BackendDescriptor, HoughParams, hough_postprocess, rule_reconnect  # noqa: F401
from .pipeline import PipelineConfig, PipelineResult, run_pipeline  # noqa: F401
from .metrics import EvalReport, TipEstimate, dsc, evaluate_corpus, locate_tip, mfp_stats, tip_rmse  # noqa: F401
from .config import CliConfig, SEED_ENV_VAR, config_from_dict, load_config  # noqa: F401

__version__ = "0.1.0"
