"""JSON configuration for the command-line interface.

One schema-versioned document configures every subcommand; unknown keys are
rejected so typos fail loudly instead of silently running with defaults.
Sub-section seeds default to the top-level seed, which in turn can be
overridden by the ``LINETRACE_SEED`` environment variable or a ``--seed``
flag (flag wins over environment, environment wins over file).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .backends import BackendDescriptor, HoughParams
from .errors import ConfigError
from .fragments import FragmentSpec
from .pipeline import PipelineConfig
from .synth import CorruptionSpec, PhantomSpec

CONFIG_SCHEMA_VERSION = 1

SEED_ENV_VAR = "LINETRACE_SEED"


@dataclass(frozen=True)
class CliConfig:
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = 0
    spacing_mm_px: float = 0.14
    min_area: int = 10
    jobs: int | None = None
    n_images: int = 20
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    fragments: FragmentSpec = field(default_factory=FragmentSpec)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    hough: HoughParams = field(default_factory=HoughParams)

    def __post_init__(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported config schema version {self.schema_version!r}")
        if self.n_images < 1:
            raise ConfigError("n_images must be at least 1")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be at least 1 when given")
        if self.spacing_mm_px <= 0:
            raise ConfigError("spacing_mm_px must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _build(cls, data: dict, where: str, seed: int | None):
    names = {f.name for f in fields(cls)}
    _check_keys(data, names, where)
    kwargs = dict(data)
    for key in ("size", "thickness_range", "distractor_thickness",
                "occluder_radius_range", "break_count", "break_radius",
                "fp_count", "fp_length", "fp_thickness", "radius_range",
                "removals_range", "patch_size", "resize_target",
                "clahe_tiles", "tiles"):
        if key in kwargs and isinstance(kwargs[key], list):
            kwargs[key] = tuple(kwargs[key])
    if seed is not None and "seed" in names and "seed" not in data:
        kwargs["seed"] = seed
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad value in {where}: {e}") from e


def _build_backend(data: dict, where: str) -> BackendDescriptor:
    _check_keys(data, {"kind", "params", "exchange_dir"}, where)
    if "kind" not in data:
        raise ConfigError(f"{where} needs a backend 'kind'")
    return BackendDescriptor(kind=data["kind"], params=data.get("params", {}),
                             exchange_dir=data.get("exchange_dir"))


def config_from_dict(data: dict, seed_override: int | None = None) -> CliConfig:
    """Validate a parsed JSON document into a CliConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    top = {f.name for f in fields(CliConfig)}
    _check_keys(data, top, "config")

    seed = data.get("seed", 0)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            seed = int(env)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from e
    if seed_override is not None:
        seed = seed_override

    kwargs: dict = {k: v for k, v in data.items()
                    if k not in ("phantom", "corruption", "fragments",
                                 "pipeline", "hough", "seed")}
    kwargs["seed"] = seed
    kwargs["phantom"] = _build(PhantomSpec, data.get("phantom", {}), "phantom", seed)
    kwargs["corruption"] = _build(CorruptionSpec, data.get("corruption", {}),
                                  "corruption", seed)
    kwargs["fragments"] = _build(FragmentSpec, data.get("fragments", {}),
                                 "fragments", seed)
    pipe = dict(data.get("pipeline", {}))
    for stage in ("stage1_backend", "stage2_backend", "stage3_backend"):
        if stage in pipe:
            pipe[stage] = _build_backend(pipe[stage], f"pipeline.{stage}")
    kwargs["pipeline"] = _build(PipelineConfig, pipe, "pipeline", seed)
    kwargs["hough"] = _build(HoughParams, data.get("hough", {}), "hough", None)
    try:
        return CliConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad config value: {e}") from e


def load_config(path: str | Path | None, seed_override: int | None = None) -> CliConfig:
    """Read a config file; None loads pure defaults (still env-overridable)."""
    if path is None:
        return config_from_dict({}, seed_override)
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return config_from_dict(data, seed_override)


def dump_config(cfg: CliConfig, path: str | Path) -> None:
    """Echo the fully resolved config (defaults filled in) to a file."""
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True,
                                     default=str) + "\n")
