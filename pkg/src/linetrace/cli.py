"""Batch command-line surface for the line-repair pipeline.

Subcommands cover corpus synthesis, fragment generation, pipeline runs,
evaluation with figures, stage ablation, and standalone voting /
reconnection.  A single JSON config document drives everything; flags only
override the seed and paths.  Failures exit nonzero with a structured JSON
error on stderr.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import functools
import json
import os
from pathlib import Path

import click
import numpy as np

from . import imgio
from .backends import rule_reconnect
from .config import CliConfig, dump_config, load_config
from .errors import LinetraceError, ParameterError
from .fragments import generate_fragments
from .metrics import evaluate_rows, make_row, write_report
from .patchvote import load_patch_set, majority_vote
from .pipeline import ABLATION_GRID, PipelineConfig, run_pipeline
from .render import render_ablation_figure, render_overlay, render_report_figures
from .synth import generate_corpus, load_manifest, load_sample


def _guarded(fn):
    """Convert library errors into a structured JSON failure + exit 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except LinetraceError as e:
            payload = {"error": {"type": type(e).__name__, "message": str(e)}}
            click.echo(json.dumps(payload, sort_keys=True), err=True)
            raise SystemExit(1)
    return wrapper


def _prepare_out(cfg: CliConfig, out: str) -> Path:
    """Create the output dir and echo the resolved config before any work."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out_dir / "config.json")
    return out_dir


def _spawn_seed(base: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=base, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


@click.group()
def main():
    """Repair fragmented thin-line segmentations and locate the line tip."""


_config_opt = click.option("--config", "config_path", type=click.Path(), default=None,
                           help="JSON config file (defaults used when omitted).")
_seed_opt = click.option("--seed", type=int, default=None,
                         help="Override the config seed.")


@main.command()
@_config_opt
@_seed_opt
@click.option("--out", required=True, type=click.Path())
@click.option("--n", type=int, default=None, help="Number of images (overrides config).")
@_guarded
def synth(config_path, seed, out, n):
    """Generate a synthetic phantom corpus."""
    cfg = load_config(config_path, seed)
    out_dir = _prepare_out(cfg, out)
    manifest = generate_corpus(cfg.phantom, n if n is not None else cfg.n_images, out_dir)
    click.echo(f"wrote {len(manifest['samples'])} samples to {out_dir}")


@main.command()
@_config_opt
@_seed_opt
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_guarded
def fragment(config_path, seed, corpus, out):
    """Write broken variants of each corpus ground truth."""
    cfg = load_config(config_path, seed)
    out_dir = _prepare_out(cfg, out)
    manifest = load_manifest(corpus)
    for i, entry in enumerate(manifest["samples"]):
        sample = load_sample(corpus, entry, manifest["spacing_mm_px"])
        fspec = dataclasses.replace(cfg.fragments,
                                    seed=_spawn_seed(cfg.fragments.seed, i))
        variants = generate_fragments(sample.gt_mask, sample.tip, fspec)
        sdir = out_dir / entry["id"]
        sdir.mkdir(parents=True, exist_ok=True)
        log = []
        for vi, variant in enumerate(variants):
            imgio.write_mask_png(sdir / f"gt_frag_{vi}.png", variant.mask)
            log.append({"variant": vi,
                        "disks": [[r, c, rad] for r, c, rad in variant.disks]})
        (sdir / "fragments.json").write_text(json.dumps(
            {"id": entry["id"], "seed": fspec.seed, "variants": log},
            indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote fragment variants for {len(manifest['samples'])} images to {out_dir}")


def _run_one(corpus: str, entry: dict, spacing: float, index: int,
             pipeline_cfg: PipelineConfig, min_area: int, out_dir: str) -> str:
    sample = load_sample(corpus, entry, spacing)
    result = run_pipeline(sample.image, sample, pipeline_cfg,
                          image_id=entry["id"], index=index)
    sdir = Path(out_dir) / entry["id"]
    sdir.mkdir(parents=True, exist_ok=True)
    imgio.write_mask_png(sdir / "stage1.png", result.stage1_mask)
    if result.stage2_mask is not None:
        imgio.write_mask_png(sdir / "stage2.png", result.stage2_mask)
    if result.stage3_mask is not None:
        imgio.write_mask_png(sdir / "stage3.png", result.stage3_mask)
    imgio.write_mask_png(sdir / "final.png", result.final_mask_fullres)
    render_overlay(sample.image, sample.gt_mask, result.final_mask_fullres,
                   sample.tip, result.tip, sdir / "overlay.png")
    (sdir / "result.json").write_text(json.dumps({
        "id": entry["id"],
        "tip": None if result.tip is None else [result.tip.row, result.tip.col],
        "tip_working": None if result.tip_working is None
                       else [result.tip_working.row, result.tip_working.col],
        "no_line": result.no_line,
        "config_hash": result.config_hash,
        "seed": result.seed,
    }, indent=2, sort_keys=True) + "\n")
    # timings are wall-clock and vary between reruns; everything else above
    # is byte-reproducible, so they live in their own file
    (sdir / "timings.json").write_text(json.dumps(
        result.stage_times, indent=2, sort_keys=True) + "\n")
    return entry["id"]


@main.command()
@_config_opt
@_seed_opt
@click.option("--input", "corpus", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--jobs", type=int, default=None,
              help="Image-level parallelism (default: config, then all cores).")
@_guarded
def run(config_path, seed, corpus, out, jobs):
    """Run the pipeline over a corpus, writing per-image artifacts."""
    cfg = load_config(config_path, seed)
    out_dir = _prepare_out(cfg, out)
    manifest = load_manifest(corpus)
    spacing = manifest["spacing_mm_px"]
    n_jobs = jobs or cfg.jobs or os.cpu_count() or 1
    tasks = [(corpus, entry, spacing, i, cfg.pipeline, cfg.min_area, str(out_dir))
             for i, entry in enumerate(manifest["samples"])]
    if n_jobs == 1:
        for t in tasks:
            _run_one(*t)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_run_one, *t) for t in tasks]
            for f in futures:
                f.result()
    click.echo(f"processed {len(tasks)} images into {out_dir}")


def _rows_from_results(corpus: str, results: str, cfg: CliConfig):
    manifest = load_manifest(corpus)
    rows = []
    for entry in manifest["samples"]:
        rdir = Path(results) / entry["id"]
        final = rdir / "final.png"
        if not final.exists():
            raise ParameterError(f"no pipeline output for {entry['id']} under {results}")
        sample = load_sample(corpus, entry, manifest["spacing_mm_px"])
        pred = imgio.read_mask_png(final)
        timings = {}
        tpath = rdir / "timings.json"
        if tpath.exists():
            timings = json.loads(tpath.read_text())
        rows.append(make_row(entry["id"], sample.gt_mask, sample.tip, pred,
                             manifest["spacing_mm_px"], cfg.min_area, timings))
    return rows, manifest["spacing_mm_px"]


@main.command("eval")
@_config_opt
@_seed_opt
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--results", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_guarded
def eval_cmd(config_path, seed, corpus, results, out):
    """Score pipeline outputs against the corpus ground truth."""
    cfg = load_config(config_path, seed)
    out_dir = _prepare_out(cfg, out)
    rows, spacing = _rows_from_results(corpus, results, cfg)
    report = evaluate_rows(rows, spacing)
    write_report(report, out_dir / "report.csv", out_dir / "report.json",
                 cfg.pipeline.config_hash())
    render_report_figures(report, out_dir)
    click.echo(f"evaluated {report.n_images} images "
               f"(no-MFP rate {report.no_mfp_rate:.0%}) into {out_dir}")


@main.command()
@_config_opt
@_seed_opt
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--jobs", type=int, default=None)
@_guarded
def ablate(config_path, seed, corpus, out, jobs):
    """Evaluate every stage combination {1}, {1,2}, {1,3}, {1,2,3}."""
    cfg = load_config(config_path, seed)
    out_dir = _prepare_out(cfg, out)
    manifest = load_manifest(corpus)
    spacing = manifest["spacing_mm_px"]
    n_jobs = jobs or cfg.jobs or 1
    summary = []
    for label, s2, s3 in ABLATION_GRID:
        pcfg = cfg.pipeline.with_stages(s2, s3)

        def one(args):
            i, entry = args
            sample = load_sample(corpus, entry, spacing)
            result = run_pipeline(sample.image, sample, pcfg,
                                  image_id=entry["id"], index=i)
            return make_row(entry["id"], sample.gt_mask, sample.tip,
                            result.final_mask_fullres, spacing, cfg.min_area,
                            result.stage_times)

        items = list(enumerate(manifest["samples"]))
        if n_jobs == 1:
            rows = [one(it) for it in items]
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=n_jobs) as pool:
                rows = list(pool.map(one, items))
        report = evaluate_rows(rows, spacing)
        summary.append({
            "stages": label,
            "rmse_mean_px": report.rmse_mean_px,
            "rmse_mean_mm": report.rmse_mean_mm,
            "no_mfp_rate": report.no_mfp_rate,
            "dsc_mean": report.dsc_mean,
            "n_missed": report.n_missed,
        })
    with open(out_dir / "ablation.csv", "w", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=list(summary[0].keys()))
        wr.writeheader()
        wr.writerows(summary)
    (out_dir / "ablation.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    render_ablation_figure(
        [s["stages"] for s in summary],
        [s["rmse_mean_px"] if s["rmse_mean_px"] is not None else 0.0 for s in summary],
        out_dir / "fig_ablation.png")
    click.echo(f"wrote {len(summary)}-row ablation report to {out_dir}")


@main.command()
@click.option("--patches", required=True, type=click.Path(exists=True),
              help="Directory with patch PNGs + offsets.json.")
@click.option("--out", required=True, type=click.Path())
@click.option("--threshold", type=float, default=0.7, show_default=True)
@_guarded
def vote(patches, out, threshold):
    """Majority-vote a serialized patch set into one mask."""
    patch_list, parent_shape = load_patch_set(patches)
    mask = majority_vote(patch_list, parent_shape, threshold)
    imgio.write_mask_png(out, mask)
    click.echo(f"voted {len(patch_list)} patches into {out}")


@main.command()
@click.option("--input", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--max-gap", type=float, default=210.0, show_default=True)
@click.option("--max-turn", type=float, default=100.0, show_default=True)
@click.option("--thickness", type=int, default=3, show_default=True)
@click.option("--noise-floor", type=int, default=10, show_default=True)
@_guarded
def reconnect(in_path, out, max_gap, max_turn, thickness, noise_floor):
    """Reconnect the fragments of a single mask (standalone stage 3)."""
    mask = imgio.read_mask_png(in_path)
    repaired = rule_reconnect(mask, max_gap=max_gap, max_turn=max_turn,
                              thickness=thickness, noise_floor=noise_floor)
    imgio.write_mask_png(out, repaired)
    click.echo(f"wrote reconnected mask to {out}")


if __name__ == "__main__":
    main()
