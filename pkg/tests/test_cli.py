"""End-to-end CLI coverage: every subcommand plus error and seed handling."""

import json
import os
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from linetrace import imgio
from linetrace.cli import main
from linetrace.config import SEED_ENV_VAR
from linetrace.patchvote import Patch, save_patch_set
from linetrace.raster import Point, count_components

from lt_helpers import straight_line_mask


TEST_CONFIG = {
    "seed": 11,
    "n_images": 2,
    "phantom": {"size": [256, 256], "distractor_count": 0,
                "noise_sigma": 100.0},
    "fragments": {"variants": 2, "removals_range": [1, 2]},
    "pipeline": {
        "stage1_backend": {"kind": "oracle",
                           "params": {"break_count": [1, 2],
                                      "fp_count": [0, 0]}},
        "stage2_backend": {"kind": "oracle"},
        "stage3_backend": {"kind": "rule_reconnect"},
        "patch_count": 30,
        "patch_size": [96, 96],
        "resize_target": [256, 256],
    },
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One shared synth -> fragment -> run chain for the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(TEST_CONFIG))
    runner = CliRunner()
    corpus = root / "corpus"
    results = root / "results"
    r = runner.invoke(main, ["synth", "--config", str(cfg_path),
                             "--out", str(corpus)])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["fragment", "--config", str(cfg_path),
                             "--corpus", str(corpus),
                             "--out", str(root / "frags")])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["run", "--config", str(cfg_path),
                             "--input", str(corpus),
                             "--out", str(results), "--jobs", "1"])
    assert r.exit_code == 0, r.output
    return {"root": root, "config": cfg_path, "corpus": corpus,
            "results": results, "runner": runner}


class TestSynth:
    def test_corpus_layout(self, workspace):
        corpus = workspace["corpus"]
        manifest = json.loads((corpus / "manifest.json").read_text())
        assert manifest["schema_version"] == 1
        assert len(manifest["samples"]) == 2
        for entry in manifest["samples"]:
            sdir = corpus / entry["id"]
            assert (sdir / "image.png").exists()
            assert (sdir / "gt.png").exists()
            assert (sdir / "meta.json").exists()

    def test_resolved_config_echoed(self, workspace):
        data = json.loads((workspace["corpus"] / "config.json").read_text())
        assert data["seed"] == 11
        assert data["pipeline"]["patch_count"] == 30

    def test_n_flag_overrides_config(self, workspace, tmp_path):
        r = workspace["runner"].invoke(main, [
            "synth", "--config", str(workspace["config"]),
            "--out", str(tmp_path / "c"), "--n", "1"])
        assert r.exit_code == 0
        man = json.loads((tmp_path / "c" / "manifest.json").read_text())
        assert len(man["samples"]) == 1


class TestFragment:
    def test_fragment_outputs(self, workspace):
        manifest = json.loads(
            (workspace["corpus"] / "manifest.json").read_text())
        for entry in manifest["samples"]:
            sdir = workspace["root"] / "frags" / entry["id"]
            log = json.loads((sdir / "fragments.json").read_text())
            assert len(log["variants"]) == 2
            for v in log["variants"]:
                p = sdir / f"gt_frag_{v['variant']}.png"
                assert p.exists()
                mask = imgio.read_mask_png(p)
                gt = imgio.read_mask_png(
                    workspace["corpus"] / entry["id"] / "gt.png")
                # variants only remove pixels and every removal is logged
                assert not (mask & ~gt).any()
                assert len(v["disks"]) >= 1


class TestRun:
    def test_per_image_artifacts(self, workspace):
        manifest = json.loads(
            (workspace["corpus"] / "manifest.json").read_text())
        for entry in manifest["samples"]:
            sdir = workspace["results"] / entry["id"]
            for name in ("stage1.png", "stage2.png", "stage3.png",
                         "final.png", "overlay.png", "result.json",
                         "timings.json"):
                assert (sdir / name).exists(), name
            res = json.loads((sdir / "result.json").read_text())
            assert res["id"] == entry["id"]
            assert not res["no_line"]
            assert len(res["tip"]) == 2

    def test_overlay_is_color(self, workspace):
        manifest = json.loads(
            (workspace["corpus"] / "manifest.json").read_text())
        sdir = workspace["results"] / manifest["samples"][0]["id"]
        import cv2
        overlay = cv2.imread(str(sdir / "overlay.png"), cv2.IMREAD_UNCHANGED)
        assert overlay.ndim == 3 and overlay.shape[2] == 3

    def test_parallel_run_matches_serial(self, workspace, tmp_path):
        out2 = tmp_path / "par"
        r = workspace["runner"].invoke(main, [
            "run", "--config", str(workspace["config"]),
            "--input", str(workspace["corpus"]),
            "--out", str(out2), "--jobs", "2"])
        assert r.exit_code == 0, r.output
        manifest = json.loads(
            (workspace["corpus"] / "manifest.json").read_text())
        for entry in manifest["samples"]:
            a = (workspace["results"] / entry["id"] / "final.png").read_bytes()
            b = (out2 / entry["id"] / "final.png").read_bytes()
            assert a == b


class TestEval:
    def test_report_outputs(self, workspace, tmp_path):
        out = tmp_path / "eval"
        r = workspace["runner"].invoke(main, [
            "eval", "--config", str(workspace["config"]),
            "--corpus", str(workspace["corpus"]),
            "--results", str(workspace["results"]), "--out", str(out)])
        assert r.exit_code == 0, r.output
        header = (out / "report.csv").read_text().splitlines()[0]
        assert header.split(",")[:4] == ["id", "rmse_px", "rmse_mm", "dsc"]
        assert (out / "report.json").exists()
        for fig in ("fig_tip_error.png", "fig_dsc.png", "fig_components.png"):
            assert (out / fig).exists()

    def test_missing_results_is_structured_error(self, workspace, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        r = workspace["runner"].invoke(main, [
            "eval", "--corpus", str(workspace["corpus"]),
            "--results", str(empty), "--out", str(tmp_path / "o")])
        assert r.exit_code == 1
        err = json.loads(r.output.strip().splitlines()[-1])
        assert err["error"]["type"] == "ParameterError"


class TestAblate:
    def test_four_rows_and_figure(self, workspace, tmp_path):
        out = tmp_path / "abl"
        r = workspace["runner"].invoke(main, [
            "ablate", "--config", str(workspace["config"]),
            "--corpus", str(workspace["corpus"]), "--out", str(out)])
        assert r.exit_code == 0, r.output
        rows = json.loads((out / "ablation.json").read_text())
        assert [row["stages"] for row in rows] == \
            ["stage1", "stage1+2", "stage1+3", "stage1+2+3"]
        assert (out / "ablation.csv").exists()
        assert (out / "fig_ablation.png").exists()


class TestVoteAndReconnect:
    def test_vote_command(self, tmp_path):
        bar = straight_line_mask(shape=(64, 64), col=32, rows=(5, 60))
        patches = [Patch(Point(0, 0), bar[:32]), Patch(Point(32, 0), bar[32:])]
        pdir = tmp_path / "patches"
        save_patch_set(patches, (64, 64), pdir)
        out = tmp_path / "voted.png"
        r = CliRunner().invoke(main, ["vote", "--patches", str(pdir),
                                      "--out", str(out)])
        assert r.exit_code == 0, r.output
        assert np.array_equal(imgio.read_mask_png(out), bar)

    def test_reconnect_command(self, tmp_path):
        m = np.zeros((128, 128), np.uint8)
        m[10:41, 64] = 1
        m[60:101, 64] = 1
        src = tmp_path / "broken.png"
        imgio.write_mask_png(src, m)
        out = tmp_path / "fixed.png"
        r = CliRunner().invoke(main, ["reconnect", "--input", str(src),
                                      "--out", str(out), "--max-gap", "40"])
        assert r.exit_code == 0, r.output
        assert count_components(imgio.read_mask_png(out)) == 1


class TestSeedHandling:
    def test_env_seed_changes_corpus(self, workspace, tmp_path):
        runner = workspace["runner"]
        env = dict(os.environ)
        env[SEED_ENV_VAR] = "555"
        r = runner.invoke(main, ["synth", "--config", str(workspace["config"]),
                                 "--out", str(tmp_path / "env")], env=env)
        assert r.exit_code == 0, r.output
        data = json.loads((tmp_path / "env" / "config.json").read_text())
        assert data["seed"] == 555
        a = next((tmp_path / "env").glob("*/gt.png")).read_bytes()
        b = next(workspace["corpus"].glob("*/gt.png")).read_bytes()
        assert a != b

    def test_seed_flag_beats_env(self, workspace, tmp_path):
        env = dict(os.environ)
        env[SEED_ENV_VAR] = "555"
        r = workspace["runner"].invoke(
            main, ["synth", "--config", str(workspace["config"]),
                   "--seed", "11", "--out", str(tmp_path / "flag")], env=env)
        assert r.exit_code == 0, r.output
        assert json.loads(
            (tmp_path / "flag" / "config.json").read_text())["seed"] == 11
        for p in sorted((tmp_path / "flag").glob("*/gt.png")):
            rel = p.relative_to(tmp_path / "flag")
            assert p.read_bytes() == (workspace["corpus"] / rel).read_bytes()

    def test_synth_is_deterministic(self, workspace, tmp_path):
        r = workspace["runner"].invoke(
            main, ["synth", "--config", str(workspace["config"]),
                   "--out", str(tmp_path / "again")])
        assert r.exit_code == 0, r.output
        for p in sorted((tmp_path / "again").glob("*/*.png")):
            rel = p.relative_to(tmp_path / "again")
            assert p.read_bytes() == (workspace["corpus"] / rel).read_bytes()
