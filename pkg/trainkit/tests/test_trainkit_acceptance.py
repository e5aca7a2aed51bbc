"""Learned-loop acceptance: train both models, serve them over the exchange,
and push a held-out corpus through the pipeline CLI end to end."""

import json
import threading
import time

import cv2
import numpy as np
import pytest
import torch

from trainkit import TrainConfig, train_patch_model, train_reconnect_model
from trainkit.data import load_corpus, load_fragment_pairs, sample_patch_pairs, shrink_mask
from trainkit.serve import ExchangeServer, load_model

from tk_helpers import check, pipeline_cli, synth_corpus

RECONNECT_EDGE = 128


def components(mask, min_area=10):
    n, _, stats, _ = cv2.connectedComponentsWithStats(
        mask.astype(np.uint8), connectivity=8)
    return sum(1 for i in range(1, n)
               if stats[i, cv2.CC_STAT_AREA] >= min_area)


def read_mask(path):
    return (cv2.imread(str(path), cv2.IMREAD_UNCHANGED) >= 128).astype(np.uint8)


def predict_mask(model, mask128):
    with torch.no_grad():
        prob = torch.sigmoid(
            model(torch.from_numpy(mask128.astype(np.float32))[None, None]))
    return (prob[0, 0].numpy() >= 0.5).astype(np.uint8)


@pytest.fixture(scope="module")
def learned_loop(tmp_path_factory):
    """Train on 30 images, serve both models, run + eval 10 held-out images."""
    root = tmp_path_factory.mktemp("s1")
    t0 = time.monotonic()
    train_corpus = root / "corpus_train"
    test_corpus = root / "corpus_test"
    synth_corpus(train_corpus, n=30, seed=21)
    synth_corpus(test_corpus, n=10, seed=22)
    pipeline_cli("fragment", "--config", str(root / "synth_21.json"),
                 "--corpus", str(train_corpus), "--out", str(root / "frags"))
    pipeline_cli("fragment", "--config", str(root / "synth_22.json"),
                 "--corpus", str(test_corpus),
                 "--out", str(root / "frags_test"))

    patch_path = train_patch_model(TrainConfig(
        corpus_dir=str(train_corpus), out_dir=str(root / "patch_model"),
        epochs=30, patience=10, seed=5))
    reconnect_path = train_reconnect_model(TrainConfig(
        corpus_dir=str(train_corpus), frags_dir=str(root / "frags"),
        out_dir=str(root / "reconnect_model"), epochs=25, patience=8,
        bg_weight=0.2, train_size=RECONNECT_EDGE, seed=6))

    exchange = root / "exchange"
    exchange.mkdir()
    server = ExchangeServer(
        exchange,
        models={"patch": load_model(patch_path),
                "reconnect": load_model(reconnect_path)},
        reconnect_size=RECONNECT_EDGE)
    stop = threading.Event()
    thread = threading.Thread(target=server.serve_forever,
                              kwargs={"stop_event": stop}, daemon=True)
    thread.start()
    try:
        run_cfg = root / "run.json"
        run_cfg.write_text(json.dumps({
            "seed": 22,
            "pipeline": {
                "stage1_backend": {"kind": "oracle",
                                   "params": {"blur_sigma": 2.0}},
                "stage2_backend": {"kind": "external",
                                   "exchange_dir": str(exchange)},
                "stage3_backend": {"kind": "external",
                                   "exchange_dir": str(exchange)},
                "patch_count": 40, "patch_size": [64, 64],
                "resize_target": [256, 256],
            },
        }))
        pipeline_cli("run", "--config", str(run_cfg),
                     "--input", str(test_corpus),
                     "--out", str(root / "results"), "--jobs", "1")
        pipeline_cli("eval", "--config", str(run_cfg),
                     "--corpus", str(test_corpus),
                     "--results", str(root / "results"),
                     "--out", str(root / "eval"))
    finally:
        stop.set()
        thread.join(timeout=10)
    return {"root": root, "test_corpus": test_corpus,
            "patch_path": patch_path, "reconnect_path": reconnect_path,
            "elapsed": time.monotonic() - t0}


def test_s1_learned_loop(learned_loop):
    root = learned_loop["root"]
    result_dirs = sorted((root / "results").glob("s*"))
    stage1_rate = np.mean([components(read_mask(d / "stage1.png")) <= 1
                           for d in result_dirs])
    final_rate = np.mean([components(read_mask(d / "final.png")) <= 1
                          for d in result_dirs])
    report = json.loads((root / "eval" / "report.json").read_text())
    elapsed = learned_loop["elapsed"]
    ok = (report["n_images"] == len(result_dirs) == 10
          and final_rate >= stage1_rate + 0.30
          and elapsed < 1800.0)
    check("S1", "learned stage-2/3 over exchange completes run+eval; "
          "no-MFP gain >= 30 points on held-out images; < 30 min",
          ok,
          f"stage-1 {stage1_rate:.0%} -> learned {final_rate:.0%}, "
          f"{elapsed:.0f}s")


def test_patch_model_heldout_dsc(learned_loop):
    model = load_model(learned_loop["patch_path"])
    samples = load_corpus(learned_loop["test_corpus"])
    xs, ys = sample_patch_pairs(samples, 8, 64, seed=99)
    with torch.no_grad():
        prob = torch.sigmoid(model(torch.from_numpy(xs)[:, None]))[:, 0]
    pred = (prob.numpy() >= 0.5).astype(np.uint8)
    dscs = []
    for p, y in zip(pred, ys.astype(np.uint8)):
        inter = int((p & y).sum())
        total = int(p.sum()) + int(y.sum())
        dscs.append(1.0 if total == 0 else 2 * inter / total)
    assert np.mean(dscs) >= 0.7


def test_reconnect_identity_sanity(learned_loop):
    model = load_model(learned_loop["reconnect_path"])
    samples = load_corpus(learned_loop["test_corpus"])
    dscs = []
    for s in samples:
        gt = shrink_mask(s["gt"], RECONNECT_EDGE)
        out = predict_mask(model, gt)
        inter = int((out & gt).sum())
        dscs.append(2 * inter / (int(out.sum()) + int(gt.sum())))
    assert np.mean(dscs) >= 0.9


def test_reconnect_component_non_increase(learned_loop):
    model = load_model(learned_loop["reconnect_path"])
    samples = load_corpus(learned_loop["test_corpus"])
    xs, _ = load_fragment_pairs(samples, learned_loop["root"] / "frags_test",
                                RECONNECT_EDGE)
    ok = sum(components(predict_mask(model, x)) <= components(x)
             for x in xs)
    assert ok / len(xs) >= 0.9
