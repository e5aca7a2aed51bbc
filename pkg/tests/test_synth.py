"""Phantom synthesis, stage-1 corruption oracle, and corpus layout."""

import json

import numpy as np
import pytest

from linetrace.errors import ParameterError
from linetrace.raster import (
    Point, binarize, count_components, geodesic_farthest, skeletonize,
)
from linetrace.synth import (
    CorruptionSpec, PhantomSpec, corrupt_mask, corpus_digest, generate_corpus,
    generate_phantom, load_manifest, load_sample,
)

from lt_helpers import straight_line_mask


class TestPhantom:
    def test_gt_is_single_component(self, sample):
        assert count_components(sample.gt_mask) == 1

    def test_tip_is_bottommost_skeleton_endpoint(self, sample):
        skel = skeletonize(sample.gt_mask)
        rows, cols = np.nonzero(skel)
        top = rows.min()
        start = Point(int(top), int(cols[rows == top].min()))
        tip, _ = geodesic_farthest(skel, start)
        assert tip == sample.tip
        assert sample.tip.row == rows.max()

    def test_curve_reaches_top_border(self, sample):
        assert sample.gt_mask[0].any()

    def test_deterministic_per_seed_and_index(self, phantom_spec):
        a = generate_phantom(phantom_spec, index=3)
        b = generate_phantom(phantom_spec, index=3)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.gt_mask, b.gt_mask)
        assert a.tip == b.tip

    def test_different_indices_differ(self, phantom_spec):
        a = generate_phantom(phantom_spec, index=0)
        b = generate_phantom(phantom_spec, index=1)
        assert not np.array_equal(a.gt_mask, b.gt_mask)

    def test_spec_validation(self):
        with pytest.raises(ParameterError):
            PhantomSpec(size=(100, 512))
        with pytest.raises(ParameterError):
            PhantomSpec(thickness_range=(0, 3))
        with pytest.raises(ParameterError):
            PhantomSpec(noise_sigma=-1.0)

    def test_distractors_and_occluders_render(self):
        spec = PhantomSpec(size=(512, 512), distractor_count=3, occluder_count=2,
                           noise_sigma=0.0, seed=5)
        s = generate_phantom(spec)
        flat = generate_phantom(PhantomSpec(size=(512, 512), distractor_count=0,
                                            noise_sigma=0.0, seed=5))
        assert len(np.unique(s.image)) > len(np.unique(flat.image))


class TestCorruption:
    def test_break_disk_splits_line(self):
        m = straight_line_mask(shape=(256, 256), col=128, rows=(0, 200))
        tip = Point(200, 128)
        spec = CorruptionSpec(break_count=(1, 1), break_radius=(20, 20),
                              fp_count=(0, 0), seed=3)
        prob = corrupt_mask(m, tip, spec)
        assert count_components(binarize(prob, 0.01)) >= 2

    def test_tip_pixel_survives(self, sample):
        spec = CorruptionSpec(seed=9)
        prob = corrupt_mask(sample.gt_mask, sample.tip, spec)
        assert prob[sample.tip.row, sample.tip.col] >= 0.5

    def test_no_breaks_no_fp_is_scaled_gt(self, sample):
        spec = CorruptionSpec(break_count=(0, 0), fp_count=(0, 0), seed=0)
        prob = corrupt_mask(sample.gt_mask, sample.tip, spec)
        assert np.array_equal(binarize(prob, 0.01), sample.gt_mask)

    def test_fp_segments_add_pixels(self, sample):
        spec = CorruptionSpec(break_count=(0, 0), fp_count=(2, 2), seed=1)
        prob = corrupt_mask(sample.gt_mask, sample.tip, spec)
        added = binarize(prob, 0.01) & ~sample.gt_mask
        assert added.sum() > 0

    def test_flip_noise_applied(self, sample):
        spec = CorruptionSpec(break_count=(0, 0), fp_count=(0, 0),
                              flip_rate=0.01, seed=2)
        mask = binarize(corrupt_mask(sample.gt_mask, sample.tip, spec), 0.01)
        assert (mask & ~sample.gt_mask).sum() > 0

    def test_tip_off_foreground_rejected(self, sample):
        with pytest.raises(ParameterError):
            corrupt_mask(sample.gt_mask, Point(0, 0) if not sample.gt_mask[0, 0]
                         else Point(1, 0), CorruptionSpec())

    def test_deterministic(self, sample):
        a = corrupt_mask(sample.gt_mask, sample.tip, CorruptionSpec(seed=4), index=2)
        b = corrupt_mask(sample.gt_mask, sample.tip, CorruptionSpec(seed=4), index=2)
        assert np.array_equal(a, b)


class TestCorpus:
    def test_layout_and_manifest(self, tmp_path, phantom_spec):
        manifest = generate_corpus(phantom_spec, 3, tmp_path)
        assert manifest["schema_version"] == 1
        assert len(manifest["samples"]) == 3
        for entry in manifest["samples"]:
            d = tmp_path / entry["id"]
            assert (d / "image.png").exists()
            assert (d / "gt.png").exists()
            meta = json.loads((d / "meta.json").read_text())
            assert meta["tip"] == entry["tip"]

    def test_load_sample_roundtrip(self, tmp_path, phantom_spec):
        manifest = generate_corpus(phantom_spec, 2, tmp_path)
        entry = manifest["samples"][1]
        sample = load_sample(tmp_path, entry, manifest["spacing_mm_px"])
        direct = generate_phantom(phantom_spec, index=1)
        assert np.array_equal(sample.image, direct.image)
        assert np.array_equal(sample.gt_mask, direct.gt_mask)
        assert sample.tip == direct.tip

    def test_manifest_schema_version_checked(self, tmp_path, phantom_spec):
        generate_corpus(phantom_spec, 1, tmp_path)
        m = json.loads((tmp_path / "manifest.json").read_text())
        m["schema_version"] = 99
        (tmp_path / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(ParameterError):
            load_manifest(tmp_path)

    def test_digest_is_stable_and_content_sensitive(self, tmp_path, phantom_spec):
        generate_corpus(phantom_spec, 1, tmp_path / "a")
        generate_corpus(phantom_spec, 1, tmp_path / "b")
        assert corpus_digest(tmp_path / "a") == corpus_digest(tmp_path / "b")
        (tmp_path / "b" / "extra.txt").write_text("x")
        assert corpus_digest(tmp_path / "a") != corpus_digest(tmp_path / "b")

    def test_zero_images_rejected(self, tmp_path, phantom_spec):
        with pytest.raises(ParameterError):
            generate_corpus(phantom_spec, 0, tmp_path)
