"""CLI configuration: schema, unknown keys, seed precedence."""

import json

import pytest

from linetrace.config import (
    CliConfig, SEED_ENV_VAR, config_from_dict, dump_config, load_config,
)
from linetrace.errors import ConfigError


class TestSchema:
    def test_defaults_load(self):
        cfg = config_from_dict({})
        assert cfg.schema_version == 1
        assert cfg.pipeline.stage1_threshold == 0.01

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_dict({"spleling_mistake": 1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="phantom"):
            config_from_dict({"phantom": {"noise": 1}})

    def test_wrong_schema_version_rejected(self):
        with pytest.raises(ConfigError, match="schema version"):
            config_from_dict({"schema_version": 2})

    def test_lists_become_tuples(self):
        cfg = config_from_dict({"pipeline": {"patch_size": [64, 64]}})
        assert cfg.pipeline.patch_size == (64, 64)

    def test_backend_descriptor_parsing(self):
        cfg = config_from_dict({"pipeline": {
            "stage1_backend": {"kind": "oracle", "params": {"blur_sigma": 2.0}}}})
        assert cfg.pipeline.stage1_backend.kind == "oracle"
        assert cfg.pipeline.stage1_backend.params["blur_sigma"] == 2.0

    def test_backend_without_kind_rejected(self):
        with pytest.raises(ConfigError, match="kind"):
            config_from_dict({"pipeline": {"stage1_backend": {"params": {}}}})

    def test_value_validation_propagates(self):
        with pytest.raises(ConfigError):
            config_from_dict({"jobs": 0})
        with pytest.raises(ConfigError):
            config_from_dict({"n_images": 0})


class TestSeedPrecedence:
    def test_config_seed_fills_subsections(self):
        cfg = config_from_dict({"seed": 42})
        assert cfg.seed == 42
        assert cfg.phantom.seed == 42
        assert cfg.fragments.seed == 42
        assert cfg.pipeline.seed == 42

    def test_explicit_subsection_seed_wins(self):
        cfg = config_from_dict({"seed": 42, "phantom": {"seed": 7}})
        assert cfg.phantom.seed == 7
        assert cfg.fragments.seed == 42

    def test_env_overrides_config(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "99")
        cfg = config_from_dict({"seed": 42})
        assert cfg.seed == 99 and cfg.phantom.seed == 99

    def test_flag_overrides_env(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "99")
        cfg = config_from_dict({"seed": 42}, seed_override=5)
        assert cfg.seed == 5

    def test_bad_env_seed_rejected(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "not-a-number")
        with pytest.raises(ConfigError):
            config_from_dict({})


class TestFileIo:
    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_load_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(p)

    def test_dump_echoes_resolved_defaults(self, tmp_path):
        cfg = config_from_dict({"seed": 3})
        out = tmp_path / "resolved.json"
        dump_config(cfg, out)
        data = json.loads(out.read_text())
        assert data["seed"] == 3
        assert data["pipeline"]["vote_threshold"] == 0.7
        assert data["phantom"]["seed"] == 3

    def test_none_path_gives_defaults(self):
        assert isinstance(load_config(None), CliConfig)
