"""Config loading, schema validation, and environment overrides."""

import pytest
import yaml

from phonemix.config import (ConfigError, ExperimentConfig, dump_config,
                             load_config)


class TestDefaults:
    def test_no_file_gives_defaults(self):
        cfg = load_config(None)
        assert cfg.train.sample_ratios == {"msp": 4, "s2c": 4, "p2t": 2,
                                           "pp": 1, "s2t": 1}
        assert cfg.pipeline.codebook_k == 32
        assert cfg.pipeline.bpe_vocab == 128

    def test_harmonize_syncs_model_with_corpus(self):
        cfg = load_config(None)
        assert cfg.model.feature_dim == cfg.corpus.feature_dim
        assert cfg.model.text_vocab == cfg.corpus.text_vocab_size
        assert cfg.model.phoneme_vocab == cfg.corpus.phoneme_vocab_size
        assert cfg.model.code_vocab == cfg.pipeline.bpe_vocab

    def test_dump_is_loadable(self, tmp_path):
        text = dump_config(ExperimentConfig().harmonize())
        p = tmp_path / "c.yaml"
        p.write_text(text)
        cfg = load_config(p)
        assert cfg == load_config(None)


class TestLoading:
    def test_partial_file_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump({"train": {"batch_size": 3},
                                     "corpus": {"text_vocab_size": 20}}))
        cfg = load_config(p)
        assert cfg.train.batch_size == 3
        assert cfg.corpus.text_vocab_size == 20
        assert cfg.model.text_vocab == 20

    def test_unknown_key_rejected_with_path(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump({"train": {"bogus_key": 1}}))
        with pytest.raises(ConfigError, match="train.bogus_key"):
            load_config(p)

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump({"nonsense": {}}))
        with pytest.raises(ConfigError, match="nonsense"):
            load_config(p)

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("a: [unclosed")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(p)

    def test_list_becomes_tuple(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump({"corpus": {"frames_per_phoneme": [4, 8]}}))
        cfg = load_config(p)
        assert cfg.corpus.frames_per_phoneme == (4, 8)

    def test_seed_override_propagates(self):
        cfg = load_config(None, seed=9)
        assert cfg.corpus.seed == 9
        assert cfg.model.seed == 9
        assert cfg.train.seed == 9
        assert cfg.pipeline.seed == 9

    def test_validation_runs(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump({"model": {"model_dim": 10, "heads": 3}}))
        with pytest.raises(ValueError):
            load_config(p)


class TestEnvOverrides:
    def test_scalar_override(self, monkeypatch):
        monkeypatch.setenv("PHONEMIX_TRAIN_SEED", "5")
        cfg = load_config(None)
        assert cfg.train.seed == 5

    def test_float_override(self, monkeypatch):
        monkeypatch.setenv("PHONEMIX_PIPELINE_LM_ALPHA", "0.7")
        cfg = load_config(None)
        assert cfg.pipeline.lm_alpha == pytest.approx(0.7)

    def test_unknown_env_key_ignored(self, monkeypatch):
        monkeypatch.setenv("PHONEMIX_TRAIN_NO_SUCH_FIELD", "1")
        load_config(None)  # no error

    def test_explicit_seed_beats_env(self, monkeypatch):
        monkeypatch.setenv("PHONEMIX_TRAIN_SEED", "5")
        cfg = load_config(None, seed=2)
        assert cfg.train.seed == 2
