"""Synthetic corpus generation and manifest/feature I/O."""

import json

import numpy as np
import pytest

from phonemix.corpus import (Manifest, ManifestEntry, ManifestError,
                             MissingIdError, SyntheticCorpusConfig,
                             load_manifest, load_utterance, read_features,
                             save_manifest, synth_corpus, write_features)
from phonemix.lexicon import Lexicon, text_to_phonemes


class TestFeatureFiles:
    def test_roundtrip(self, tmp_path):
        feats = np.random.default_rng(0).normal(size=(17, 5)).astype(np.float32)
        p = tmp_path / "x.bin"
        write_features(p, feats)
        again = read_features(p)
        assert again.dtype == np.float32
        assert np.array_equal(again, feats)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ManifestError, match="magic"):
            read_features(p)

    def test_truncated_payload(self, tmp_path):
        feats = np.ones((4, 3), dtype=np.float32)
        p = tmp_path / "x.bin"
        write_features(p, feats)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ManifestError, match="truncated"):
            read_features(p)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        entries = [
            ManifestEntry(id="a", kind="text", split="train", text=[1, 2]),
            ManifestEntry(id="b", kind="speech", split="dev", features="f/b.bin"),
            ManifestEntry(id="c", kind="paired", split="test", text=[3],
                          features="f/c.bin"),
        ]
        m = Manifest(entries=entries)
        save_manifest(m, tmp_path / "m.jsonl")
        again = load_manifest(tmp_path / "m.jsonl")
        assert again.ids() == ["a", "b", "c"]
        assert again.by_id["a"].text == [1, 2]
        assert again.by_id["c"].features == "f/c.bin"

    def test_ids_filtering(self):
        m = Manifest(entries=[
            ManifestEntry(id="a", kind="text", split="train", text=[1]),
            ManifestEntry(id="b", kind="text", split="dev", text=[1]),
            ManifestEntry(id="c", kind="speech", split="train", features="x"),
        ])
        assert m.ids(kind="text") == ["a", "b"]
        assert m.ids(kind="text", split="train") == ["a"]
        assert m.ids(split="train") == ["a", "c"]

    def test_duplicate_id_rejected(self):
        with pytest.raises(ManifestError, match="duplicate"):
            Manifest(entries=[
                ManifestEntry(id="a", kind="text", split="train", text=[1]),
                ManifestEntry(id="a", kind="text", split="dev", text=[2]),
            ])

    def test_bad_record_reports_line_number(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(json.dumps({"format": "phonemix-manifest", "version": 1})
                     + "\n" + json.dumps({"id": "a", "kind": "text",
                                          "split": "train", "text": [1]})
                     + "\n{broken\n")
        with pytest.raises(ManifestError, match=":3"):
            load_manifest(p)

    def test_wrong_format_header(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(json.dumps({"format": "other", "version": 1}) + "\n")
        with pytest.raises(ManifestError):
            load_manifest(p)

    def test_paired_needs_both_payloads(self):
        e = ManifestEntry(id="x", kind="paired", split="train", text=[1])
        with pytest.raises(ManifestError):
            e.validate()

    def test_missing_id(self, tiny_corpus):
        _, manifest, _ = tiny_corpus
        with pytest.raises(MissingIdError):
            load_utterance(manifest, "no-such-id")


class TestSynthesis:
    def test_counts_and_kinds(self, tiny_corpus):
        cfg, manifest, _ = tiny_corpus
        assert len(manifest.ids(kind="text")) == cfg.n_text_utts
        assert len(manifest.ids(kind="speech")) == cfg.n_unlabeled_speech_utts
        assert len(manifest.ids(kind="paired")) == cfg.n_paired_utts

    def test_utterance_lengths_in_range(self, tiny_corpus):
        cfg, manifest, _ = tiny_corpus
        for uid in manifest.ids(kind="text")[:50]:
            utt = load_utterance(manifest, uid)
            assert cfg.min_utt_len <= len(utt.text) <= cfg.max_utt_len

    def test_frame_counts_match_phoneme_budget(self, tiny_corpus):
        cfg, manifest, root = tiny_corpus
        lex = Lexicon.load(root / "lexicon.tsv")
        lo, hi = cfg.frames_per_phoneme
        for uid in manifest.ids(kind="paired")[:20]:
            utt = load_utterance(manifest, uid)
            n_ph = len(text_to_phonemes(lex, utt.text))
            assert lo * n_ph <= utt.features.shape[0] <= hi * n_ph
            assert utt.features.shape[1] == cfg.feature_dim

    def test_deterministic_regeneration(self, tiny_corpus, tmp_path):
        cfg, manifest, root = tiny_corpus
        again = synth_corpus(cfg, tmp_path / "copy")
        assert [e.id for e in again.entries] == [e.id for e in manifest.entries]
        uid = manifest.ids(kind="paired")[0]
        a = load_utterance(manifest, uid)
        b = load_utterance(again, uid)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.text, b.text)
        assert ((tmp_path / "copy" / "lexicon.tsv").read_text()
                == (root / "lexicon.tsv").read_text())

    def test_splits_present(self, tiny_corpus):
        _, manifest, _ = tiny_corpus
        for split in ("train", "dev"):
            assert manifest.ids(kind="paired", split=split)

    def test_validation_rejects_bad_ranges(self):
        with pytest.raises(ValueError):
            SyntheticCorpusConfig(frames_per_phoneme=(5, 2)).validate()
        with pytest.raises(ValueError):
            SyntheticCorpusConfig(min_utt_len=8, max_utt_len=4).validate()
        with pytest.raises(ValueError):
            SyntheticCorpusConfig(phoneme_vocab_size=50,
                                  text_vocab_size=40).validate()
