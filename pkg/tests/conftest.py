import numpy as np
import pytest

from phonemix.corpus import SyntheticCorpusConfig, load_utterance, synth_corpus
from phonemix.lexicon import Lexicon
from phonemix.model import Model, ModelConfig
from phonemix.trainer import Resources
from phonemix.units import (TeacherFeaturizer, bpe_train, deduplicate,
                            kmeans_fit, quantize)

TINY = SyntheticCorpusConfig(
    seed=0,
    n_text_utts=200,
    n_unlabeled_speech_utts=60,
    n_paired_utts=50,
    text_vocab_size=12,
    phoneme_vocab_size=6,
    feature_dim=8,
    min_utt_len=3,
    max_utt_len=6,
    dev_fraction=0.15,
    test_fraction=0.05,
)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = synth_corpus(TINY, root)
    return TINY, manifest, root


@pytest.fixture(scope="session")
def tiny_resources(tiny_corpus):
    cfg, manifest, root = tiny_corpus
    lexicon = Lexicon.load(root / "lexicon.tsv")
    featurizer = TeacherFeaturizer(feature_dim=cfg.feature_dim, out_dim=8,
                                   window=2, seed=0)
    ids = manifest.ids(kind="speech", split="train")[:40]
    vecs = np.concatenate([featurizer.featurize(load_utterance(manifest, u).features)
                           for u in ids])
    codebook = kmeans_fit(vecs, K=8, seed=0)
    units = [deduplicate(quantize(codebook,
                                  featurizer.featurize(load_utterance(manifest, u).features)))
             for u in ids]
    bpe = bpe_train(units, target_vocab=24, base_vocab=8)
    return Resources(manifest=manifest, lexicon=lexicon, featurizer=featurizer,
                     codebook=codebook, bpe=bpe)


@pytest.fixture(scope="session")
def tiny_model_cfg(tiny_resources):
    return ModelConfig(
        feature_dim=TINY.feature_dim,
        model_dim=16,
        ffn_dim=32,
        heads=2,
        layers_speech_enc=1,
        layers_shared_enc=1,
        layers_dec=1,
        phoneme_vocab=TINY.phoneme_vocab_size,
        text_vocab=TINY.text_vocab_size,
        code_vocab=tiny_resources.bpe.vocab_size,
        dropout=0.1,
        seed=0,
    )


@pytest.fixture
def tiny_model(tiny_model_cfg):
    return Model(tiny_model_cfg)
