"""Beam search over the text decoder with optional shallow LM fusion.

Per-step score is log p_model(tok) + mu * log p_lm(tok); hypotheses are
ranked with a configurable GNMT-style length penalty, ties broken by token
id so decoding is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lm import NGramLM
from .model import Model


@dataclass
class BeamConfig:
    beam_size: int = 4
    lm_weight: float = 0.0  # mu
    length_penalty: float = 0.0  # GNMT beta; 0 disables
    max_len: int = 24

    def validate(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.lm_weight < 0:
            raise ValueError("lm_weight must be >= 0")


@dataclass
class Hypothesis:
    tokens: list[int]  # without bos/eos
    score: float  # raw cumulative log score
    finished: bool

    def ranked_score(self, beta: float) -> float:
        if beta == 0.0:
            return self.score
        norm = ((5.0 + len(self.tokens)) / 6.0) ** beta
        return self.score / norm


def beam_decode(model: Model, features: np.ndarray,
                lm: NGramLM | None = None,
                cfg: BeamConfig | None = None) -> Hypothesis:
    """Decode one utterance; returns the best hypothesis.

    A hypothesis that hits max_len without eos is returned with
    finished=False if nothing better completed.
    """
    cfg = cfg or BeamConfig()
    cfg.validate()
    if cfg.lm_weight > 0 and lm is None:
        raise ValueError("lm_weight > 0 requires an LM")
    memory = model.encode_speech(features)
    bos = model.cfg.bos("text")
    eos = model.cfg.eos("text")
    V = model.cfg.n_text_symbols

    alive = [([bos], 0.0)]
    done: list[Hypothesis] = []
    for _ in range(cfg.max_len):
        candidates = []
        for prefix, score in alive:
            logp = model.decode_step(np.asarray(prefix), memory, "text")
            if cfg.lm_weight > 0:
                fused = np.full(V, -np.inf)
                lm_lp = lm.next_logprobs(prefix[1:])
                fused[:model.cfg.text_vocab] = lm_lp[:model.cfg.text_vocab]
                fused[eos] = lm_lp[lm.eos]
                step = logp + cfg.lm_weight * fused
            else:
                step = logp
            for tok in range(V):
                if not np.isfinite(step[tok]):
                    continue
                candidates.append((score + float(step[tok]), tok, prefix))
        # deterministic: higher score first, then lower token id
        candidates.sort(key=lambda c: (-c[0], c[1]))
        alive = []
        for cand_score, tok, prefix in candidates:
            if tok == eos:
                done.append(Hypothesis(tokens=prefix[1:], score=cand_score,
                                       finished=True))
            else:
                alive.append((prefix + [tok], cand_score))
            if len(alive) >= cfg.beam_size:
                break
        if not alive:
            break
    if not done and not alive:
        raise RuntimeError("beam search produced no hypotheses")
    pool = done + [Hypothesis(tokens=p[1:], score=s, finished=False)
                   for p, s in alive]
    pool.sort(key=lambda h: (-h.ranked_score(cfg.length_penalty), h.tokens))
    return pool[0]


def greedy_ctc_decode(model: Model, features: np.ndarray) -> np.ndarray:
    """Diagnostic-only: best-path phoneme decode of the PP head."""
    from .units import deduplicate

    H = model.encode_speech(features)
    logits = model.phoneme_logits(H, with_blank=True)
    path = logits.data.argmax(axis=1)
    collapsed = deduplicate(path)
    return collapsed[collapsed != 0]
