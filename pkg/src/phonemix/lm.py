"""Toy external language model: order-n count-based with add-alpha smoothing.

Exposes next-token log-probs over text tokens plus an end-of-sentence
symbol, the interface beam decoding fuses against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LM_VERSION = 1
BOS = -1  # context padding symbol, never predicted


@dataclass
class NGramLM:
    vocab_size: int  # text tokens 0..V-1; index V is eos
    order: int = 3
    alpha: float = 0.1
    counts: dict = field(default_factory=dict, repr=False)  # ctx tuple -> {tok: n}

    @property
    def eos(self) -> int:
        return self.vocab_size

    @property
    def n_events(self) -> int:
        return self.vocab_size + 1

    def _context(self, prefix) -> tuple:
        ctx = [BOS] * (self.order - 1) + [int(t) for t in prefix]
        return tuple(ctx[len(ctx) - (self.order - 1):])

    def next_logprobs(self, prefix) -> np.ndarray:
        """Log-probs over tokens 0..V-1 plus eos at index V."""
        ctx_counts = self.counts.get(self._context(prefix), {})
        total = sum(ctx_counts.values())
        probs = np.full(self.n_events, self.alpha)
        for tok, n in ctx_counts.items():
            probs[tok] += n
        probs /= total + self.alpha * self.n_events
        with np.errstate(divide="ignore"):  # alpha=0 legitimately yields -inf
            return np.log(probs)

    def sequence_logprob(self, seq) -> float:
        seq = list(map(int, seq)) + [self.eos]
        lp = 0.0
        for i, tok in enumerate(seq):
            lp += float(self.next_logprobs(seq[:i])[tok])
        return lp

    def perplexity(self, corpus) -> float:
        total_lp, total_tok = 0.0, 0
        for seq in corpus:
            total_lp += self.sequence_logprob(seq)
            total_tok += len(seq) + 1  # eos counts as an event
        return float(np.exp(-total_lp / total_tok))

    def save(self, path):
        obj = {
            "version": LM_VERSION,
            "vocab_size": self.vocab_size,
            "order": self.order,
            "alpha": self.alpha,
            "counts": {" ".join(map(str, ctx)): cnt
                       for ctx, cnt in self.counts.items()},
        }
        Path(path).write_text(json.dumps(obj))

    @classmethod
    def load(cls, path) -> "NGramLM":
        obj = json.loads(Path(path).read_text())
        if obj.get("version") != LM_VERSION:
            raise ValueError(f"unsupported lm version {obj.get('version')}")
        counts = {tuple(map(int, ctx.split())): {int(t): n for t, n in cnt.items()}
                  for ctx, cnt in obj["counts"].items()}
        return cls(vocab_size=obj["vocab_size"], order=obj["order"],
                   alpha=obj["alpha"], counts=counts)


def train_lm(corpus, vocab_size: int, order: int = 3,
             alpha: float = 0.1) -> NGramLM:
    """Count n-grams over the text corpus (eos-terminated)."""
    seqs = list(corpus)
    if not seqs:
        raise ValueError("empty corpus")
    lm = NGramLM(vocab_size=vocab_size, order=order, alpha=alpha)
    for seq in seqs:
        events = list(map(int, seq)) + [lm.eos]
        padded = [BOS] * (order - 1) + events
        for i, tok in enumerate(events):
            ctx = tuple(padded[i:i + order - 1])
            slot = lm.counts.setdefault(ctx, {})
            slot[tok] = slot.get(tok, 0) + 1
    return lm
