"""Text-to-phoneme lexicon and phoneme-sequence noising.

Text tokens map many-to-one onto phoneme ids 1..I (homophones).  Special
ids live above the phoneme range; class 0 is reserved for the CTC blank so
it never collides with a phoneme.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class UnknownTokenError(ValueError):
    def __init__(self, token: int, position: int):
        super().__init__(f"unknown text token {token} at position {position}")
        self.token = token
        self.position = position


@dataclass
class Lexicon:
    text_to_phoneme: np.ndarray  # (text_vocab,) int, values in 1..I
    phoneme_vocab_size: int  # I

    @property
    def text_vocab_size(self) -> int:
        return len(self.text_to_phoneme)

    # special ids, outside 1..I (0 is the CTC blank)
    @property
    def mask_id(self) -> int:
        return self.phoneme_vocab_size + 1

    @property
    def pad_id(self) -> int:
        return self.phoneme_vocab_size + 2

    @property
    def bos_id(self) -> int:
        return self.phoneme_vocab_size + 3

    @property
    def eos_id(self) -> int:
        return self.phoneme_vocab_size + 4

    @property
    def n_symbols(self) -> int:
        """Total embedding rows: blank + phonemes + 4 specials."""
        return self.phoneme_vocab_size + 5

    def validate(self):
        m = self.text_to_phoneme
        if m.min() < 1 or m.max() > self.phoneme_vocab_size:
            raise ValueError("phoneme ids must lie in 1..I")
        if len(np.unique(m)) != self.phoneme_vocab_size:
            raise ValueError("mapping must cover every phoneme")

    def save(self, path):
        with open(path, "w") as f:
            for tok, ph in enumerate(self.text_to_phoneme):
                f.write(f"{tok}\t{int(ph)}\n")

    @classmethod
    def load(cls, path) -> "Lexicon":
        pairs = []
        for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
            try:
                tok, ph = line.split("\t")
                pairs.append((int(tok), int(ph)))
            except ValueError as e:
                raise ValueError(f"{path}:{ln}: bad lexicon line {line!r}") from e
        mapping = np.zeros(len(pairs), dtype=np.int64)
        for tok, ph in pairs:
            mapping[tok] = ph
        return cls(text_to_phoneme=mapping, phoneme_vocab_size=int(mapping.max()))


def build_lexicon(text_vocab_size: int, phoneme_vocab_size: int,
                  homophone_rate: float, seed: int) -> Lexicon:
    """Map ceil(rate * V) tokens onto already-used phonemes; the rest cover
    all phonemes cyclically so the map stays total and onto."""
    V, I = text_vocab_size, phoneme_vocab_size
    n_homophones = int(np.ceil(homophone_rate * V))
    n_base = V - n_homophones
    if n_base < I:
        raise ValueError(
            f"text vocab {V} with homophone rate {homophone_rate} leaves "
            f"{n_base} base tokens, fewer than {I} phonemes")
    rng = np.random.default_rng([seed, 0xE1])
    mapping = np.zeros(V, dtype=np.int64)
    mapping[:n_base] = np.arange(n_base) % I + 1
    mapping[n_base:] = rng.integers(1, I + 1, size=n_homophones)
    lex = Lexicon(text_to_phoneme=mapping, phoneme_vocab_size=I)
    lex.validate()
    return lex


def text_to_phonemes(lex: Lexicon, text) -> np.ndarray:
    text = np.asarray(text, dtype=np.int64)
    if text.size == 0:
        return text.copy()
    bad = (text < 0) | (text >= lex.text_vocab_size)
    if bad.any():
        pos = int(np.argmax(bad))
        raise UnknownTokenError(int(text[pos]), pos)
    return lex.text_to_phoneme[text]


@dataclass
class NoiseConfig:
    mask_ratio: float = 0.30
    max_span: int = 3
    replace_fraction: float = 0.1
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError("mask_ratio must be in [0, 1]")
        if self.max_span < 1:
            raise ValueError("max_span must be >= 1")


def noise_phonemes(seq, cfg: NoiseConfig, lex: Lexicon,
                   rng: np.random.Generator | None = None):
    """Corrupt spans until exactly ceil(mask_ratio * len) positions are hit.

    Span lengths are geometric, capped at max_span and at the remaining
    budget, so the corrupted fraction is the budget every time.  Corrupted
    positions become mask_id, or a uniform random phoneme for a
    replace_fraction share of them.
    """
    cfg.validate()
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size == 0:
        raise ValueError("cannot noise an empty sequence")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = len(seq)
    corrupted = np.zeros(n, dtype=bool)
    budget = int(np.ceil(cfg.mask_ratio * n))
    while corrupted.sum() < budget:
        start = int(rng.integers(n))
        span = min(int(rng.geometric(0.5)), cfg.max_span)
        end = min(start + span, n)
        fresh = np.flatnonzero(~corrupted[start:end]) + start
        room = budget - int(corrupted.sum())
        corrupted[fresh[:room]] = True
    noisy = seq.copy()
    hit = np.flatnonzero(corrupted)
    for i in hit:
        if rng.random() < cfg.replace_fraction:
            noisy[i] = rng.integers(1, lex.phoneme_vocab_size + 1)
        else:
            noisy[i] = lex.mask_id
    return noisy, corrupted
