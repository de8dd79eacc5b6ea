"""Span masking over speech frames.

Each input frame is independently a span start with probability
`start_prob`; a start masks the next `span_len` frames (truncated at the
end, overlaps unioned).  The latent-resolution variant of a mask marks a
downsampled position whenever any input frame in its receptive field is
masked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SpanMaskConfig:
    start_prob: float = 0.07
    span_len: int = 10
    seed: int = 0

    def validate(self):
        if not 0.0 < self.start_prob <= 1.0:
            raise ValueError("start_prob must be in (0, 1]")
        if self.span_len < 1:
            raise ValueError("span_len must be >= 1")


def sample_span_mask(T: int, cfg: SpanMaskConfig,
                     rng: np.random.Generator | None = None,
                     force: bool = True) -> np.ndarray:
    """Boolean mask of length T.  With force=True an empty draw is
    re-sampled once and then a span is planted at position 0, so at least
    one frame is always masked."""
    cfg.validate()
    if T < 1:
        raise ValueError("T must be >= 1")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    def draw():
        starts = rng.random(T) < cfg.start_prob
        mask = np.zeros(T, dtype=bool)
        for t in np.flatnonzero(starts):
            mask[t:t + cfg.span_len] = True
        return mask

    mask = draw()
    if force and not mask.any():
        mask = draw()
        if not mask.any():
            mask[0:cfg.span_len] = True
    return mask


def _receptive_ranges(out_len: int, kernel: int, stride: int, pad: int,
                      in_len: int) -> list[tuple[int, int]]:
    ranges = []
    for i in range(out_len):
        lo = max(i * stride - pad, 0)
        hi = min(i * stride - pad + kernel - 1, in_len - 1)
        ranges.append((lo, hi))
    return ranges


def conv_out_len(T: int, kernel: int = 3, stride: int = 2, pad: int = 1) -> int:
    return (T + 2 * pad - kernel) // stride + 1


def downsample_mask(mask: np.ndarray, n_layers: int = 2, kernel: int = 3,
                    stride: int = 2, pad: int = 1) -> np.ndarray:
    """Map a frame-level mask through the conv stack: a latent position is
    masked iff any frame in its receptive field is masked."""
    mask = np.asarray(mask, dtype=bool)
    for _ in range(n_layers):
        in_len = len(mask)
        out_len = conv_out_len(in_len, kernel, stride, pad)
        out = np.zeros(out_len, dtype=bool)
        for i, (lo, hi) in enumerate(_receptive_ranges(out_len, kernel, stride,
                                                       pad, in_len)):
            out[i] = mask[lo:hi + 1].any()
        mask = out
    return mask


def union_mask_fraction(start_prob: float, span_len: int) -> float:
    """Closed-form expected masked fraction, ignoring edge truncation:
    a position is masked unless none of the span_len preceding starts hit."""
    return 1.0 - (1.0 - start_prob) ** span_len
