"""Token error rate via Levenshtein distance."""

from __future__ import annotations

import numpy as np


def edit_distance(hyp, ref) -> int:
    """Substitutions + insertions + deletions between two token sequences."""
    hyp = list(hyp)
    ref = list(ref)
    prev = np.arange(len(hyp) + 1)
    for i, r in enumerate(ref, start=1):
        cur = np.empty(len(hyp) + 1, dtype=np.int64)
        cur[0] = i
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (0 if r == h else 1))
        prev = cur
    return int(prev[-1])


def token_error_rate(hyps, refs) -> float:
    """Summed edit distance over pairs divided by total reference tokens."""
    hyps, refs = list(hyps), list(refs)
    if len(hyps) != len(refs):
        raise ValueError("hypothesis/reference lists must align")
    total_ref = sum(len(r) for r in refs)
    if total_ref == 0:
        raise ValueError("empty reference set")
    dist = sum(edit_distance(h, r) for h, r in zip(hyps, refs))
    return dist / total_ref
