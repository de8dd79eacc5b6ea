"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set PHONEMIX_PURE_PYTHON=1 to force the fallback (used by the benchmark and
by parity tests).
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("PHONEMIX_PURE_PYTHON"):
    from ._ctc_py import ctc_forward_backward

    BACKEND = "python"
else:
    try:
        from ._ctc_ext import ctc_forward_backward  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built; pure-python install still works
        from ._ctc_py import ctc_forward_backward  # type: ignore[no-redef]

        BACKEND = "python"

__all__ = ["ctc_forward_backward", "ctc_feasible", "BACKEND"]


def ctc_feasible(n_frames: int, labels) -> bool:
    """A valid alignment exists iff frames cover labels plus forced blanks."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return n_frames >= 1
    repeats = int(np.sum(labels[1:] == labels[:-1]))
    return n_frames >= len(labels) + repeats
