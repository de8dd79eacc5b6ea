"""Desk-scale multi-task speech-text pre-training with a phoneme bridge."""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
