"""The five training objectives and their weighted total.

Every loss is a pure function of model outputs and targets, returning a
scalar autodiff node (plus diagnostics where the trainer needs them).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Tensor, _node, gather_rows, log_softmax, mul, sum_

TASKS = ("msp", "pp", "s2c", "p2t", "s2t")


class CtcInfeasibleError(ValueError):
    """Target cannot be aligned: too few frames for labels + forced blanks."""


def _nll_sum(log_probs: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=np.int64)
    if log_probs.shape[0] != len(target):
        raise ValueError(
            f"log-prob rows {log_probs.shape[0]} != target length {len(target)}")
    return mul(sum_(gather_rows(log_probs, target)), -1.0)


def loss_p2t(log_probs: Tensor, target) -> Tensor:
    """Negative log-likelihood of the text target under teacher forcing."""
    return _nll_sum(log_probs, target)


def loss_s2c(log_probs: Tensor, target) -> Tensor:
    """Same contract as loss_p2t over the pseudo-code vocabulary."""
    return _nll_sum(log_probs, target)


def loss_s2t(log_probs: Tensor, target) -> Tensor:
    """Same contract as loss_p2t, conditioned on speech-derived memory."""
    return _nll_sum(log_probs, target)


def target_phoneme_distribution(H, E: np.ndarray) -> np.ndarray:
    """Row-stochastic (T', I) matrix softmax(H E^T), log-sum-exp stabilized.

    Computed outside the tape: this is the target branch, gradient severed.
    """
    h = H.data if isinstance(H, Tensor) else np.asarray(H)
    logits = h.astype(np.float64) @ np.asarray(E, dtype=np.float64).T
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def distribution_entropy(dist: np.ndarray) -> float:
    """Mean row entropy in nats (collapse diagnostic)."""
    p = np.clip(dist, 1e-30, None)
    return float(-(p * np.log(p)).sum(axis=1).mean())


def loss_msp(target_dist: np.ndarray, pred_log_dist: Tensor,
             latent_mask: np.ndarray) -> Tensor:
    """KL(target || predicted), summed over masked latent positions."""
    latent_mask = np.asarray(latent_mask, dtype=bool)
    if not latent_mask.any():
        raise ValueError("MSP needs at least one masked latent position")
    if target_dist.shape != tuple(pred_log_dist.shape):
        raise ValueError("target/pred distribution shapes differ")
    m = latent_mask.astype(pred_log_dist.data.dtype)[:, None]
    p = np.asarray(target_dist)
    plogp = np.where(p > 0, p * np.log(np.clip(p, 1e-300, None)), 0.0)
    const = float((plogp * m).sum())
    cross = sum_(mul(pred_log_dist, p * m))
    return mul(cross, -1.0) + const


def ctc_loss(log_probs: Tensor, target) -> Tensor:
    """Negative log marginal likelihood over all blank-augmented alignments.

    log_probs: (T', I+1) row-normalized, blank = class 0.
    """
    target = np.asarray(target, dtype=np.int64)
    T = log_probs.shape[0]
    if not kernels.ctc_feasible(T, target):
        raise CtcInfeasibleError(
            f"{T} frames cannot align {len(target)} labels")
    loss, grad = kernels.ctc_forward_backward(
        log_probs.data.astype(np.float64), target)

    def bw(g):
        return ((log_probs, (g * grad).astype(log_probs.data.dtype)),)

    return _node(np.asarray(loss, dtype=log_probs.data.dtype), (log_probs,), bw)


def loss_pp(pred_logits_with_blank: Tensor, target) -> Tensor:
    """CTC loss of phoneme-table logits (blank prepended) against the
    phoneme sequence converted from the paired text."""
    return ctc_loss(log_softmax(pred_logits_with_blank, axis=-1), target)


@dataclass
class LossBreakdown:
    components: dict[str, float] = field(default_factory=dict)
    total: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def total_loss(components: dict[str, float],
               weights: dict[str, float] | None = None,
               diagnostics: dict | None = None) -> LossBreakdown:
    """Weighted sum of the per-task scalars that are present."""
    weights = weights or {}
    for task in components:
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
    for task, w in weights.items():
        if w < 0:
            raise ValueError(f"negative weight for {task}")
    total = 0.0
    for task, value in components.items():
        total += weights.get(task, 1.0) * float(value)
    return LossBreakdown(components={k: float(v) for k, v in components.items()},
                         total=total, diagnostics=diagnostics or {})
