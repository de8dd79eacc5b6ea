"""Pure-numpy CTC forward-backward kernel (fallback for the compiled one).

`ctc_forward_backward` takes row-normalized log-probabilities over
`blank + labels` classes (blank is class 0) and a collapsed label sequence,
and returns the negative log marginal likelihood plus its gradient with
respect to the log-probabilities.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def _extend_labels(labels: np.ndarray) -> np.ndarray:
    ext = np.zeros(2 * len(labels) + 1, dtype=np.int64)
    ext[1::2] = labels
    return ext


def ctc_forward_backward(log_probs: np.ndarray, labels: np.ndarray):
    """Return (loss, grad) for CTC over log_probs (T, C) and labels (L,).

    Gradient is with respect to the log-probabilities themselves.
    Assumes the instance is feasible (caller checks path existence).
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    T = log_probs.shape[0]
    ext = _extend_labels(labels)
    S = len(ext)

    # positions allowed to take the s-2 transition
    allow_skip = np.zeros(S, dtype=bool)
    if S > 2:
        allow_skip[2:] = (ext[2:] != 0) & (ext[2:] != ext[:-2])

    emit = log_probs[:, ext]  # (T, S)

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        best = prev.copy()
        best[1:] = np.logaddexp(best[1:], prev[:-1])
        if S > 2:
            skip = np.where(allow_skip[2:], prev[:-2], NEG_INF)
            best[2:] = np.logaddexp(best[2:], skip)
        alpha[t] = best + emit[t]

    if S > 1:
        log_z = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        log_z = alpha[T - 1, S - 1]
    loss = -log_z

    # beta[t, s] excludes the emission at t; beta[T-1, last two] = 0
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        best = nxt.copy()
        best[:-1] = np.logaddexp(best[:-1], nxt[1:])
        if S > 2:
            skip = np.where(allow_skip[2:], nxt[2:], NEG_INF)
            best[:-2] = np.logaddexp(best[:-2], skip)
        beta[t] = best

    gamma = alpha + beta  # (T, S), logsumexp over s equals log_z for each t
    grad = np.zeros_like(log_probs)
    with np.errstate(invalid="ignore"):
        post = np.exp(gamma - log_z)
    post[~np.isfinite(gamma)] = 0.0
    for s in range(S):
        grad[:, ext[s]] -= post[:, s]
    return loss, grad
