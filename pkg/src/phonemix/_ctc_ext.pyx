# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CTC forward-backward kernel (same contract as _ctc_py)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1, INFINITY, isinf, log, log1p

cnp.import_array()


cdef inline double logaddexp(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def ctc_forward_backward(log_probs, labels):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lp = np.ascontiguousarray(log_probs, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t T = lp.shape[0]
    cdef Py_ssize_t L = lab.shape[0]
    cdef Py_ssize_t S = 2 * L + 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ext = np.zeros(S, dtype=np.int64)
    cdef Py_ssize_t i, t, s
    for i in range(L):
        ext[2 * i + 1] = lab[i]

    cdef cnp.ndarray[cnp.float64_t, ndim=2] alpha = np.full((T, S), -np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] beta = np.full((T, S), -np.inf)
    cdef double v, log_z
    cdef bint skip_ok

    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            v = alpha[t - 1, s]
            if s >= 1:
                v = logaddexp(v, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != 0 and ext[s] != ext[s - 2]:
                v = logaddexp(v, alpha[t - 1, s - 2])
            alpha[t, s] = v + lp[t, ext[s]]

    log_z = alpha[T - 1, S - 1]
    if S > 1:
        log_z = logaddexp(log_z, alpha[T - 1, S - 2])

    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        for s in range(S):
            v = beta[t + 1, s] + lp[t + 1, ext[s]]
            if s + 1 < S:
                v = logaddexp(v, beta[t + 1, s + 1] + lp[t + 1, ext[s + 1]])
            if s + 2 < S and ext[s + 2] != 0 and ext[s + 2] != ext[s]:
                v = logaddexp(v, beta[t + 1, s + 2] + lp[t + 1, ext[s + 2]])
            beta[t, s] = v

    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.zeros((T, lp.shape[1]))
    cdef double g
    for t in range(T):
        for s in range(S):
            g = alpha[t, s] + beta[t, s]
            if g != -INFINITY and not isinf(log_z):
                grad[t, ext[s]] -= exp(g - log_z)
    return -log_z, grad
