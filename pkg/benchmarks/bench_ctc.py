"""Benchmark the compiled CTC kernel against the pure-numpy fallback.

Runs the forward-backward pass over a grid of (frames, labels, classes)
shapes and reports per-call wall time for both backends plus the speedup.
Both backends are imported directly so the comparison does not depend on
which one the package selected at import time.
"""

import argparse
import time

import numpy as np

from phonemix import _ctc_py


def make_case(rng, T, L, C):
    logits = rng.normal(size=(T, C))
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    labels = rng.integers(1, C, size=L)
    return log_probs, labels


def bench(fn, cases, repeats):
    # warm-up pass so import/jit costs are excluded
    for lp, lab in cases:
        fn(lp, lab)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for lp, lab in cases:
            fn(lp, lab)
        best = min(best, (time.perf_counter() - t0) / len(cases))
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--cases-per-shape", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    try:
        from phonemix import _ctc_ext
    except ImportError:
        print("compiled extension not available; build it first "
              "(pip install -e . --no-build-isolation)")
        return 1

    rng = np.random.default_rng(args.seed)
    shapes = [(20, 6, 8), (50, 15, 17), (100, 30, 17), (200, 60, 33),
              (400, 120, 33)]
    print(f"{'T':>5} {'L':>5} {'C':>4} {'numpy (us)':>12} "
          f"{'cython (us)':>12} {'speedup':>8}")
    for T, L, C in shapes:
        cases = [make_case(rng, T, L, C) for _ in range(args.cases_per_shape)]
        t_py = bench(_ctc_py.ctc_forward_backward, cases, args.repeats)
        t_cy = bench(_ctc_ext.ctc_forward_backward, cases, args.repeats)
        # sanity: both backends agree on the last case
        lp, lab = cases[-1]
        loss_py, grad_py = _ctc_py.ctc_forward_backward(lp, lab)
        loss_cy, grad_cy = _ctc_ext.ctc_forward_backward(lp, lab)
        assert abs(loss_py - loss_cy) < 1e-10 * max(1.0, abs(loss_py))
        assert np.allclose(grad_py, grad_cy, atol=1e-12)
        print(f"{T:>5} {L:>5} {C:>4} {t_py * 1e6:>12.1f} "
              f"{t_cy * 1e6:>12.1f} {t_py / t_cy:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
