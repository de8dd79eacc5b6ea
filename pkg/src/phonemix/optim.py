"""Adam optimizer with a warmup + inverse-sqrt learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor


class DivergenceError(RuntimeError):
    """Raised when a step sees a non-finite loss or gradient."""


@dataclass
class OptimConfig:
    lr: float = 2e-3
    warmup_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9


def lr_at(step: int, cfg: OptimConfig) -> float:
    """Linear warmup to cfg.lr, then inverse-sqrt decay."""
    step = max(step, 1)
    return cfg.lr * min(step / cfg.warmup_steps,
                        (cfg.warmup_steps / step) ** 0.5)


class Adam:
    def __init__(self, params: dict[str, Tensor], cfg: OptimConfig | None = None):
        self.cfg = cfg or OptimConfig()
        self.params = params
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data, dtype=np.float64)
                  for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data, dtype=np.float64)
                  for k, t in params.items()}

    def step(self, grads: dict[str, np.ndarray], frozen: frozenset = frozenset()):
        """One update.  Frozen parameters are left bit-identical, moments
        included, so a frozen-task step cannot perturb them at all."""
        self.step_count += 1
        lr = lr_at(self.step_count, self.cfg)
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps
        t = self.step_count
        for name, g in grads.items():
            if name in frozen:
                continue
            if not np.isfinite(g).all():
                raise DivergenceError(f"non-finite gradient for {name}")
            g = g.astype(np.float64)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1**t)
            vhat = self.v[name] / (1 - b2**t)
            p = self.params[name]
            p.data = (p.data.astype(np.float64)
                      - lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.m:
            out[f"adam_m/{k}"] = self.m[k]
            out[f"adam_v/{k}"] = self.v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int):
        for k in self.m:
            self.m[k] = arrays[f"adam_m/{k}"].astype(np.float64)
            self.v[k] = arrays[f"adam_v/{k}"].astype(np.float64)
        self.step_count = step_count
