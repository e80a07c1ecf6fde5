"""Adam with bias correction, cosine learning-rate decay and global-norm clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr_max: float = 1e-3
    lr_min: float = 1e-4
    total_steps: int = 1

    @classmethod
    def zeros_like(cls, params: dict, **schedule) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(v, dtype=float) for k, v in params.items()},
            v={k: np.zeros_like(v, dtype=float) for k, v in params.items()},
            **schedule,
        )

    def lr(self) -> float:
        """Cosine decay from ``lr_max`` to ``lr_min`` over ``total_steps``."""
        frac = min(self.step / max(self.total_steps, 1), 1.0)
        return self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + math.cos(math.pi * frac))


def clip_global_norm(grads: dict, max_norm: float = 1.0) -> tuple[dict, float]:
    norm = math.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values()))
    if not math.isfinite(norm):
        raise NumericError("non-finite gradient norm")
    if max_norm is None or norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def adam_step(params: dict, grads: dict, state: OptimizerState, lr: float | None = None,
              frozen: frozenset = frozenset()):
    """One bias-corrected Adam update; returns new ``(params, state)``.

    Parameters named in ``frozen`` are left untouched (their moments too).
    """
    if set(params) != set(grads):
        raise ValueError("parameter and gradient keys differ")
    for k, g in grads.items():
        if np.shape(g) != np.shape(params[k]):
            raise ValueError(f"gradient shape mismatch for {k!r}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k!r}")
    lr = state.lr() if lr is None else lr
    t = state.step + 1
    new_params, m, v = {}, {}, {}
    for k, p in params.items():
        if k in frozen:
            new_params[k], m[k], v[k] = p, state.m[k], state.v[k]
            continue
        g = grads[k]
        m[k] = BETA1 * state.m[k] + (1 - BETA1) * g
        v[k] = BETA2 * state.v[k] + (1 - BETA2) * g * g
        m_hat = m[k] / (1 - BETA1**t)
        v_hat = v[k] / (1 - BETA2**t)
        new_params[k] = p - lr * m_hat / (np.sqrt(v_hat) + EPS)
    new_state = OptimizerState(m, v, t, state.lr_max, state.lr_min, state.total_steps)
    return new_params, new_state
