"""Adam optimizer over a ParamStore.

The training recipe uses a constant learning rate of 1e-4; beta/epsilon
defaults (0.9, 0.999, 1e-8) are the usual ones since the source material
does not pin them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamStore


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: ParamStore, learning_rate: float = 1e-4,
              beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8,
              paths: list[str] | None = None) -> AdamState:
    """Fresh moment estimates for the given parameter paths (default all)."""
    state = AdamState(learning_rate, beta1, beta2, epsilon)
    for p in (paths if paths is not None else params.paths()):
        state.m[p] = np.zeros_like(params.tensors[p])
        state.v[p] = np.zeros_like(params.tensors[p])
    return state


def adam_step(params: ParamStore, grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One Adam update with bias correction, in place.  Only parameters
    tracked by `state` are touched (that is how frozen-partition fine-tuning
    is realized)."""
    for p in state.m:
        if p not in grads:
            raise KeyError(f"missing gradient for parameter {p!r}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    for p in state.m:
        g = grads[p]
        state.m[p] = b1 * state.m[p] + (1.0 - b1) * g
        state.v[p] = b2 * state.v[p] + (1.0 - b2) * (g * g)
        m_hat = state.m[p] / correction1
        v_hat = state.v[p] / correction2
        params.tensors[p] -= state.learning_rate * m_hat / (
            np.sqrt(v_hat) + state.epsilon)
