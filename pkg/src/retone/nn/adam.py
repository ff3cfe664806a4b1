"""Adam optimizer over a named set of parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from retone.errors import NumericsError, ShapeError


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name.

    Moments are allocated lazily on the first step so the state can be
    created before the parameter set is known.
    """

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One Adam update with bias correction; mutates params and state in place."""
    state.t += 1
    b1 = state.beta1
    b2 = state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        if not np.isfinite(g).all():
            raise NumericsError(f"non-finite gradient for {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / p.dtype.type(bc1)
        v_hat = v / p.dtype.type(bc2)
        p -= p.dtype.type(state.lr) * m_hat / (np.sqrt(v_hat) + p.dtype.type(state.eps))
