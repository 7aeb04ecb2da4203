"""Adam for complex parameters, treating each entry as a (re, im) 2-vector."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._errors import NumericError, ShapeError
from .autodiff import DiffTensor


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    lr_scale: dict = field(default_factory=dict)   # name suffix -> multiplier

    def lr_for(self, name: str) -> float:
        for suffix, scale in self.lr_scale.items():
            if name.endswith(suffix):
                return self.lr * scale
        return self.lr


def _split(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag]) if np.iscomplexobj(z) else z[None]


def adam_step(params: dict[str, DiffTensor], grads: dict[str, np.ndarray] | None,
              state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place.

    ``grads`` defaults to each parameter's ``.grad``; a parameter without a
    gradient is treated as having a zero gradient.
    """
    if state.step < 0:
        raise ShapeError("Adam step counter must be non-negative")
    prepared = {}
    for name, p in params.items():
        g = p.grad if grads is None else grads.get(name)
        g = np.zeros_like(p.value) if g is None else np.asarray(g)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        prepared[name] = _split(g).astype(np.float64)

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = prepared[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        delta = state.lr_for(name) * m_hat / (np.sqrt(v_hat) + state.eps)
        if p.is_complex:
            p.value = (p.value - (delta[0] + 1j * delta[1])).astype(p.dtype)
        else:
            p.value = (p.value - delta[0]).astype(p.dtype)
    return state
