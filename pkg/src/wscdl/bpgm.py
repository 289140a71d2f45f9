"""Generic block proximal gradient machinery with diagonal majorizers.

Every majorizer in this project is diagonal, so inverses and square roots
are elementwise.  Zero diagonal entries (an atom or coefficient with no
support) are clamped before inversion, which leaves the corresponding
update a no-op under a zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wscdl.core import ConfigError

MAJORIZER_CLAMP = 1e-12


def clamp_majorizer(m: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(m, dtype=np.float64), MAJORIZER_CLAMP)


@dataclass
class BlockState:
    """One block variable with its previous iterate and majorizers."""

    current: np.ndarray
    previous: np.ndarray
    m_current: np.ndarray
    m_previous: np.ndarray

    def __post_init__(self):
        if self.current.shape != self.previous.shape:
            raise ConfigError("current/previous must have the same shape")
        if np.any(self.m_current <= 0) or np.any(self.m_previous <= 0):
            raise ConfigError("majorizer diagonals must be strictly positive")


def extrapolate(state: BlockState, delta: float) -> np.ndarray:
    """Momentum point: current + delta * sqrt(M_prev/M_cur) * (current - previous)."""
    if not 0.0 <= delta < 1.0:
        raise ConfigError("delta must lie in [0, 1)")
    w = delta * np.sqrt(state.m_previous / state.m_current)
    return state.current + w * (state.current - state.previous)


def prox_step(x_tilde, grad_at_tilde, m, prox):
    """One majorized proximal step: prox(x_tilde - grad/m; m)."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    grad_at_tilde = np.asarray(grad_at_tilde, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    nu = x_tilde - grad_at_tilde / m
    return prox(nu, m)


def check_majorizer(hessian_bound: np.ndarray, m: np.ndarray, slack: float = 1e-8) -> bool:
    """True iff diag(m) - hessian_bound is PSD within -slack on its minimum eigenvalue."""
    h = np.asarray(hessian_bound, dtype=np.float64)
    gap = np.diag(np.asarray(m, dtype=np.float64).ravel()) - h
    return bool(np.linalg.eigvalsh(gap).min() >= -slack)
