"""Proximal and constrained-subproblem solvers.

Covers elementwise soft-thresholding, singular value thresholding, the
diagonal-metric unit-ball QCQP (Newton on the multiplier with a bisection
fallback), and the ADMM routine for the nuclear-norm-regularized shared
dictionary prox.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wscdl.core import ConfigError, DataError


def soft_threshold(a, b):
    """sign(a) * max(|a| - b, 0), elementwise; b may be a matching array."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(b < 0):
        raise ConfigError("soft-threshold level must be >= 0")
    return np.sign(a) * np.maximum(np.abs(a) - b, 0.0)


def svt(a: np.ndarray, tau: float) -> np.ndarray:
    """Singular value thresholding: prox of tau * nuclear norm at a."""
    if tau < 0:
        raise ConfigError("svt threshold must be >= 0")
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise DataError("svt input contains non-finite values")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return (u * np.maximum(s - tau, 0.0)) @ vt


def _ball_residual(psi: float, m: np.ndarray, mnu: np.ndarray) -> float:
    d = mnu / (m + psi)
    return float(np.linalg.norm(d))


def qcqp_unit_ball(nu: np.ndarray, m: np.ndarray, iters: int = 30) -> np.ndarray:
    """argmin 0.5*||d - nu||_M^2 subject to ||d||_2 <= 1, M = diag(m) > 0.

    Interior points are returned unchanged.  Otherwise the multiplier psi
    solving ||(M + psi I)^{-1} M nu|| = 1 is found by Newton iterations on
    1/||d(psi)|| - 1; bisection is the guaranteed fallback.
    """
    nu = np.asarray(nu, dtype=np.float64).ravel()
    m = np.asarray(m, dtype=np.float64).ravel()
    if np.any(m <= 0):
        raise ConfigError("majorizer diagonal must be strictly positive")
    if np.linalg.norm(nu) <= 1.0:
        return nu.copy()
    mnu = m * nu
    psi = 0.0
    converged = False
    for _ in range(iters):
        d = mnu / (m + psi)
        g = np.linalg.norm(d)
        if abs(g - 1.0) <= 1e-13:
            converged = True
            break
        # phi(psi) = 1/g - 1 is increasing and concave in psi
        dg = -np.sum(d * d / (m + psi)) / g
        phi = 1.0 / g - 1.0
        dphi = -dg / (g * g)
        step = phi / dphi
        if not np.isfinite(step) or psi - step < 0:
            break
        psi -= step
    else:
        converged = abs(_ball_residual(psi, m, mnu) - 1.0) <= 1e-10

    if not converged and abs(_ball_residual(psi, m, mnu) - 1.0) > 1e-13:
        lo, hi = 0.0, max(psi, 1.0)
        while _ball_residual(hi, m, mnu) > 1.0:
            hi *= 2.0
            if hi > 1e18:
                raise ArithmeticError("unit-ball QCQP bisection failed to bracket")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _ball_residual(mid, m, mnu) > 1.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        psi = hi
    return mnu / (m + psi)


@dataclass
class AdmmState:
    """Split variable and scaled dual for the nuclear-norm dictionary prox."""

    o: np.ndarray
    y: np.ndarray
    rho: float


@dataclass
class AdmmResult:
    atoms: np.ndarray
    converged: bool
    iterations: int
    objective_trace: list = field(default_factory=list)


def _nuclear(d_rows: np.ndarray) -> float:
    # atoms are rows here; the nuclear norm is taken of the atoms-as-columns matrix
    return float(np.linalg.svd(d_rows.T, compute_uv=False).sum())


def admm_nuclear_prox(
    nu_per_atom: np.ndarray,
    m_per_atom: np.ndarray,
    mu_eff: float,
    rho: float,
    iters: int = 50,
    tol: float = 1e-6,
) -> AdmmResult:
    """Solve min_D sum_k 0.5*||d_k - nu_k||_{M_k}^2 + mu_eff*||D||_* over unit-ball atoms.

    ``nu_per_atom`` and ``m_per_atom`` are (K0, P) with one flattened atom
    per row.  Convergence requires the primal gap ||O - D||_F <= tol and a
    non-increasing objective over the last three iterations; on budget
    exhaustion the best feasible iterate is returned with ``converged``
    False.
    """
    nu = np.atleast_2d(np.asarray(nu_per_atom, dtype=np.float64))
    m = np.atleast_2d(np.asarray(m_per_atom, dtype=np.float64))
    if rho <= 1.0:
        raise ConfigError("ADMM penalty rho must be > 1")
    if mu_eff < 0:
        raise ConfigError("mu_eff must be >= 0")
    k0 = nu.shape[0]

    d = np.vstack([qcqp_unit_ball(nu[k], m[k]) for k in range(k0)])
    if mu_eff == 0.0:
        return AdmmResult(d, True, 0)

    def objective(d_rows):
        return 0.5 * float(np.sum(m * (d_rows - nu) ** 2)) + mu_eff * _nuclear(d_rows)

    state = AdmmState(o=d.copy(), y=np.zeros_like(d), rho=rho)
    trace = [objective(d)]
    best, best_obj = d.copy(), trace[0]
    converged = False
    it = 0
    for it in range(1, iters + 1):
        metric = m + rho
        target = (m * nu + rho * state.o + state.y) / metric
        d = np.vstack([qcqp_unit_ball(target[k], metric[k]) for k in range(k0)])
        state.o = svt((d - state.y / rho).T, mu_eff / rho).T
        state.y += rho * (state.o - d)
        obj = objective(d)
        trace.append(obj)
        if obj < best_obj:
            best, best_obj = d.copy(), obj
        gap = np.linalg.norm(state.o - d)
        monotone = len(trace) >= 3 and (
            trace[-1] <= trace[-2] + 1e-10 and trace[-2] <= trace[-3] + 1e-10
        )
        if gap <= tol and monotone:
            converged = True
            break
    if not converged:
        d = best
    return AdmmResult(d, converged, it, trace)
