"""Truncated convolution, pooling, and Toeplitz constructions.

A full linear convolution of a length-M filter with a length-T activation
has length M+T-1; the boundary truncation keeps the central T samples,
removing floor((M-1)/2) from the left and ceil((M-1)/2) from the right.
The Toeplitz builders materialize the equivalent matrices densely; the
``*_apply`` / ``*_adjoint`` helpers compute the same products via direct
convolution without materializing anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wscdl.core import DataError


def _offset(m: int) -> int:
    return (m - 1) // 2


def truncate(x: np.ndarray, m: int, t: int) -> np.ndarray:
    """Prune a length M+T-1 signal to its central T samples."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m + t - 1:
        raise DataError(f"expected length {m + t - 1}, got {x.shape[-1]}")
    off = _offset(m)
    return x[..., off : off + t]


def conv_truncated(atom: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """Row-wise truncated convolution of an F x M atom with a length-T coefficient.

    Returns an F x T matrix; each atom row is convolved independently with
    the shared coefficient vector.
    """
    atom = np.atleast_2d(np.asarray(atom, dtype=np.float64))
    coeff = np.asarray(coeff, dtype=np.float64).ravel()
    t = coeff.shape[0]
    m = atom.shape[1]
    off = _offset(m)
    out = np.empty((atom.shape[0], t))
    for f in range(atom.shape[0]):
        out[f] = np.convolve(atom[f], coeff)[off : off + t]
    return out


@dataclass(frozen=True)
class ToeplitzMatrix:
    """Dense truncated-convolution matrix plus a tag naming its builder."""

    entries: np.ndarray
    builder: str

    def __matmul__(self, other):
        return self.entries @ other

    @property
    def shape(self):
        return self.entries.shape


def toeplitz_from_coeffs(coeff: np.ndarray, m: int) -> ToeplitzMatrix:
    """T x M matrix A with A @ d == truncate(d * coeff) for any length-M d."""
    coeff = np.asarray(coeff, dtype=np.float64).ravel()
    t = coeff.shape[0]
    off = _offset(m)
    idx = np.arange(t)[:, None] + off - np.arange(m)[None, :]
    valid = (idx >= 0) & (idx < t)
    entries = np.where(valid, coeff[np.clip(idx, 0, t - 1)], 0.0)
    return ToeplitzMatrix(entries, "coeffs")


def toeplitz_from_atom(atom_row: np.ndarray, t: int) -> ToeplitzMatrix:
    """T x T matrix B with B @ s == truncate(atom_row * s) for any length-T s."""
    a = np.asarray(atom_row, dtype=np.float64).ravel()
    m = a.shape[0]
    off = _offset(m)
    idx = np.arange(t)[:, None] + off - np.arange(t)[None, :]
    valid = (idx >= 0) & (idx < m)
    entries = np.where(valid, a[np.clip(idx, 0, m - 1)], 0.0)
    return ToeplitzMatrix(entries, "atom")


def pool(activations: np.ndarray, mode: str = "avg") -> np.ndarray:
    """Collapse a T x K activation block to a length-K vector."""
    activations = np.atleast_2d(np.asarray(activations, dtype=np.float64))
    if mode == "avg":
        return activations.mean(axis=0)
    if mode == "max":
        return activations.max(axis=0)
    if mode == "rectified":
        return np.abs(activations).mean(axis=0)
    raise DataError(f"unknown pooling mode {mode!r}")


# ---------------------------------------------------------------------------
# Matrix-free equivalents used by the training loop.  Each matches the dense
# Toeplitz product exactly (same convolution kernel, same truncation).


def coeff_toeplitz_apply(coeff: np.ndarray, d: np.ndarray) -> np.ndarray:
    """toeplitz_from_coeffs(coeff, len(d)) @ d without materializing it."""
    m = d.shape[0]
    off = _offset(m)
    return np.convolve(coeff, d)[off : off + coeff.shape[0]]


def coeff_toeplitz_adjoint(coeff: np.ndarray, r: np.ndarray, m: int) -> np.ndarray:
    """Transpose product: toeplitz_from_coeffs(coeff, m).entries.T @ r."""
    t = coeff.shape[0]
    off = _offset(m)
    full = np.convolve(r, coeff[::-1])
    lo = t - 1 - off
    return full[lo : lo + m]


def atom_toeplitz_apply(atom_row: np.ndarray, s: np.ndarray) -> np.ndarray:
    """toeplitz_from_atom(atom_row, len(s)) @ s without materializing it."""
    off = _offset(atom_row.shape[0])
    return np.convolve(atom_row, s)[off : off + s.shape[0]]


def atom_toeplitz_adjoint(atom_row: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Transpose product: toeplitz_from_atom(atom_row, len(r)).entries.T @ r."""
    m = atom_row.shape[0]
    off = _offset(m)
    t = r.shape[0]
    full = np.convolve(r, atom_row[::-1])
    lo = m - 1 - off
    return full[lo : lo + t]


def coeff_majorizer_vector(coeff: np.ndarray, m: int, scale: float) -> np.ndarray:
    """diag(scale * |T_coeff|^T |T_coeff| 1) as a length-M vector."""
    ac = np.abs(coeff)
    colsum = coeff_toeplitz_apply(ac, np.ones(m))
    return scale * coeff_toeplitz_adjoint(ac, colsum, m)


def atom_majorizer_vector(atom_row: np.ndarray, t: int, scale: float) -> np.ndarray:
    """diag(scale * |T_atom|^T |T_atom| 1) as a length-T vector."""
    aa = np.abs(atom_row)
    off = _offset(aa.shape[0])
    colsum = np.convolve(aa, np.ones(t))[off : off + t]
    return scale * atom_toeplitz_adjoint(aa, colsum)
