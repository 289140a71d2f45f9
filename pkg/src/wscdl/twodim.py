"""2-D bag support: full-height atoms over per-row 1-D convolutions.

Atoms are F x M filters convolved row-by-row with a single length-T
coefficient vector, so coefficient shapes and pooling are unchanged from
the 1-D case.  Majorizers extend by summing per-row quadratic forms.
"""

from __future__ import annotations

import numpy as np

from wscdl.core import DataError


def accumulate_rowwise_majorizer(toeplitz_rows, scale: float = 1.0) -> np.ndarray:
    """diag(sum_rows scale * |T_r|^T |T_r| 1) for a list of per-row matrices."""
    out = None
    for t_r in toeplitz_rows:
        entries = np.abs(getattr(t_r, "entries", t_r))
        contrib = entries.T @ (entries @ np.ones(entries.shape[1]))
        out = contrib if out is None else out + contrib
    if out is None:
        raise DataError("no rows given")
    return scale * out


def flatten_for_nuclear(shared_atoms: np.ndarray) -> np.ndarray:
    """Stack K0 atoms of shape F x M into an (F*M) x K0 matrix, one per column."""
    atoms = np.asarray(shared_atoms, dtype=np.float64)
    if atoms.ndim != 3:
        raise DataError(f"expected (K0, F, M), got {atoms.shape}")
    return atoms.reshape(atoms.shape[0], -1).T


def unflatten_from_nuclear(mat: np.ndarray, height: int, window: int) -> np.ndarray:
    """Inverse of flatten_for_nuclear."""
    mat = np.asarray(mat, dtype=np.float64)
    return mat.T.reshape(mat.shape[1], height, window)
