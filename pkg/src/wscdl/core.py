"""Domain types shared by every other module.

All numerics are 64-bit floats.  Types are immutable after construction
(their arrays are marked read-only); the training module mutates only its
own working copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ATOM_NORM_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid hyperparameter or configuration value."""


class DataError(ValueError):
    """Malformed dataset: bad shapes, labels, or non-finite values."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Bag:
    """One example: an F x T signal matrix with a C-length binary label vector."""

    data: np.ndarray
    labels: np.ndarray
    id: str = ""

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DataError(f"bag data must be F x T with F,T >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("bag data contains non-finite values")
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise DataError("labels must be a vector")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0/1")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Atom:
    """A single F x M filter with Frobenius norm at most 1."""

    filter: np.ndarray

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.filter, dtype=np.float64))
        if not np.all(np.isfinite(f)):
            raise DataError("atom filter contains non-finite values")
        if np.linalg.norm(f) > 1.0 + ATOM_NORM_TOL:
            raise DataError(f"atom norm {np.linalg.norm(f):g} exceeds 1")
        object.__setattr__(self, "filter", _frozen(f))


def _check_atom_bank(bank: np.ndarray, what: str) -> np.ndarray:
    bank = np.asarray(bank, dtype=np.float64)
    if bank.ndim != 3:
        raise DataError(f"{what} must have shape (n_atoms, F, M), got {bank.shape}")
    if not np.all(np.isfinite(bank)):
        raise DataError(f"{what} contains non-finite values")
    norms = np.linalg.norm(
        bank.reshape(bank.shape[0], bank.shape[1] * bank.shape[2]), axis=1
    )
    if norms.size and norms.max(initial=0.0) > 1.0 + ATOM_NORM_TOL:
        raise DataError(f"{what} has an atom with norm {norms.max():g} > 1")
    return _frozen(bank)


@dataclass(frozen=True)
class DictionaryModel:
    """Shared atoms plus per-class atom groups.

    ``shared`` has shape (K0, F, M); ``per_class`` is a tuple of C arrays,
    each (K_c, F, M).  Every atom has Frobenius norm <= 1.
    """

    shared: np.ndarray
    per_class: tuple
    window: int
    height: int

    def __post_init__(self):
        shared = _check_atom_bank(self.shared, "shared dictionary")
        per_class = tuple(
            _check_atom_bank(b, f"class-{c} dictionary")
            for c, b in enumerate(self.per_class)
        )
        for bank in (shared, *per_class):
            if bank.shape[1] != self.height or bank.shape[2] != self.window:
                raise DataError(
                    f"atom bank shape {bank.shape[1:]} does not match "
                    f"(F={self.height}, M={self.window})"
                )
        object.__setattr__(self, "shared", shared)
        object.__setattr__(self, "per_class", per_class)

    @property
    def n_classes(self) -> int:
        return len(self.per_class)

    @property
    def k0(self) -> int:
        return self.shared.shape[0]

    @property
    def kc(self) -> tuple:
        return tuple(b.shape[0] for b in self.per_class)

    @property
    def k_total(self) -> int:
        """Total atom count: K0 + sum of K_c."""
        return self.k0 + sum(self.kc)


@dataclass(frozen=True)
class CoefficientSet:
    """Per-bag activation vectors: one length-T vector per atom.

    ``values`` has shape (N, K0 + sum(K_c), T); the first K0 rows of each
    bag are the shared block, followed by the class blocks in order.
    """

    values: np.ndarray
    k0: int
    kc: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise DataError(f"coefficients must be (N, K, T), got {v.shape}")
        if v.shape[1] != self.k0 + sum(self.kc):
            raise DataError("coefficient row count does not match K0 + sum(K_c)")
        if not np.all(np.isfinite(v)):
            raise DataError("coefficients contain non-finite values")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "kc", tuple(self.kc))

    def shared_block(self, n: int) -> np.ndarray:
        return self.values[n, : self.k0]

    def class_block(self, n: int, c: int) -> np.ndarray:
        lo = self.k0 + sum(self.kc[:c])
        return self.values[n, lo : lo + self.kc[c]]

    def bag(self, n: int) -> np.ndarray:
        return self.values[n]


@dataclass(frozen=True)
class Projection:
    """Block-structured label projection: per-class weights plus bias.

    Class c's score depends only on ``weights[c]``, ``bias[c]`` and that
    class's coefficient block.
    """

    weights: tuple
    bias: np.ndarray

    def __post_init__(self):
        weights = tuple(
            _frozen(np.asarray(w, dtype=np.float64).ravel()) for w in self.weights
        )
        bias = _frozen(np.asarray(self.bias, dtype=np.float64).ravel())
        if len(weights) != bias.shape[0]:
            raise DataError("bias length must equal the number of classes")
        for w in weights:
            if not np.all(np.isfinite(w)):
                raise DataError("projection weights contain non-finite values")
        if not np.all(np.isfinite(bias)):
            raise DataError("projection bias contains non-finite values")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def n_classes(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class Hyperparams:
    """Training configuration; all range checks happen at construction."""

    lam: float = 2.0
    eta: float = 0.01
    mu: float = 0.1
    delta: float = 0.9
    rho: float = 2.0
    eps: float = 1e-4
    window: int = 30
    k0: int = 5
    kc: tuple = (8,)
    epochs: int = 60
    admm_iters: int = 50
    newton_iters: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if self.mu < 0:
            raise ConfigError("mu must be >= 0")
        if not 0.0 <= self.delta < 1.0:
            raise ConfigError("delta must lie in [0, 1)")
        if self.rho <= 1.0:
            raise ConfigError("rho must be > 1")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.k0 < 0:
            raise ConfigError("k0 must be >= 0")
        kc = tuple(int(k) for k in (self.kc if np.iterable(self.kc) else (self.kc,)))
        if any(k < 0 for k in kc):
            raise ConfigError("kc entries must be >= 0")
        object.__setattr__(self, "kc", kc)
        for name in ("epochs", "admm_iters", "newton_iters"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def kc_for(self, n_classes: int) -> tuple:
        """Expand a scalar-like kc to one entry per class."""
        if len(self.kc) == n_classes:
            return self.kc
        if len(self.kc) == 1:
            return self.kc * n_classes
        raise ConfigError(
            f"kc has {len(self.kc)} entries but the dataset has {n_classes} classes"
        )


def validate_dataset(bags) -> tuple:
    """Check a bag list for shared dims and return (N, F, T, C)."""
    if not bags:
        raise DataError("empty dataset")
    first = bags[0]
    f, t, c = first.height, first.length, first.labels.shape[0]
    for n, bag in enumerate(bags):
        if bag.height != f or bag.length != t:
            raise DataError(
                f"bag {n} has shape {bag.data.shape}, expected ({f}, {t})"
            )
        if bag.labels.shape[0] != c:
            raise DataError(f"bag {n} has {bag.labels.shape[0]} labels, expected {c}")
    return (len(bags), f, t, c)
