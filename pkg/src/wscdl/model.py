"""Objective assembly: reconstruction, fidelity, prediction, and losses.

Sign convention: the bag score for class c is yhat = 1 / (1 + exp(z)) with
z = pool(S^c) . w^c + b^c, so a *negative* pooled logit means the class is
present.  The projection and coefficient updates in the training module
are derived under this convention.
"""

from __future__ import annotations

import numpy as np

from wscdl.core import Bag, CoefficientSet, DataError, DictionaryModel, Hyperparams, Projection
from wscdl.convops import conv_truncated, pool
from wscdl.twodim import flatten_for_nuclear

LOGIT_CLAMP = 30.0


def reconstruct(
    model: DictionaryModel,
    coeffs: np.ndarray | CoefficientSet,
    subset: str = "all",
    labels: np.ndarray | None = None,
    class_index: int | None = None,
    bag_index: int = 0,
) -> np.ndarray:
    """Sum of truncated atom/coefficient convolutions over a subset of atoms.

    ``subset`` is one of ``"all"``, ``"shared_plus"`` (shared atoms plus the
    classes whose label is 1), or ``"class"`` (a single class's block).
    ``coeffs`` may be a raw (K, T) array for one bag or a CoefficientSet.
    """
    if isinstance(coeffs, CoefficientSet):
        coeffs = coeffs.bag(bag_index)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    t = coeffs.shape[1]
    out = np.zeros((model.height, t))
    k0 = model.k0

    def add_bank(bank, block):
        for k in range(bank.shape[0]):
            out_local = conv_truncated(bank[k], block[k])
            out[...] += out_local

    if subset == "class":
        if class_index is None:
            raise DataError("subset='class' requires class_index")
        lo = k0 + sum(model.kc[:class_index])
        add_bank(model.per_class[class_index], coeffs[lo : lo + model.kc[class_index]])
        return out

    add_bank(model.shared, coeffs[:k0])
    if subset == "all":
        selected = set(range(model.n_classes))
    elif subset == "shared_plus":
        if labels is None:
            raise DataError("subset='shared_plus' requires labels")
        selected = {c for c in range(model.n_classes) if labels[c]}
    else:
        raise DataError(f"unknown subset {subset!r}")
    for c in selected:
        lo_c = k0 + sum(model.kc[:c])
        add_bank(model.per_class[c], coeffs[lo_c : lo_c + model.kc[c]])
    return out


def fidelity(bag: Bag, model: DictionaryModel, coeffs) -> float:
    """Three-part reconstruction cost: full, label-gated, and absent-class residuals."""
    full = reconstruct(model, coeffs, "all")
    labeled = reconstruct(model, coeffs, "shared_plus", labels=bag.labels)
    absent = 0.0
    for c in range(model.n_classes):
        if not bag.labels[c]:
            absent += float(np.sum(reconstruct(model, coeffs, "class", class_index=c) ** 2))
    return (
        float(np.sum((bag.data - full) ** 2))
        + float(np.sum((bag.data - labeled) ** 2))
        + absent
    )


def class_logits(
    model: DictionaryModel, coeffs, projection: Projection, pooling: str = "avg"
) -> np.ndarray:
    """Pooled pre-sigmoid scores, one per class."""
    if isinstance(coeffs, CoefficientSet):
        coeffs = coeffs.bag(0)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    k0 = model.k0
    z = np.empty(model.n_classes)
    for c in range(model.n_classes):
        lo = k0 + sum(model.kc[:c])
        block = coeffs[lo : lo + model.kc[c]]
        pooled = pool(block.T, pooling)
        z[c] = pooled @ projection.weights[c] + projection.bias[c]
    return z


def scores_from_logits(z: np.ndarray) -> np.ndarray:
    """yhat = 1 / (1 + exp(z)); larger z means lower score."""
    z = np.clip(np.asarray(z, dtype=np.float64), -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(z))


def predict(
    model: DictionaryModel, coeffs, projection: Projection, pooling: str = "avg"
) -> np.ndarray:
    """Bag-level score vector in (0, 1)^C."""
    return scores_from_logits(class_logits(model, coeffs, projection, pooling))


def cross_entropy_from_logits(z: np.ndarray, y: np.ndarray) -> float:
    """sum_c [-(1 - y_c) z_c + log(1 + exp(z_c))], clamped at |z| = 30."""
    z = np.clip(np.asarray(z, dtype=np.float64), -LOGIT_CLAMP, LOGIT_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum(-(1.0 - y) * z + np.log1p(np.exp(z))))


def cross_entropy(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Binary cross-entropy of score vector y_hat against 0/1 labels."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if np.any(y_hat <= 0.0) or np.any(y_hat >= 1.0):
        raise DataError("scores must lie strictly inside (0, 1)")
    z = np.log((1.0 - y_hat) / y_hat)
    return cross_entropy_from_logits(z, y)


def hinge(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Evaluation-only hinge loss: sum_c max(0, 1 - 2(yhat_c - 1)(2 y_c - 1))."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum(np.maximum(0.0, 1.0 - 2.0 * (y_hat - 1.0) * (2.0 * y - 1.0))))


def objective(
    bags,
    model: DictionaryModel,
    coeffs: CoefficientSet,
    projection: Projection,
    hp: Hyperparams,
) -> float:
    """Full training cost: fidelity + sparsity + label loss per bag, plus the
    nuclear norm of the flattened shared dictionary."""
    total = 0.0
    for n, bag in enumerate(bags):
        c_n = coeffs.bag(n)
        total += fidelity(bag, model, c_n)
        total += hp.lam * float(np.sum(np.abs(c_n)))
        if hp.eta:
            z = class_logits(model, c_n, projection)
            total += hp.eta * cross_entropy_from_logits(z, bag.labels)
    if hp.mu and model.k0:
        total += hp.mu * float(
            np.linalg.svd(flatten_for_nuclear(model.shared), compute_uv=False).sum()
        )
    return total
