"""Synthetic benchmark generation, noise injection, and binary container I/O.

The benchmark has four discriminative classes plus one background class,
each with a bank of five 30-sample waveforms.  Bags are 1600-sample rows
built from non-overlapping bursts (a feature repeated 1-5 times) of every
present class plus background, then corrupted with white Gaussian noise.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import sawtooth

from wscdl.core import (
    Bag,
    DataError,
    DictionaryModel,
    Hyperparams,
    Projection,
)

DATASET_MAGIC = b"WSCD"
MODEL_MAGIC = b"WSCM"
FORMAT_VERSION = 1
_MAX_DIM = 1 << 31  # guards against corrupted headers requesting huge buffers

PLACEMENT_RETRIES = 100


@dataclass(frozen=True)
class SynthSpec:
    classes: int = 4
    features_per_class: int = 5
    feature_len: int = 30
    signal_len: int = 1600
    max_repeats: int = 5
    snr_db: float = 10.0
    per_combo_train: int = 50
    per_combo_test: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.feature_len > self.signal_len:
            raise DataError("feature_len must not exceed signal_len")
        if self.max_repeats < 1:
            raise DataError("max_repeats must be >= 1")


def make_features(spec: SynthSpec) -> np.ndarray:
    """Waveform banks, shape (classes+1, features_per_class, feature_len).

    Bank index ``classes`` is the background.  Even feature indices are
    sinusoids (phase chosen so the truncated window has exactly zero mean),
    odd indices are unit-peak sawtooths.  Frequencies (f + 1 + 5c)/60
    cycles per sample are distinct across all banks.
    """
    n_banks = spec.classes + 1
    banks = np.zeros((n_banks, spec.features_per_class, spec.feature_len))
    t = np.arange(spec.feature_len)
    for c in range(n_banks):
        for f in range(spec.features_per_class):
            freq = (f + 1 + spec.features_per_class * c) / 60.0
            if f % 2 == 0:
                # phase cancelling the window mean: sum_t sin(2*pi*freq*t + phi) = 0
                phi = -np.angle(np.sum(np.exp(2j * np.pi * freq * t)))
                wave = np.sin(2.0 * np.pi * freq * t + phi)
            else:
                # width < 1 keeps the slowest ramp distinguishable from the
                # slowest sinusoid under circular shifts
                wave = sawtooth(2.0 * np.pi * freq * t, width=0.75)
            peak = np.max(np.abs(wave))
            banks[c, f] = wave / peak
    return banks


def awgn(x: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add white Gaussian noise at the given SNR; power averages over all
    entries, zeros included."""
    x = np.asarray(x, dtype=np.float64)
    power = float(np.mean(x**2))
    if power == 0.0:
        raise DataError("awgn input is all zero; SNR undefined")
    if math.isinf(snr_db):
        return x.copy()
    var = power * 10.0 ** (-snr_db / 10.0)
    return x + rng.normal(0.0, np.sqrt(var), size=x.shape)


def _label_subsets(n_classes: int):
    """All non-empty subsets of range(n_classes), ordered by bitmask."""
    return [
        [c for c in range(n_classes) if mask >> c & 1]
        for mask in range(1, 1 << n_classes)
    ]


def _place_bursts(length, segments, rng):
    """Non-overlapping start offsets, uniform over the valid arrangements.

    A random ordering of the segments gets the slack distributed uniformly
    among the gaps; raises when the segments cannot fit at all.
    """
    total = sum(segments)
    if total > length:
        raise DataError(
            f"bursts need {total} samples but the signal has only {length}"
        )
    order = rng.permutation(len(segments))
    slack = length - total
    # gap sizes via sorted draws with repetition (stars and bars)
    cuts = np.sort(rng.integers(0, slack + 1, size=len(segments)))
    starts = [0] * len(segments)
    pos = 0
    for rank, idx in enumerate(order):
        pos += int(cuts[rank]) - (int(cuts[rank - 1]) if rank else 0)
        starts[idx] = pos
        pos += segments[idx]
    return starts


def _make_bag(spec, banks, present, rng, bag_id):
    n_classes = spec.classes

    # repeats capped so a single burst always fits the signal
    max_r = min(spec.max_repeats, spec.signal_len // spec.feature_len)

    def draw_plan():
        plan = []  # (bank index, feature index, repeats)
        for c in present:
            for _ in range(int(rng.integers(1, 4))):
                plan.append((c, int(rng.integers(0, spec.features_per_class)),
                             int(rng.integers(1, max_r + 1))))
        for _ in range(int(rng.integers(1, 3))):
            plan.append((n_classes, int(rng.integers(0, spec.features_per_class)),
                         int(rng.integers(1, max_r + 1))))
        return plan

    # a draw can legitimately exceed the signal (many long bursts); redraw,
    # and allow overlap as a last resort so short signals stay generable
    for attempt in range(PLACEMENT_RETRIES):
        plan = draw_plan()
        segments = [spec.feature_len * r for _, _, r in plan]
        try:
            starts = _place_bursts(spec.signal_len, segments, rng)
            break
        except DataError:
            if attempt == PLACEMENT_RETRIES - 1:
                starts = [
                    int(rng.integers(0, spec.signal_len - s + 1))
                    for s in segments
                ]
    x = np.zeros((1, spec.signal_len))
    for (bank, feat, reps), start in zip(plan, starts):
        x[0, start : start + spec.feature_len * reps] = np.tile(
            banks[bank, feat], reps
        )
    x = awgn(x, spec.snr_db, rng)
    labels = np.zeros(n_classes, dtype=np.uint8)
    labels[list(present)] = 1
    return Bag(x, labels, bag_id)


def generate_synthetic(spec: SynthSpec):
    """(train bags, test bags, feature banks).

    Test covers every non-empty label subset; train drops the single-label
    subsets.  Each subset contributes ``per_combo_*`` bags.
    """
    rng = np.random.default_rng(spec.seed)
    banks = make_features(spec)
    subsets = _label_subsets(spec.classes)
    train, test = [], []
    for subset in subsets:
        for i in range(spec.per_combo_test):
            tag = "".join(str(c) for c in subset)
            test.append(_make_bag(spec, banks, subset, rng, f"test-{tag}-{i}"))
        if len(subset) >= 2:
            for i in range(spec.per_combo_train):
                tag = "".join(str(c) for c in subset)
                train.append(_make_bag(spec, banks, subset, rng, f"train-{tag}-{i}"))
    return train, test, banks


# ---------------------------------------------------------------------------
# container formats


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated file while reading {what}")
    return buf


def write_dataset(path, bags) -> None:
    bags = list(bags)
    if not bags:
        raise DataError("cannot write an empty dataset")
    f, t = bags[0].data.shape
    c = bags[0].labels.shape[0]
    n = len(bags)
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<HHIIII", FORMAT_VERSION, 0, n, f, t, c))
        for bag in bags:
            if bag.data.shape != (f, t) or bag.labels.shape[0] != c:
                raise DataError("bags in one dataset must share dimensions")
            fh.write(bag.labels.astype(np.uint8).tobytes())
        for bag in bags:
            fh.write(np.ascontiguousarray(bag.data, dtype="<f8").tobytes())


def read_dataset(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != DATASET_MAGIC:
            raise DataError(f"bad dataset magic {magic!r}")
        version, _flags, n, f, t, c = struct.unpack(
            "<HHIIII", _read_exact(fh, 20, "header")
        )
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported dataset version {version}")
        for name, dim in (("N", n), ("F", f), ("T", t), ("C", c)):
            if not 0 < dim < _MAX_DIM:
                raise DataError(f"dataset dimension {name}={dim} out of range")
        if n * f * t > _MAX_DIM:
            raise DataError("dataset payload size out of range")
        labels = np.frombuffer(
            _read_exact(fh, n * c, "labels"), dtype=np.uint8
        ).reshape(n, c)
        if labels.max(initial=0) > 1:
            raise DataError("labels must be 0/1")
        payload = np.frombuffer(
            _read_exact(fh, n * f * t * 8, "payload"), dtype="<f8"
        ).reshape(n, f, t)
        if fh.read(1):
            raise DataError("trailing bytes after dataset payload")
    return [
        Bag(payload[i], labels[i], f"bag-{i}") for i in range(n)
    ]


def write_model(path, model: DictionaryModel, projection: Projection,
                hp: Hyperparams) -> None:
    c = model.n_classes
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HHIIII", FORMAT_VERSION, 0, model.height,
                             model.window, c, model.k0))
        fh.write(struct.pack(f"<{c}I", *model.kc))
        fh.write(np.ascontiguousarray(model.shared, dtype="<f8").tobytes())
        for bank in model.per_class:
            fh.write(np.ascontiguousarray(bank, dtype="<f8").tobytes())
        for w in projection.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(projection.bias, dtype="<f8").tobytes())
        fh.write(struct.pack("<6d", hp.lam, hp.eta, hp.mu, hp.delta, hp.rho,
                             hp.eps))


def read_model(path):
    """Returns (DictionaryModel, Projection, Hyperparams).

    The stored hyperparameter record covers the continuous knobs only; the
    structural fields are rebuilt from the model header.
    """
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MODEL_MAGIC:
            raise DataError(f"bad model magic {magic!r}")
        version, _flags, f, m, c, k0 = struct.unpack(
            "<HHIIII", _read_exact(fh, 20, "header")
        )
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported model version {version}")
        for name, dim in (("F", f), ("M", m), ("C", c)):
            if not 0 < dim < _MAX_DIM:
                raise DataError(f"model dimension {name}={dim} out of range")
        if not 0 <= k0 < _MAX_DIM:
            raise DataError(f"model dimension K0={k0} out of range")
        kc = struct.unpack(f"<{c}I", _read_exact(fh, 4 * c, "class atom counts"))

        def read_f64(count, what):
            return np.frombuffer(
                _read_exact(fh, count * 8, what), dtype="<f8"
            ).copy()

        shared = read_f64(k0 * f * m, "shared atoms").reshape(k0, f, m)
        per_class = tuple(
            read_f64(k * f * m, "class atoms").reshape(k, f, m) for k in kc
        )
        weights = tuple(read_f64(k, "projection weights") for k in kc)
        bias = read_f64(c, "projection bias")
        lam, eta, mu, delta, rho, eps = struct.unpack(
            "<6d", _read_exact(fh, 48, "hyperparameter record")
        )
        if fh.read(1):
            raise DataError("trailing bytes after model record")
    model = DictionaryModel(shared, per_class, m, f)
    projection = Projection(weights, bias)
    hp = Hyperparams(lam=lam, eta=eta, mu=mu, delta=delta, rho=rho, eps=eps,
                     window=m, k0=k0, kc=kc)
    return model, projection, hp
