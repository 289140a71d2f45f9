import numpy as np
import pytest

from wscdl.convops import (
    atom_majorizer_vector,
    atom_toeplitz_adjoint,
    atom_toeplitz_apply,
    coeff_majorizer_vector,
    coeff_toeplitz_adjoint,
    coeff_toeplitz_apply,
    conv_truncated,
    pool,
    toeplitz_from_atom,
    toeplitz_from_coeffs,
    truncate,
)
from wscdl.core import DataError


def brute_truncate_windows(x, m, t):
    """All length-t contiguous windows of x; the truncation must be one of them."""
    return [x[i : i + t] for i in range(len(x) - t + 1)]


class TestTruncate:
    def test_odd_m_centered(self):
        out = truncate(np.array([1.0, 2, 3, 4, 5, 6]), 3, 4)
        assert np.array_equal(out, [2, 3, 4, 5])

    def test_m1_identity(self):
        x = np.arange(5.0)
        assert np.array_equal(truncate(x, 1, 5), x)

    def test_even_m_left_floor(self):
        out = truncate(np.array([1.0, 2, 3, 4, 5, 6]), 4, 3)
        assert np.array_equal(out, [2, 3, 4])

    def test_even_m_is_a_valid_window(self):
        # the even-M rule must pick one of the enumerable index windows
        x = np.arange(9.0)
        m, t = 4, 6
        out = truncate(x, m, t)
        windows = brute_truncate_windows(x, m, t)
        assert any(np.array_equal(out, w) for w in windows)
        assert np.array_equal(out, x[(m - 1) // 2 : (m - 1) // 2 + t])

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            truncate(np.zeros(5), 3, 4)

    def test_pad_then_truncate_identity(self):
        rng = np.random.default_rng(0)
        for m, t in [(3, 7), (4, 7), (1, 5), (6, 6)]:
            s = rng.standard_normal(t)
            lo = (m - 1) // 2
            padded = np.concatenate([np.zeros(lo), s, np.zeros(m - 1 - lo)])
            assert np.array_equal(truncate(padded, m, t), s)


class TestConvTruncated:
    def test_identity_filter(self):
        out = conv_truncated(np.array([[1.0]]), np.array([2.0, 0, 1]))
        assert np.array_equal(out, [[2, 0, 1]])

    def test_centered_impulse(self):
        out = conv_truncated(np.array([[0.0, 1, 0]]), np.array([1.0, 2, 3, 4]))
        assert np.array_equal(out, [[1, 2, 3, 4]])

    def test_matches_toeplitz_product(self):
        rng = np.random.default_rng(1)
        for m, t in [(1, 8), (3, 8), (5, 16), (4, 9)]:
            atom = rng.standard_normal((2, m))
            coeff = rng.standard_normal(t)
            ts = toeplitz_from_coeffs(coeff, m)
            out = conv_truncated(atom, coeff)
            for r in range(2):
                assert np.max(np.abs(out[r] - ts @ atom[r])) <= 1e-12


class TestToeplitzFromCoeffs:
    def test_impulse_coeff(self):
        ts = toeplitz_from_coeffs(np.array([1.0, 0, 0, 0]), 3)
        d = np.array([5.0, 6, 7])
        expect = truncate(np.convolve(d, [1.0, 0, 0, 0]), 3, 4)
        assert np.allclose(ts @ d, expect)

    def test_zero_coeff(self):
        ts = toeplitz_from_coeffs(np.zeros(6), 3)
        assert not np.any(ts.entries)

    def test_random_oracle(self):
        rng = np.random.default_rng(2)
        for m in (1, 3, 5, 30):
            for t in (8, 64, 1600):
                if m > t:
                    continue
                for _ in range(5):
                    coeff = rng.standard_normal(t)
                    d = rng.standard_normal(m)
                    ts = toeplitz_from_coeffs(coeff, m)
                    direct = conv_truncated(d[None, :], coeff)[0]
                    assert np.max(np.abs(ts @ d - direct)) <= 1e-12


class TestToeplitzFromAtom:
    def test_centered_impulse_is_identity(self):
        ts = toeplitz_from_atom(np.array([0.0, 1, 0]), 6)
        assert np.allclose(ts.entries, np.eye(6))

    def test_zero_atom(self):
        ts = toeplitz_from_atom(np.zeros(3), 5)
        assert not np.any(ts.entries)

    def test_random_oracle(self):
        rng = np.random.default_rng(3)
        for m, t in [(1, 8), (3, 8), (5, 12), (4, 10)]:
            for _ in range(10):
                a = rng.standard_normal(m)
                s = rng.standard_normal(t)
                ts = toeplitz_from_atom(a, t)
                direct = conv_truncated(a[None, :], s)[0]
                assert np.max(np.abs(ts @ s - direct)) <= 1e-12


class TestMatrixFreeForms:
    """The convolution shortcuts must match dense Toeplitz algebra exactly."""

    @pytest.mark.parametrize("m,t", [(1, 6), (2, 6), (3, 8), (4, 9), (5, 5), (30, 64)])
    def test_coeff_apply_and_adjoint(self, m, t):
        rng = np.random.default_rng(4)
        for _ in range(5):
            coeff = rng.standard_normal(t)
            d = rng.standard_normal(m)
            r = rng.standard_normal(t)
            ts = toeplitz_from_coeffs(coeff, m).entries
            assert np.max(np.abs(coeff_toeplitz_apply(coeff, d) - ts @ d)) <= 1e-12
            assert np.max(np.abs(coeff_toeplitz_adjoint(coeff, r, m) - ts.T @ r)) <= 1e-12

    @pytest.mark.parametrize("m,t", [(1, 6), (2, 6), (3, 8), (4, 9), (5, 5)])
    def test_atom_apply_and_adjoint(self, m, t):
        rng = np.random.default_rng(5)
        for _ in range(5):
            a = rng.standard_normal(m)
            s = rng.standard_normal(t)
            r = rng.standard_normal(t)
            ts = toeplitz_from_atom(a, t).entries
            assert np.max(np.abs(atom_toeplitz_apply(a, s) - ts @ s)) <= 1e-12
            assert np.max(np.abs(atom_toeplitz_adjoint(a, r) - ts.T @ r)) <= 1e-12

    @pytest.mark.parametrize("m,t", [(3, 8), (4, 9), (5, 12)])
    def test_majorizer_vectors(self, m, t):
        rng = np.random.default_rng(6)
        for scale in (1.0, 4.0):
            coeff = rng.standard_normal(t)
            a = rng.standard_normal(m)
            ts = np.abs(toeplitz_from_coeffs(coeff, m).entries)
            expect = scale * ts.T @ (ts @ np.ones(m))
            assert np.allclose(coeff_majorizer_vector(coeff, m, scale), expect)
            ta = np.abs(toeplitz_from_atom(a, t).entries)
            expect = scale * ta.T @ (ta @ np.ones(t))
            assert np.allclose(atom_majorizer_vector(a, t, scale), expect)


class TestPool:
    def test_avg(self):
        assert np.array_equal(pool(np.array([[1.0, 3], [3, 1]]), "avg"), [2, 2])

    def test_max(self):
        assert np.array_equal(pool(np.array([[1.0, 3], [3, 1]]), "max"), [3, 3])

    def test_constant_invariance(self):
        mat = np.full((7, 3), 2.5)
        assert np.array_equal(pool(mat, "avg"), pool(mat, "max"))

    def test_bad_mode(self):
        with pytest.raises(DataError):
            pool(np.ones((2, 2)), "median")


def test_translation_covariance():
    # shifting the coefficient against an impulse atom shifts the interior
    rng = np.random.default_rng(7)
    m, t = 5, 20
    coeff = np.zeros(t)
    coeff[8] = 1.0
    atom = rng.standard_normal((1, m))
    base = conv_truncated(atom, coeff)[0]
    shifted = conv_truncated(atom, np.roll(coeff, 1))[0]
    interior = slice(m, t - m)
    assert np.allclose(base[interior], np.roll(shifted, -1)[interior])
