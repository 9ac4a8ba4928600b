"""Jet arithmetic: layout, exact algebra, analytic primitives, error paths.

Finite-difference oracles live in test_expr/test_acceptance; here the
independent checks are hand-rolled convolutions and Leibniz sums.
"""
import itertools
import math

import numpy as np
import pytest

from jetgeo.jets import (
    Jet,
    JetMismatchError,
    JetOrderError,
    NonFiniteError,
    extract_partial,
    jet_add,
    jet_exp,
    jet_mul,
    jet_space,
)


def binom(n, k):
    return math.comb(n, k)


def dyadic_jet(space, rng):
    # small dyadic coefficients keep every product and sum exact in floats
    return Jet(space, rng.integers(-8, 9, size=space.size) / 8.0)


# ------------------------------------------------------------------ layout
def test_space_sizes():
    for n_vars, order in itertools.product((1, 2, 3), (0, 1, 2, 3, 4)):
        sp = jet_space(tuple(f"v{i}" for i in range(n_vars)), order)
        assert sp.size == binom(order + n_vars, n_vars)
        assert len(sp.multis) == sp.size
        assert len(set(sp.multis)) == sp.size


def test_multis_graded_and_ranked():
    sp = jet_space(("a", "b"), 3)
    degrees = [sum(m) for m in sp.multis]
    assert degrees == sorted(degrees)
    for r, m in enumerate(sp.multis):
        assert sp.rank[m] == r
    # within a degree block the entries are lexicographic
    block = [m for m in sp.multis if sum(m) == 1]
    assert block == sorted(block)


def test_space_cached():
    assert jet_space(("a", "b"), 2) is jet_space(("a", "b"), 2)
    assert jet_space(("a", "b"), 2) is not jet_space(("a", "b"), 3)


def test_constant_and_variable():
    sp = jet_space(("t",), 3)
    c = sp.constant(2.5)
    assert c.value() == 2.5
    assert np.array_equal(c.coef[1:], np.zeros(3))
    t = sp.variable("t", 1.5)
    assert t.value() == 1.5
    assert t.coef[1] == 1.0
    assert np.array_equal(t.coef[2:], np.zeros(2))


# ----------------------------------------------------------------- algebra
def test_binomial_square():
    sp = jet_space(("t",), 2)
    one_plus_t = sp.constant(1.0) + sp.variable("t", 0.0)
    sq = one_plus_t * one_plus_t
    assert np.array_equal(sq.coef, [1.0, 2.0, 1.0])


def test_add_identity():
    sp = jet_space(("a", "b"), 3)
    rng = np.random.default_rng(0)
    a = dyadic_jet(sp, rng)
    assert np.array_equal(jet_add(a, sp.zero()).coef, a.coef)


def test_truncation_discards_top_order():
    sp = jet_space(("t",), 1)
    t = sp.variable("t", 0.0)
    assert (t * t).is_zero()


def test_mul_commutative_bit_exact():
    rng = np.random.default_rng(1)
    sp = jet_space(("a", "b", "c"), 4)
    for _ in range(20):
        x = Jet(sp, rng.standard_normal(sp.size))
        y = Jet(sp, rng.standard_normal(sp.size))
        assert np.array_equal((x * y).coef, (y * x).coef)


def test_mul_associative():
    rng = np.random.default_rng(2)
    sp = jet_space(("a", "b"), 4)
    for _ in range(20):
        x, y, z = (Jet(sp, rng.standard_normal(sp.size)) for _ in range(3))
        left = (x * y) * z
        right = x * (y * z)
        np.testing.assert_allclose(left.coef, right.coef, rtol=1e-13, atol=1e-13)


def test_mul_matches_direct_convolution():
    # independent oracle: sum over all multi-index splittings
    rng = np.random.default_rng(3)
    sp = jet_space(("a", "b"), 3)
    x, y = dyadic_jet(sp, rng), dyadic_jet(sp, rng)
    prod = jet_mul(x, y)
    for m in sp.multis:
        total = 0.0
        for ma in sp.multis:
            if all(a <= t for a, t in zip(ma, m)):
                mb = tuple(t - a for a, t in zip(ma, m))
                total += x.coef[sp.rank[ma]] * y.coef[sp.rank[mb]]
        assert prod.coef[sp.rank[m]] == total


def test_leibniz_exhaustive():
    # extract_partial(a*b, m) == sum_{s<=m} prod(C(m_i, s_i)) da(s) db(m-s),
    # exact with dyadic inputs
    rng = np.random.default_rng(4)
    for n_vars in (1, 2, 3):
        names = tuple(f"v{i}" for i in range(n_vars))
        sp = jet_space(names, 3)
        a, b = dyadic_jet(sp, rng), dyadic_jet(sp, rng)
        ab = a * b
        for m in sp.multis:
            expansion = 0.0
            for s in itertools.product(*(range(mi + 1) for mi in m)):
                weight = 1.0
                for mi, si in zip(m, s):
                    weight *= binom(mi, si)
                rest = tuple(mi - si for mi, si in zip(m, s))
                expansion += weight * a.extract(s) * b.extract(rest)
            assert extract_partial(ab, m) == expansion


def test_scaled_and_neg():
    sp = jet_space(("t",), 2)
    rng = np.random.default_rng(5)
    a = dyadic_jet(sp, rng)
    assert np.array_equal(a.scaled(-1.0).coef, (-a).coef)
    assert np.array_equal((a - a).coef, np.zeros(sp.size))


def test_pow_matches_repeated_product():
    sp = jet_space(("a", "b"), 3)
    rng = np.random.default_rng(6)
    a = dyadic_jet(sp, rng)
    assert np.array_equal(a.pow(0).coef, sp.constant(1.0).coef)
    assert np.array_equal(a.pow(1).coef, a.coef)
    np.testing.assert_allclose(a.pow(3).coef, (a * a * a).coef, rtol=1e-14, atol=1e-14)
    with pytest.raises(ValueError):
        a.pow(-2)


# ----------------------------------------------------------- deriv/extract
def test_deriv_shifts_coefficients():
    sp = jet_space(("a", "b"), 3)
    rng = np.random.default_rng(7)
    x = dyadic_jet(sp, rng)
    d = x.deriv("a")
    assert d.order == 2
    for m in d.space.multis:
        up = (m[0] + 1, m[1])
        assert d.coef[d.space.rank[m]] == x.coef[sp.rank[up]] * (m[0] + 1)


def test_deriv_foreign_variable_is_zero():
    sp = jet_space(("a",), 2)
    x = sp.variable("a", 1.0)
    assert x.deriv("q").is_zero()


def test_extract_examples():
    sp = jet_space(("y", "z1"), 3)
    y = sp.variable("y", 0.0)
    z1 = sp.variable("z1", 0.0)
    j = y * y * z1
    assert j.extract((2, 1)) == 2.0
    assert j.extract((0, 0)) == j.value() == 0.0

    sp1 = jet_space(("y",), 3)
    e = sp1.variable("y", 1.0).exp()
    # third derivative of e^y at 1, with a finite-difference oracle
    h = 1e-3
    fd = (math.exp(1 + 2 * h) - 2 * math.exp(1 + h) + 2 * math.exp(1 - h)
          - math.exp(1 - 2 * h)) / (2 * h ** 3)
    assert e.extract((3,)) == pytest.approx(fd, rel=1e-5)
    assert e.extract((3,)) == pytest.approx(math.e, rel=1e-14)


def test_extract_validation():
    sp = jet_space(("a", "b"), 2)
    j = sp.constant(1.0)
    with pytest.raises(JetOrderError):
        j.extract((2, 1))
    with pytest.raises(JetOrderError):
        j.extract((-1, 0))
    with pytest.raises(JetMismatchError):
        j.extract((1,))


def test_truncated():
    sp = jet_space(("a", "b"), 3)
    rng = np.random.default_rng(8)
    x = dyadic_jet(sp, rng)
    t = x.truncated(1)
    assert t.order == 1
    assert np.array_equal(t.coef, x.coef[: t.space.size])
    assert x.truncated(3) is x
    with pytest.raises(JetOrderError):
        x.truncated(4)


# ------------------------------------------------------------- primitives
def test_exp_series_at_zero():
    sp = jet_space(("t",), 4)
    e = sp.variable("t", 0.0).exp()
    np.testing.assert_allclose(
        e.coef, [1.0, 1.0, 0.5, 1 / 6, 1 / 24], rtol=1e-15
    )


def test_exp_of_constant():
    sp = jet_space(("t",), 3)
    e = sp.constant(2.0).exp()
    assert e.value() == pytest.approx(math.exp(2.0), rel=1e-15)
    assert np.array_equal(e.coef[1:], np.zeros(3))


def test_exp_of_sum_matches_scaled_argument():
    sp = jet_space(("y",), 5)
    y = sp.variable("y", 0.25)
    lhs = (y + y.scaled(2.0)).exp()
    rhs = y.scaled(3.0).exp()
    np.testing.assert_allclose(lhs.coef, rhs.coef, rtol=1e-14)
    want = [math.exp(0.75) * 3.0 ** k / math.factorial(k) for k in range(6)]
    np.testing.assert_allclose(lhs.coef, want, rtol=1e-14)


def test_primitive_derivative_identities():
    sp = jet_space(("t",), 6)
    t = sp.variable("t", 0.7)
    e = t.exp()
    np.testing.assert_allclose(e.deriv("t").coef, e.truncated(5).coef, rtol=1e-14)
    s, c = t.sin(), t.cos()
    np.testing.assert_allclose(s.deriv("t").coef, c.truncated(5).coef, rtol=5e-14, atol=1e-16)
    np.testing.assert_allclose(c.deriv("t").coef, (-s).truncated(5).coef, rtol=5e-14, atol=1e-16)
    np.testing.assert_allclose((s * s + c * c).coef, sp.constant(1.0).coef, atol=1e-15)


def test_exp_overflow_raises():
    sp = jet_space(("t",), 2)
    with pytest.raises(NonFiniteError):
        sp.variable("t", 1000.0).exp()
    jet_exp(sp.variable("t", 700.0))  # close to the edge but still finite


# ----------------------------------------------------------------- errors
def test_mismatched_operands():
    a = jet_space(("t",), 2).constant(1.0)
    b = jet_space(("u",), 2).constant(1.0)
    c = jet_space(("t",), 3).constant(1.0)
    with pytest.raises(JetMismatchError):
        a + b
    with pytest.raises(JetMismatchError):
        jet_mul(a, c)
