import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cdmi import polyalg
from cdmi.polyalg import OrderMismatchError, PolyDomainError, PolyMap, TruncatedPoly

coef = st.floats(-2.0, 2.0, allow_nan=False)
small = st.floats(-0.05, 0.05, allow_nan=False)
point = st.lists(small, min_size=6, max_size=6).map(np.array)


def linear_poly(c0, lin, order):
    c = np.zeros(polyalg.basis(order).size)
    c[0] = c0
    c[1:7] = lin
    return TruncatedPoly(c, order)


def random_poly(rng, order, degree=None, scale=1.0):
    b = polyalg.basis(order)
    c = rng.normal(scale=scale, size=b.size)
    if degree is not None:
        c[b.degree > degree] = 0.0
    return TruncatedPoly(c, order)


def test_basis_sizes():
    # number of monomials in six variables up to degree n is C(n + 6, 6)
    for n in range(1, 6):
        assert polyalg.basis(n).size == math.comb(n + 6, 6)
    assert polyalg.basis(5).size == 462


def test_basis_rejects_order_zero():
    with pytest.raises(ValueError):
        polyalg.basis(0)


def test_product_drops_terms_above_order():
    x = TruncatedPoly.variable(0, 2)
    assert (x * x * x).terms() == {}
    assert (x * x).terms() == {(2, 0, 0, 0, 0, 0): 1.0}


def test_example_square_of_shifted_variable():
    p = TruncatedPoly.variable(0, 3, 1.0) ** 2
    assert p.terms() == {(0,) * 6: 1.0, (1, 0, 0, 0, 0, 0): 2.0, (2, 0, 0, 0, 0, 0): 1.0}


@given(st.integers(0, 2**32 - 1), point)
def test_exact_product_matches_pointwise(seed, delta):
    # degree 2 x degree 3 stays within order 5, so nothing is truncated
    rng = np.random.default_rng(seed)
    p = random_poly(rng, 5, degree=2)
    q = random_poly(rng, 5, degree=3)
    assert (p * q)(delta) == pytest.approx(p(delta) * q(delta), rel=1e-12, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_ring_laws(seed):
    rng = np.random.default_rng(seed)
    p, q, r = (random_poly(rng, 4) for _ in range(3))
    np.testing.assert_allclose((p * q).coeffs, (q * p).coeffs, atol=1e-12)
    np.testing.assert_allclose(((p * q) * r).coeffs, (p * (q * r)).coeffs, atol=1e-10)
    np.testing.assert_allclose((p * (q + r)).coeffs, (p * q + p * r).coeffs, atol=1e-10)


def test_scalar_operations():
    x = TruncatedPoly.variable(1, 3, 2.0)
    assert (3 - x).cons == 1.0
    assert (x / 2).coefficient((0, 1, 0, 0, 0, 0)) == 0.5
    assert (-x).cons == -2.0
    np.testing.assert_allclose((1 / x * x).coeffs, TruncatedPoly.constant(1.0, 3).coeffs, atol=1e-15)


def test_order_mismatch():
    with pytest.raises(OrderMismatchError):
        TruncatedPoly.variable(0, 2) + TruncatedPoly.variable(0, 3)
    with pytest.raises(OrderMismatchError):
        PolyMap.vstack([PolyMap.identity(np.zeros(6), 2), PolyMap.identity(np.zeros(6), 3)])


@given(st.floats(0.2, 5.0), st.lists(coef, min_size=6, max_size=6))
def test_sqrt_squares_back(c0, lin):
    rng = np.random.default_rng(0)
    p = linear_poly(c0, lin, 5) + 0.1 * random_poly(rng, 5)
    if p.cons <= 0:
        return
    s = polyalg.sqrt(p)
    np.testing.assert_allclose((s * s).coeffs, p.coeffs, atol=1e-10 * max(1.0, np.abs(p.coeffs).max()))


@given(st.floats(0.3, 4.0), st.lists(coef, min_size=6, max_size=6))
def test_recip_inverts(c0, lin):
    p = linear_poly(c0, lin, 4)
    one = polyalg.recip(p) * p
    np.testing.assert_allclose(one.coeffs, TruncatedPoly.constant(1.0, 4).coeffs, atol=1e-9 * (1 + max(map(abs, lin)) / c0) ** 4)


def test_power_consistent_with_sqrt_and_recip():
    p = linear_poly(1.7, [0.3, -0.2, 0.1, 0.0, 0.5, -0.4], 5)
    np.testing.assert_allclose(polyalg.power(p, 0.5).coeffs, polyalg.sqrt(p).coeffs, atol=1e-14)
    np.testing.assert_allclose(polyalg.power(p, -1.0).coeffs, polyalg.recip(p).coeffs, atol=1e-14)
    np.testing.assert_allclose(polyalg.power(p, -1.5).coeffs,
                               (polyalg.recip(p) * polyalg.recip(polyalg.sqrt(p))).coeffs, atol=1e-13)


def test_domain_errors():
    z = TruncatedPoly.variable(0, 3, 0.0)
    with pytest.raises(PolyDomainError):
        polyalg.recip(z)
    with pytest.raises(PolyDomainError):
        polyalg.sqrt(z - 1.0)
    with pytest.raises(PolyDomainError):
        polyalg.asin(z + 1.0)
    with pytest.raises(PolyDomainError):
        polyalg.atan2(z, z)
    with pytest.raises(ValueError):
        polyalg.intrinsic("exp", z + 1.0)


@pytest.mark.parametrize("name,f,c", [
    ("recip", lambda x: 1 / x, 1.3),
    ("sqrt", math.sqrt, 0.7),
    ("asin", math.asin, 0.4),
    ("atan", math.atan, -0.9),
])
def test_univariate_intrinsics_against_math(name, f, c):
    # polynomial of order n in one variable: error of the truncated series is O(h^(n+1))
    order = 5
    p = TruncatedPoly.variable(2, order, c)
    g = polyalg.intrinsic(name, p)
    for h in (1e-3, -2e-3, 5e-3):
        d = np.zeros(6)
        d[2] = h
        assert g(d) == pytest.approx(f(c + h), abs=50 * abs(h) ** (order + 1) + 1e-15)


@pytest.mark.parametrize("cx,cy", [(1.0, 0.3), (-1.0, 0.3), (-1.0, -0.3), (0.2, 1.0), (0.2, -1.0), (-0.1, 2.0)])
def test_atan2_all_branches(cx, cy):
    order = 5
    x = TruncatedPoly.variable(0, order, cx) + 0.3 * TruncatedPoly.variable(1, order)
    y = TruncatedPoly.variable(1, order, cy) - 0.2 * TruncatedPoly.variable(0, order)
    a = polyalg.atan2(y, x)
    assert a.cons == pytest.approx(math.atan2(cy, cx), abs=1e-15)
    for d in np.random.default_rng(1).normal(scale=1e-3, size=(5, 6)):
        assert a(d) == pytest.approx(math.atan2(y(d), x(d)), abs=1e-12)


def test_deriv_of_monomial():
    p = TruncatedPoly.from_terms({(2, 1, 0, 0, 0, 0): 3.0, (0, 0, 0, 0, 0, 1): 1.0}, 4)
    assert p.deriv(0).terms() == {(1, 1, 0, 0, 0, 0): 6.0}
    assert p.deriv(5).terms() == {(0,) * 6: 1.0}


@given(st.integers(0, 2**32 - 1), point)
def test_jacobian_matches_finite_differences(seed, delta):
    rng = np.random.default_rng(seed)
    m = PolyMap.from_polys(random_poly(rng, 4) for _ in range(3))
    jac = m.jacobian_at(delta)
    h = 1e-6
    fd = np.empty_like(jac)
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        fd[:, k] = (m(delta + e) - m(delta - e)) / (2 * h)
    np.testing.assert_allclose(jac, fd, atol=1e-7)


def test_jacobian_at_zero_is_linear_block():
    rng = np.random.default_rng(3)
    m = PolyMap.from_polys(random_poly(rng, 3) for _ in range(4))
    np.testing.assert_array_equal(m.jacobian_at(np.zeros(6)), m.linear())


def test_batch_evaluation():
    rng = np.random.default_rng(4)
    p = random_poly(rng, 3)
    pts = rng.normal(size=(7, 6))
    np.testing.assert_allclose(p(pts), [p(x) for x in pts], rtol=1e-13)


def test_text_round_trip():
    rng = np.random.default_rng(5)
    p = random_poly(rng, 3)
    q = TruncatedPoly.from_text(p.to_text(), 3)
    np.testing.assert_array_equal(p.coeffs, q.coeffs)


def test_truncation_error_halving_slope():
    # sqrt(1 + x1 + x2) expanded to order n: error at scale h behaves like h^(n+1)
    for order in (2, 3, 4):
        p = polyalg.sqrt(1.0 + TruncatedPoly.variable(0, order) + TruncatedPoly.variable(1, order))
        errs = []
        hs = [0.1 / 2**k for k in range(4)]
        for h in hs:
            d = np.zeros(6)
            d[:2] = h
            errs.append(abs(p(d) - math.sqrt(1 + 2 * h)))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= order + 0.5


def test_polymap_views():
    m = PolyMap.identity(np.arange(6.0), 2)
    np.testing.assert_array_equal(m.cons, np.arange(6.0))
    np.testing.assert_array_equal(m.linear(), np.eye(6))
    assert len(m.components) == 6
    sq = PolyMap.from_polys([m[0] * m[0]])
    assert np.count_nonzero(sq.truncate(1).coeffs[:, 7:]) == 0
