import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expweights.operators import (BasisPoly, NodalPoly, differentiate, fourier_coeffs,
                                  orthogonality_check, partial_sum, primitive_vp,
                                  tail_operator, tail_operator_derivative, vallee_poussin,
                                  vallee_poussin_direct, vp_multipliers)
from expweights.weights import WeightSpec

from conftest import shared_context

DT = np.longdouble


def unit(rec, k):
    c = np.zeros(k + 1, dtype=DT)
    c[k] = 1
    return BasisPoly(rec, c)


def test_fourier_oracles(rec2):
    b = fourier_coeffs(rec2, unit(rec2, 3), 8)
    np.testing.assert_allclose(np.asarray(b, float), np.eye(8)[3], atol=1e-8)
    b1 = fourier_coeffs(rec2, lambda x: np.ones_like(x), 6)
    assert float(b1[0]) == pytest.approx(float(rec2.norm0 * rec2.mu0), rel=1e-8)
    assert np.max(np.abs(np.asarray(b1[1:], float))) <= 1e-8
    bo = fourier_coeffs(rec2, np.sin, 10)
    assert np.max(np.abs(np.asarray(bo[::2], float))) <= 1e-10


def test_partial_sum(rec2):
    p2 = unit(rec2, 2)
    np.testing.assert_allclose(np.asarray(partial_sum(rec2, lambda x: p2(x), 3).coeffs, float),
                               [0, 0, 1], atol=1e-8)
    assert np.max(np.abs(np.asarray(partial_sum(rec2, lambda x: unit(rec2, 5)(x), 2).coeffs,
                                    float))) <= 1e-8
    f = lambda x: unit(rec2, 1)(x) + 2 * unit(rec2, 2)(x)  # noqa: E731
    np.testing.assert_allclose(np.asarray(partial_sum(rec2, f, 4).coeffs, float), [0, 1, 2, 0],
                               atol=1e-8)


def test_vp_oracles(rec2):
    n = 4
    v = vallee_poussin(rec2, lambda x: unit(rec2, n)(x), n)
    np.testing.assert_allclose(np.asarray(v.padded(2 * n), float), np.eye(2 * n)[n], atol=1e-8)
    f = np.sin
    b = fourier_coeffs(rec2, f, 2 * n)
    assert float(vallee_poussin(rec2, f, n).coeffs[2 * n - 1]) == pytest.approx(
        float(b[2 * n - 1]) / n, rel=1e-12)
    z = vallee_poussin(rec2, lambda x: unit(rec2, 2 * n)(x), n)
    assert np.max(np.abs(np.asarray(z.coeffs, float))) <= 1e-8
    np.testing.assert_array_equal(np.asarray(vp_multipliers(2), float), [1, 1, 1, 0.5])


@pytest.mark.parametrize("n", [2, 3, 5])
def test_vp_two_forms(rec_erdos, n):
    a = vallee_poussin(rec_erdos, np.arctan, n).coeffs
    b = vallee_poussin_direct(rec_erdos, np.arctan, n).coeffs
    assert np.max(np.abs(np.asarray(a - b, float))) <= 1e-12


@given(st.integers(1, 16), st.lists(st.floats(-1, 1), min_size=1, max_size=17))
def test_reproduction(n, coeffs):
    rec = shared_context().rec(WeightSpec.erdos(0.0, 2.0, 1))
    c = np.asarray(coeffs[: n + 1], dtype=DT)
    P = BasisPoly(rec, c)
    fv = lambda x: P(x)  # noqa: E731 (a plain callable, so no shortcut is taken)
    if c.size <= n:
        s = partial_sum(rec, fv, n).padded(n)
        assert np.max(np.abs(np.asarray(s - P.padded(n), float))) <= 1e-8
    v = vallee_poussin(rec, fv, n).padded(2 * n)
    assert np.max(np.abs(np.asarray(v - P.padded(2 * n), float))) <= 1e-8


def test_orthogonality_residual(rec2):
    assert orthogonality_check(rec2, lambda x: unit(rec2, 9)(x), 3) <= 1e-8
    assert orthogonality_check(rec2, np.sin, 6) <= 1e-8
    assert orthogonality_check(rec2, lambda x: unit(rec2, 2)(x), 3) <= 1e-12


def test_basis_poly_calculus(rec_erdos):
    P = BasisPoly(rec_erdos, np.array([0.3, -1, 0.5, 2, 0.25], dtype=DT))
    x = np.array([-0.7, 0.2, 1.3], dtype=DT)
    h = DT(1e-6)
    fd = (P(x + h) - P(x - h)) / (2 * h)
    np.testing.assert_allclose(np.asarray(P.derivative()(x), float), np.asarray(fd, float),
                               rtol=1e-8)
    A = P.antiderivative()
    np.testing.assert_allclose(np.asarray(A.derivative()(x), float), np.asarray(P(x), float),
                               rtol=1e-12)
    assert abs(float(A(np.zeros(1, dtype=DT))[0])) <= 1e-18


def test_nodal(rec2):
    assert float(differentiate(NodalPoly.from_values(rec2, lambda x: 0 * x + 3, 4))(
        np.array([0.5]))[0]) == pytest.approx(0, abs=1e-12)
    cube = NodalPoly.from_values(rec2, lambda x: x ** 3, 3)
    assert float(differentiate(cube)(np.array([2.0], dtype=DT))[0]) == pytest.approx(12, rel=1e-10)
    p2 = unit(rec2, 2)
    x, h = DT(0.4), DT(1e-5)
    fd = (p2(np.array([x + h])) - p2(np.array([x - h]))) / (2 * h)
    got = differentiate(p2.to_nodal())(np.array([x]))
    assert float(got[0]) == pytest.approx(float(fd[0]), rel=1e-8)
    back = p2.to_nodal().to_basis().padded(3)
    np.testing.assert_allclose(np.asarray(back, float), [0, 0, 1], atol=1e-12)


def test_tail_oracles(freud2):
    t = np.zeros(1, dtype=DT)
    assert float(tail_operator(freud2, lambda s: 0 * s, t)[0]) == 0
    assert float(tail_operator(freud2, lambda s: np.ones_like(s), t)[0]) == pytest.approx(
        math.sqrt(math.pi / 8), rel=1e-14)
    # odd h has zero mass; at t=0 the operator is the half-line integral
    val = tail_operator(freud2, np.sin, t, centered=True)[0]
    half = tail_operator(freud2, np.sin, t)[0]
    assert float(val) == pytest.approx(float(half), rel=1e-15)


def test_tail_left_forms_agree(freud2, rec2):
    h = unit(rec2, 1)
    t = np.array([-1.5, -0.5], dtype=DT)
    a1 = tail_operator(freud2, h, t, centered=True)
    a2 = tail_operator(freud2, h, t)
    np.testing.assert_allclose(np.asarray(a1, float), np.asarray(a2, float), rtol=1e-12)


def test_tail_derivative(freud2):
    t = np.array([-0.6, 0.3, 1.2], dtype=DT)
    h = DT(1e-6)
    fd = (tail_operator(freud2, np.sin, t + h, True) - tail_operator(freud2, np.sin, t - h, True))
    np.testing.assert_allclose(np.asarray(fd / (2 * h), float),
                               np.asarray(tail_operator_derivative(freud2, np.sin, t, True), float),
                               rtol=1e-7)


def test_primitive(rec_erdos, table_erdos):
    n = 6
    V = primitive_vp(rec_erdos, table_erdos, np.sin, np.cos, n, 2, return_basis=True)
    x = np.linspace(-1.5, 1.5, 100).astype(DT)
    np.testing.assert_allclose(np.asarray(V.derivative()(x), float),
                               np.asarray(vallee_poussin(rec_erdos, np.cos, n)(x), float),
                               atol=1e-8)
    # polynomial g: V_n reproduces g exactly after the optimal constant
    P = BasisPoly(rec_erdos, np.array([0.5, 1, 0.2, -0.1], dtype=DT))
    Vp = primitive_vp(rec_erdos, table_erdos, P, P.derivative(), 4, 2, return_basis=True)
    assert np.max(np.abs(np.asarray((Vp - P).coeffs, float))) <= 1e-12
