import functools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expweights.mrs import MrsTable
from expweights.quadrature import build_rule, gauss_legendre, integrate
from expweights.weights import WeightSpec


@functools.lru_cache(maxsize=None)
def _rule():
    w = WeightSpec.freud(2.0)
    return build_rule(w, MrsTable(w), 10)


@pytest.fixture(scope="module")
def rule2():
    return _rule()


def test_gaussian_moments(rule2):
    assert float(integrate(rule2, lambda t: np.ones_like(t))) == pytest.approx(
        math.sqrt(math.pi / 2), rel=1e-10)
    assert float(integrate(rule2, lambda t: t)) == 0.0
    assert float(integrate(rule2, lambda t: t * t)) == pytest.approx(
        0.25 * math.sqrt(math.pi / 2), rel=1e-10)


@given(st.integers(0, 10))
def test_even_moments(k):
    # int t^{2k} e^{-2t^2} = Gamma(k + 1/2) / 2^{k + 1/2}
    rule = _rule()
    got = float(integrate(rule, lambda t: t ** (2 * k)))
    assert got == pytest.approx(math.gamma(k + 0.5) / 2 ** (k + 0.5), rel=1e-9)


@given(st.integers(0, 9))
def test_odd_moments_vanish(k):
    assert abs(float(integrate(_rule(), lambda t: t ** (2 * k + 1)))) <= 1e-14


def test_rule_symmetry(rule2):
    np.testing.assert_array_equal(rule2.nodes, -rule2.nodes[::-1])
    np.testing.assert_array_equal(rule2.weights, rule2.weights[::-1])
    assert np.all(rule2.weights > 0)


def test_gauss_legendre():
    x, w = gauss_legendre(12)
    assert float(np.sum(w)) == pytest.approx(2.0, rel=1e-18)
    assert float(w @ x ** 22) == pytest.approx(2 / 23, rel=1e-17)


def test_orthogonality_oracle(rec2):
    from expweights.orthopoly import eval_pk
    got = integrate(rec2.rule, lambda t: eval_pk(rec2, 3, t) * eval_pk(rec2, 5, t))
    assert abs(float(got)) <= 1e-8


def test_non_finite_integrand(rule2):
    with pytest.raises(ValueError):
        integrate(rule2, lambda t: np.where(t > 0, np.inf, 0.0))


def test_degree_validation(freud2, table2):
    with pytest.raises(ValueError):
        build_rule(freud2, table2, 0)
