"""Versioned battery of test functions with closed-form derivatives.

Each entry carries ``f, f', f'', f'''`` and, for polynomials, their degree, so
experiments can recognise exact cases (``f^(i)`` already a polynomial of the
target degree) without numerical guessing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .operators import BasisPoly

BATTERY_VERSION = "1"
SMOOTH_EPS = 0.1
DEFAULT_FUNCTIONS = ("sin", "arctan", "xgauss")


@dataclass(frozen=True)
class TestFunction:
    """A named function with derivatives ``derivs[0..order]``."""

    __test__ = False  # not a pytest class

    name: str
    derivs: tuple
    poly_degree: int | None = None
    description: str = ""

    @property
    def order(self):
        return len(self.derivs) - 1

    def __call__(self, x):
        return self.derivs[0](x)

    def derivative(self, i):
        if i > self.order:
            raise ValueError(f"{self.name} has only {self.order} derivatives available")
        return self.derivs[i]

    def derivative_degree(self, i):
        """Degree of ``f^(i)`` if it is a polynomial, else ``None`` (``-1`` for zero)."""
        if self.poly_degree is None:
            return None
        return self.poly_degree - i if self.poly_degree >= i else -1


def _sin():
    return TestFunction("sin", (np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
                        description="sin x")


def _arctan():
    return TestFunction("arctan", (
        np.arctan,
        lambda x: 1 / (1 + x * x),
        lambda x: -2 * x / (1 + x * x) ** 2,
        lambda x: (6 * x * x - 2) / (1 + x * x) ** 3,
    ), description="arctan x")


def _xgauss():
    g = lambda x: np.exp(-x * x / 2)  # noqa: E731
    return TestFunction("xgauss", (
        lambda x: x * g(x),
        lambda x: (1 - x * x) * g(x),
        lambda x: (x ** 3 - 3 * x) * g(x),
        lambda x: -(x ** 4 - 6 * x * x + 3) * g(x),
    ), description="x exp(-x^2/2)")


def _smoothabs3(eps=SMOOTH_EPS):
    e2 = eps * eps
    return TestFunction("smoothabs3", (
        lambda x: (x * x + e2) ** 1.5 - eps ** 3,
        lambda x: 3 * x * np.sqrt(x * x + e2),
        lambda x: 3 * (2 * x * x + e2) / np.sqrt(x * x + e2),
        lambda x: 3 * x * (2 * x * x + 3 * e2) / (x * x + e2) ** 1.5,
    ), description=f"(x^2+{eps:g}^2)^(3/2) - {eps:g}^3, a smoothed |x|^3")


NAMED = {
    "sin": _sin,
    "arctan": _arctan,
    "xgauss": _xgauss,
    "smoothabs3": _smoothabs3,
}

_PK = re.compile(r"^p\d+(\+p\d+)*$")


def basis_combination(rec, ks, coeffs=None):
    """``sum c_j p_{k_j}`` with derivatives from the connection matrix."""
    ks = [int(k) for k in ks]
    coeffs = [1.0] * len(ks) if coeffs is None else list(coeffs)
    c = np.zeros(max(ks) + 1)
    for k, a in zip(ks, coeffs):
        c[k] += a
    P = BasisPoly(rec, c)
    polys = [P, P.derivative(1), P.derivative(2), P.derivative(3)]
    name = "+".join(f"p{k}" for k in ks)
    return TestFunction(name, tuple(polys), poly_degree=max(ks), description=name)


def get_function(name, rec=None):
    """Battery entry by name; ``p3+p5`` style names need a recurrence table."""
    if name in NAMED:
        return NAMED[name]()
    if _PK.match(name):
        if rec is None:
            raise ValueError(f"{name} needs a recurrence table")
        return basis_combination(rec, [int(s[1:]) for s in name.split("+")])
    raise ValueError(f"unknown test function {name!r}; known: {sorted(NAMED)} or p<k>+p<j>")


def centered(rec, fn):
    """``fn - (int fn w^2) / (int w^2)`` so that the result integrates to 0 against ``w^2``."""
    rule = rec.rule
    vals = fn(rule.nodes)
    mean = (rule.weights @ vals) / np.sum(rule.weights)
    return lambda x: fn(x) - mean


def tail_battery(rec):
    """Six functions ``h`` with ``int h w^2 = 0`` for the tail-operator checks."""
    sa = _smoothabs3()
    return {
        "sin": np.sin,
        "arctan": np.arctan,
        "p1": BasisPoly(rec, [0, 1]),
        "p2": BasisPoly(rec, [0, 0, 1]),
        "cos-mean": centered(rec, np.cos),
        "smoothabs3-mean": centered(rec, sa.derivs[0]),
    }
