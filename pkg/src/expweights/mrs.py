"""Mhaskar-Rakhmanov-Saff numbers and the band functions built on them.

The MRS number ``a_x`` of ``w = exp(-Q)`` is the positive root of

    x = (2/pi) * int_0^{pi/2} a sin(t) Q'(a sin(t)) dt,

i.e. the usual defining integral after the substitution ``u = sin(t)``.
"""

from __future__ import annotations

import threading
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

RHS_START_POINTS = 128
RHS_MAX_POINTS = 1 << 14
RHS_RTOL = 1e-12
ROOT_TOL = 1e-10


class MrsOverflowError(OverflowError):
    pass


@lru_cache(maxsize=None)
def _theta_rule(n):
    t, w = np.polynomial.legendre.leggauss(n)
    quarter = np.pi / 4
    return quarter * (t + 1), quarter * w


def mrs_rhs(weight, a):
    """Right-hand side of the MRS equation at scale ``a`` (increasing in ``a``)."""
    if a <= 0:
        if a == 0:
            return 0.0
        raise ValueError("a must be positive")
    n = RHS_START_POINTS
    prev = None
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            theta, wts = _theta_rule(n)
            s = a * np.sin(theta)
            val = float(2 / np.pi * np.sum(wts * s * weight.dQ(s)))
            if not np.isfinite(val):
                return float("inf")
            if prev is not None and abs(val - prev) <= RHS_RTOL * abs(val):
                return val
            if n >= RHS_MAX_POINTS:
                return val
            prev = val
            n *= 2


class MrsTable:
    """Cached map ``x -> a_x`` for one weight.  Safe to share between threads."""

    def __init__(self, weight):
        self.weight = weight
        self._cache = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"MrsTable({self.weight.label}, cached={len(self._cache)})"

    def a(self, x):
        return compute_a(self, x)

    def T(self, x):
        """``T(a_x)``."""
        return float(self.weight.T(np.array([self.a(x)]))[0])

    def delta(self, u):
        return delta(self, u)

    def phi(self, u, x):
        return phi(self, u, x)

    def cached(self):
        with self._lock:
            return sorted(self._cache.items())


def compute_a(table, x):
    """Solve the MRS equation for ``a_x`` (cached)."""
    x = float(x)
    if not x > 0:
        raise ValueError("x must be positive")
    with table._lock:
        hit = table._cache.get(x)
    if hit is not None:
        return hit
    weight = table.weight
    lo, hi = 1e-8, 1.0
    while mrs_rhs(weight, lo) > x:
        lo /= 16
        if lo < 1e-300:
            raise ValueError(f"x={x} is below the resolvable range")
    last_finite = lo
    while True:
        r = mrs_rhs(weight, hi)
        if not np.isfinite(r):
            raise MrsOverflowError(
                f"Q' overflows while bracketing a_x for x={x:g}; "
                f"max supported x is about {mrs_rhs(weight, last_finite):.6g}")
        if r >= x:
            break
        last_finite = hi
        lo = hi
        hi *= 2
    a = brentq(lambda t: mrs_rhs(weight, t) - x, lo, hi, xtol=1e-300, rtol=1e-15,
               maxiter=500)
    if abs(mrs_rhs(weight, a) - x) > ROOT_TOL * max(1.0, x):
        raise ArithmeticError(f"MRS root for x={x} did not converge")
    with table._lock:
        table._cache[x] = a
    return a


def delta(table, u):
    """``(u T(a_u))**(-2/3)``."""
    return (u * table.T(u)) ** (-2.0 / 3.0)


def phi(table, u, x):
    """The spacing function ``phi_u(x)``; even in ``x``, constant beyond ``a_u``."""
    au = table.a(u)
    a2u = table.a(2 * u)
    d = delta(table, u)
    x = np.asarray(x, dtype=np.float64)
    s = np.minimum(np.abs(x), au)
    return (au / u) * (1 - s / a2u) / np.sqrt(1 - s / au + d)


def check_condition_14(table, n_list):
    """``T(a_n) / (n/a_n)**(2/3)`` for each ``n``."""
    if len(n_list) == 0:
        raise ValueError("n_list must not be empty")
    out = []
    for n in n_list:
        if n < 1:
            raise ValueError("n must be >= 1")
        an = table.a(n)
        out.append((n, table.T(n) / (n / an) ** (2.0 / 3.0)))
    return out


def quadrature_radius(table, m):
    """Truncation radius ``a_{2m} (1 + 2 delta_{2m})``."""
    return table.a(2 * m) * (1 + 2 * delta(table, 2 * m))
