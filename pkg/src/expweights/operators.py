"""Approximation operators in the orthonormal basis and polynomial calculus.

Polynomials live in two forms:

``BasisPoly``
    coefficients in ``{p_k}``; used for projections (``s_n``, ``v_n``) and for
    exact differentiation / integration through the connection matrix.
``NodalPoly``
    weighted values ``P(x_j) w(x_j)`` at the zeros of ``p_m``; barycentric
    evaluation and a weighted differentiation matrix.  Storing weighted values
    keeps interpolation well conditioned even though ``P`` itself varies over
    dozens of orders of magnitude on ``[-a_n, a_n]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .orthopoly import eval_basis
from .quadrature import DTYPE, gauss_legendre

TAIL_EXPONENT = 80
TAIL_PANELS = 80
TAIL_POINTS = 20


def _values(f, x):
    out = f(x) if callable(f) else f
    out = np.asarray(out, dtype=DTYPE)
    if out.shape != x.shape:
        out = np.broadcast_to(out, x.shape).copy()
    return out


@dataclass(frozen=True, eq=False)
class BasisPoly:
    """``sum_k coeffs[k] p_k``."""

    rec: object
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=DTYPE).ravel()
        if c.size == 0:
            c = np.zeros(1, dtype=DTYPE)
        if c.size - 1 > self.rec.N:
            raise ValueError(f"degree {c.size - 1} exceeds table size {self.rec.N}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, rec, value):
        return cls(rec, [DTYPE(value) / rec.norm0])

    @property
    def degree(self):
        return self.coeffs.size - 1

    def padded(self, size):
        out = np.zeros(size, dtype=DTYPE)
        out[:self.coeffs.size] = self.coeffs
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=DTYPE)
        vals = eval_basis(self.rec, self.degree, x.ravel()) @ self.coeffs
        return vals.reshape(x.shape)

    def weighted(self, x):
        """``P(x) w(x)``."""
        x = np.asarray(x, dtype=DTYPE)
        return self(x) * np.exp(-self.rec.weight.Q(x))

    def __add__(self, other):
        n = max(self.coeffs.size, other.coeffs.size)
        return BasisPoly(self.rec, self.padded(n) + other.padded(n))

    def __sub__(self, other):
        return self + (-1) * other

    def __mul__(self, scalar):
        return BasisPoly(self.rec, self.coeffs * DTYPE(scalar))

    __rmul__ = __mul__

    def derivative(self, order=1):
        out = self
        for _ in range(order):
            d = out.degree
            if d == 0:
                return BasisPoly(self.rec, [0])
            D = self.rec.derivative_matrix[:d + 1, :d + 1]
            out = BasisPoly(self.rec, (D @ out.coeffs)[:d])
        return out

    def antiderivative(self):
        """The primitive of degree ``degree + 1`` that vanishes at 0."""
        d = self.degree
        if d + 1 > self.rec.N:
            raise ValueError("antiderivative exceeds the recurrence table size")
        D = self.rec.derivative_matrix
        c = np.zeros(d + 2, dtype=DTYPE)
        # q_j = sum_{k>j} D[j, k] c_k is upper triangular in (j, k-1)
        for k in range(d + 1, 0, -1):
            j = k - 1
            acc = self.coeffs[j] - D[j, k + 1:d + 2] @ c[k + 1:d + 2]
            c[k] = acc / D[j, k]
        p0 = self.rec.basis_at_zero[:d + 2]
        c[0] = -(p0[1:] @ c[1:]) / p0[0]
        return BasisPoly(self.rec, c)

    def to_nodal(self, m=None):
        return NodalPoly.from_basis(self, m)


@dataclass(frozen=True, eq=False)
class NodalPoly:
    """Polynomial stored as weighted values at the zeros of ``p_m``.

    ``bary`` holds barycentric weights (``∝ lambda_j p_{m-1}(x_j)``) and
    ``scaled_bary`` the same divided by ``w(x_j)``.
    """

    rec: object
    nodes: np.ndarray
    wvalues: np.ndarray
    bary: np.ndarray
    scaled_bary: np.ndarray
    degree: int

    @classmethod
    def nodes_for(cls, rec, m):
        g = rec.gauss(m)
        x = g.zeros[::-1].copy()
        lam = g.christoffel[::-1]
        pm1 = eval_basis(rec, m - 1, x)[:, m - 1]
        bary = lam * pm1
        bary = bary / np.max(np.abs(bary))
        w = np.exp(-rec.weight.Q(x))
        return x, bary, bary / w, w, lam

    @classmethod
    def from_values(cls, rec, f, degree):
        """Interpolate ``f`` at the zeros of ``p_{degree+1}``."""
        x, bary, sb, w, _ = cls.nodes_for(rec, degree + 1)
        return cls(rec, x, _values(f, x) * w, bary, sb, degree)

    @classmethod
    def from_basis(cls, poly, m=None):
        rec = poly.rec
        m = m or poly.degree + 1
        if m < poly.degree + 1:
            raise ValueError("need at least degree + 1 nodes")
        x, bary, sb, w, _ = cls.nodes_for(rec, m)
        return cls(rec, x, poly(x) * w, bary, sb, poly.degree)

    @property
    def interval(self):
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def values(self):
        return self.wvalues * np.exp(self.rec.weight.Q(self.nodes))

    def _bary_eval(self, x, weighted):
        x = np.asarray(x, dtype=DTYPE)
        flat = x.ravel()
        diff = flat[:, None] - self.nodes[None, :]
        hit = diff == 0
        safe = np.where(hit, 1, diff)
        num = (self.scaled_bary * self.wvalues / safe) @ np.ones(len(self.nodes), dtype=DTYPE)
        den = (self.bary / safe) @ np.ones(len(self.nodes), dtype=DTYPE)
        # num/den is P(x) from the second barycentric form with weighted data
        out = num / den
        if weighted:
            out = out * np.exp(-self.rec.weight.Q(flat))
        rows, cols = np.nonzero(hit)
        if rows.size:
            exact = self.wvalues[cols]
            if not weighted:
                exact = exact * np.exp(self.rec.weight.Q(self.nodes[cols]))
            out[rows] = exact
        return out.reshape(x.shape)

    def __call__(self, x):
        return self._bary_eval(x, weighted=False)

    def weighted(self, x):
        return self._bary_eval(x, weighted=True)

    def to_basis(self):
        """Coefficients by the Gauss rule on the nodes (exact for the stored degree)."""
        m = len(self.nodes)
        g = self.rec.gauss(m)
        lam = g.christoffel[::-1]
        w = np.exp(-self.rec.weight.Q(self.nodes))
        P = eval_basis(self.rec, self.degree, self.nodes)
        coeffs = ((lam / w) * self.wvalues) @ P
        return BasisPoly(self.rec, coeffs)

    def differentiation_matrix(self):
        """Weighted matrix ``Dw`` with ``(P' w)(x_i) = sum_j Dw[i, j] (P w)(x_j)``."""
        x, s = self.nodes, self.scaled_bary
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1)
        Dw = (s[None, :] / s[:, None]) / diff
        inv = 1 / diff
        np.fill_diagonal(inv, 0)
        np.fill_diagonal(Dw, inv.sum(axis=1))
        return Dw


def differentiate(p):
    """Exact derivative of a ``NodalPoly`` on the same nodes (degree drops by one)."""
    if p.degree == 0:
        return NodalPoly(p.rec, p.nodes, np.zeros_like(p.wvalues), p.bary, p.scaled_bary, 0)
    return NodalPoly(p.rec, p.nodes, p.differentiation_matrix() @ p.wvalues, p.bary,
                     p.scaled_bary, p.degree - 1)


# -- projections ------------------------------------------------------------

def fourier_coeffs(rec, f, m):
    """``b_k(f) = int f p_k w^2`` for ``k < m`` on the master rule."""
    if m > rec.N + 1:
        raise ValueError(f"m={m} exceeds table size")
    rule = rec.rule
    vals = _values(f, rule.nodes)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise ValueError(f"integrand not finite at t={float(rule.nodes[np.argmax(bad)]):.17g}")
    return (rule.weights * vals) @ rec.rule_basis[:, :m]


def partial_sum(rec, f, n):
    """``s_n(f) = sum_{k<n} b_k(f) p_k``."""
    if n > rec.N + 1:
        raise ValueError("n exceeds table size")
    if isinstance(f, BasisPoly) and f.rec is rec:
        return BasisPoly(rec, f.padded(max(n, f.coeffs.size))[:n])
    return BasisPoly(rec, fourier_coeffs(rec, f, n))


def vp_multipliers(n):
    """Coefficient multipliers of ``v_n``: 1 up to ``n``, then ``(2n-k)/n``."""
    k = np.arange(2 * n, dtype=DTYPE)
    return np.where(k <= n, DTYPE(1), (2 * n - k) / DTYPE(n))


def vallee_poussin(rec, f, n):
    """de la Vallée Poussin mean ``v_n(f)`` (degree ``2n - 1``)."""
    if 2 * n > rec.N + 1:
        raise ValueError(f"v_n needs 2n <= N + 1 (n={n}, N={rec.N})")
    b = partial_sum(rec, f, 2 * n).coeffs
    return BasisPoly(rec, b * vp_multipliers(n))


def vallee_poussin_direct(rec, f, n):
    """``(1/n) sum_{j=n+1}^{2n} s_j(f)`` summed literally."""
    b = partial_sum(rec, f, 2 * n).coeffs
    total = np.zeros(2 * n, dtype=DTYPE)
    for j in range(n + 1, 2 * n + 1):
        total[:j] += b[:j]
    return BasisPoly(rec, total / n)


def orthogonality_check(rec, f, n):
    """``max_{k<=n} |int (f - v_n f) p_k w^2|`` evaluated by quadrature."""
    rule = rec.rule
    resid = _values(f, rule.nodes) - vallee_poussin(rec, f, n)(rule.nodes)
    return float(np.max(np.abs((rule.weights * resid) @ rec.rule_basis[:, :n + 1])))


# -- tail operator ----------------------------------------------------------

def _tail_breakpoints(weight, t0, levels):
    """Solve ``2Q(s) - 2Q(t0) = level`` for ``s >= t0 >= 0`` (Newton from the right)."""
    t0 = np.asarray(t0, dtype=DTYPE)
    base = 2 * weight.Q(t0)
    target = base[:, None] + levels[None, :]
    hi = np.maximum(2 * t0, DTYPE(1))
    while True:
        short = 2 * weight.Q(hi) < base + levels[-1]
        if not np.any(short):
            break
        hi = np.where(short, 2 * hi, hi)
    s = np.broadcast_to(hi[:, None], target.shape).copy()
    for _ in range(200):
        q, dq, _ = weight._derivs(s)
        step = (2 * q - target) / (2 * dq)
        s_new = np.maximum(s - step, t0[:, None])
        if np.all(np.abs(s_new - s) <= 1e-17 * np.maximum(np.abs(s), 1)):
            s = s_new
            break
        s = s_new
    return np.concatenate([t0[:, None], s], axis=1)


def _right_tail(weight, h, t0, return_flag=False):
    """``int_{t0}^inf h(s) exp(2Q(t0) - 2Q(s)) ds`` for each ``t0 >= 0``."""
    levels = np.linspace(0, TAIL_EXPONENT, TAIL_PANELS + 1, dtype=DTYPE)[1:]
    edges = _tail_breakpoints(weight, t0, levels)
    gx, gw = gauss_legendre(TAIL_POINTS)
    left, right = edges[:, :-1, None], edges[:, 1:, None]
    half = (right - left) / 2
    s = left + half * (gx + 1)
    kern = np.exp(2 * weight.Q(t0)[:, None, None] - 2 * weight.Q(s))
    hv = _values(h, s.ravel()).reshape(s.shape)
    out = np.sum(hv * kern * half * gw, axis=(1, 2))
    if not return_flag:
        return out
    end = _values(h, edges[:, -1])
    width = edges[:, -1] - edges[:, 0]
    tail = np.abs(end) * np.exp(DTYPE(-TAIL_EXPONENT)) * np.maximum(width, 1)
    flag = tail > 1e-12 * np.maximum(np.abs(out), 1e-300)
    return out, flag


def tail_operator(weight, h, t, centered=False, return_flag=False):
    """``I(h)(t) = w(t)^-2 int_t^inf h w^2``.

    Integrals run to the radius where ``2Q`` has grown by ``TAIL_EXPONENT``
    past ``2Q(t)``.  For ``t < 0`` the left tail is used: with
    ``centered=True`` (``int h w^2 = 0``) ``I(h)(t) = -w(t)^-2 int_-inf^t h w^2``,
    otherwise the total mass is added back explicitly.
    """
    weight = getattr(weight, "weight", weight)
    t = np.asarray(t, dtype=DTYPE)
    flat = t.ravel()
    out = np.zeros_like(flat)
    flags = np.zeros(flat.shape, dtype=bool)
    right = flat >= 0
    hneg = (lambda s: _values(h, -s))
    if np.any(right):
        out[right], flags[right] = _right_tail(weight, h, flat[right], return_flag=True)
    if np.any(~right):
        left, lflag = _right_tail(weight, hneg, -flat[~right], return_flag=True)
        out[~right] = -left
        flags[~right] = lflag
        if not centered:
            zero = np.zeros(1, dtype=DTYPE)
            mass = _right_tail(weight, h, zero)[0] + _right_tail(weight, hneg, zero)[0]
            out[~right] += mass * np.exp(2 * weight.Q(flat[~right]))
    out = out.reshape(t.shape)
    if return_flag:
        return out, bool(np.any(flags))
    return out


def tail_operator_derivative(weight, h, t, centered=False):
    """``I(h)'(t) = 2 Q'(t) I(h)(t) - h(t)``."""
    weight = getattr(weight, "weight", weight)
    t = np.asarray(t, dtype=DTYPE)
    return 2 * weight.dQ(t) * tail_operator(weight, h, t, centered) - _values(h, t)


# -- primitive of v_n -------------------------------------------------------

def primitive_vp(rec, table, g, gprime, n, p=2, grid=None, return_basis=False):
    """``V_n = a + int_0^x v_n(g')`` with ``a`` the best constant for ``g - int_0^x v_n(g')``."""
    from .approx import best_const

    vg = vallee_poussin(rec, gprime, n)
    prim = vg.antiderivative()

    def G(x):
        return _values(g, x) - prim(x)

    a, _ = best_const(rec, G, p, grid)
    V = prim + BasisPoly.constant(rec, a)
    if return_basis:
        return V
    return V.to_nodal()
