"""Orthonormal polynomials for ``w**2``: recurrence, Gauss data, Christoffel function.

For an even weight the three-term recurrence has zero diagonal::

    t p_k(t) = b_{k+1} p_{k+1}(t) + b_k p_{k-1}(t),   p_0 = (int w^2)^(-1/2).

The ``b_k`` are produced by a discretised Stieltjes procedure on a composite
quadrature rule; everything is carried out in ``np.longdouble``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .quadrature import DTYPE, build_rule, _make_rule

MAX_DEGREE = 40
ORTHO_TOL = 1e-8
GAUSS_CROSSCHECK_TOL = 1e-6


class OrthonormalityError(ArithmeticError):
    def __init__(self, degree, residual):
        super().__init__(f"orthonormality residual {residual:.3e} first exceeds "
                         f"{ORTHO_TOL:g} at degree {degree}; lower N")
        self.degree = degree
        self.residual = residual


class RecurrenceTable:
    """Recurrence coefficients ``b_1..b_N`` and ``norm0`` for one weight."""

    def __init__(self, weight, b, norm0, rule, max_diag=0.0, table=None):
        self.weight = weight
        self.table = table
        self.b = np.asarray(b, dtype=DTYPE)       # b[0] unused (= 0)
        self.norm0 = DTYPE(norm0)
        self.rule = rule
        self.max_diag = float(max_diag)
        self._gauss = {}

    @property
    def N(self):
        return len(self.b) - 1

    @property
    def mu0(self):
        """``int w^2``."""
        return 1 / self.norm0 ** 2

    def __repr__(self):
        return f"RecurrenceTable({self.weight.label}, N={self.N})"

    def leading_coefficient(self, n):
        return self.norm0 / np.prod(self.b[1:n + 1])

    def gauss(self, n):
        if n not in self._gauss:
            self._gauss[n] = gauss_data(self, n)
        return self._gauss[n]

    @cached_property
    def derivative_matrix(self):
        """``D[j, k] = int p_k' p_j w^2`` so that ``(sum c_k p_k)' = sum (D c)_j p_j``."""
        g = self.gauss(self.N + 1)
        P, dP = eval_basis(self, self.N, g.zeros, derivs=1)
        D = (P * g.christoffel[:, None]).T @ dP
        D = np.triu(D, 1)
        # parity: p_k' only involves p_j with j = k-1, k-3, ...
        j, k = np.indices(D.shape)
        D[(k - j) % 2 == 0] = 0
        return D

    @cached_property
    def rule_basis(self):
        """``p_k`` at the master rule nodes, shape ``(len(rule), N+1)``."""
        out = eval_basis(self, self.N, self.rule.nodes)
        out.setflags(write=False)
        return out

    @cached_property
    def basis_at_zero(self):
        return eval_basis(self, self.N, np.zeros(1, dtype=DTYPE))[0]


@dataclass(frozen=True)
class GaussData:
    """Zeros of ``p_n`` (decreasing, ``x_{1,n}`` first) and Christoffel numbers."""

    n: int
    zeros: np.ndarray
    christoffel: np.ndarray


def stieltjes(weight, table, N, rule=None, check=True):
    """Recurrence table up to degree ``N`` via the discretised Stieltjes procedure."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > MAX_DEGREE:
        raise ValueError(f"N > {MAX_DEGREE} is not supported")
    if rule is None:
        rule = build_rule(weight, table, 2 * N + 2)
    b, norm0, max_diag = _stieltjes_on(rule, N)
    rec = RecurrenceTable(weight, b, norm0, rule, max_diag, table=table)
    if check:
        finer = _make_rule(weight, rule.radius, 2 * rule.panels, rule.target_degree)
        resid = orthonormality_residuals(rec, finer)
        bad = np.nonzero(resid > ORTHO_TOL)[0]
        if bad.size:
            raise OrthonormalityError(int(bad[0]), float(resid[bad[0]]))
    return rec


def _stieltjes_on(rule, N):
    x, w = rule.nodes, rule.weights
    b = np.zeros(N + 1, dtype=DTYPE)
    norm0 = 1 / np.sqrt(np.sum(w))
    prev = np.zeros_like(x)
    cur = np.full_like(x, norm0)
    max_diag = DTYPE(0)
    for k in range(N):
        max_diag = max(max_diag, abs(np.sum(w * x * cur * cur)))
        q = x * cur - b[k] * prev
        b[k + 1] = np.sqrt(np.sum(w * q * q))
        prev, cur = cur, q / b[k + 1]
    return b, norm0, max_diag


def orthonormality_residuals(rec, rule=None):
    """Per-degree ``max_j |int p_k p_j w^2 - delta_kj|`` over ``j <= k``."""
    rule = rule or rec.rule
    P = eval_basis(rec, rec.N, rule.nodes)
    G = (P * rule.weights[:, None]).T @ P
    err = np.abs(G - np.eye(rec.N + 1, dtype=DTYPE))
    return np.array([float(np.max(err[k, :k + 1])) for k in range(rec.N + 1)])


def eval_basis(rec, n, x, derivs=0):
    """Matrix ``[p_0(x) .. p_n(x)]`` of shape ``(len(x), n+1)``.

    With ``derivs=m`` returns a tuple of ``m + 1`` such matrices holding the
    derivatives of order 0..m, from the differentiated recurrence.
    """
    if n > rec.N:
        raise ValueError(f"degree {n} exceeds table size {rec.N}")
    x = np.asarray(x, dtype=DTYPE).ravel()
    b = rec.b
    out = [np.zeros((x.size, n + 1), dtype=DTYPE) for _ in range(derivs + 1)]
    out[0][:, 0] = rec.norm0
    for k in range(n):
        for m in range(derivs + 1):
            prev = out[m][:, k - 1] if k else 0
            val = x * out[m][:, k] - b[k] * prev
            if m:
                val = val + m * out[m - 1][:, k]
            out[m][:, k + 1] = val / b[k + 1]
    return out[0] if derivs == 0 else tuple(out)


def eval_basis_weighted(rec, n, x):
    """``p_k(x) w(x)`` for k <= n."""
    x = np.asarray(x, dtype=DTYPE).ravel()
    return eval_basis(rec, n, x) * np.exp(-rec.weight.Q(x))[:, None]


def eval_pk(rec, k, x):
    scalar = np.ndim(x) == 0
    vals = eval_basis(rec, k, np.atleast_1d(x))[:, k]
    return vals[0] if scalar else vals


def _monic_like(rec, n, x):
    """``b_n p_n`` and its derivative, which need only ``b_1..b_{n-1}``."""
    P, dP = eval_basis(rec, n - 1, x, derivs=1)
    bn1 = rec.b[n - 1]
    prev, dprev = (P[:, n - 2], dP[:, n - 2]) if n >= 2 else (0, 0)
    q = x * P[:, n - 1] - bn1 * prev
    dq = P[:, n - 1] + x * dP[:, n - 1] - bn1 * dprev
    return q, dq


def gauss_data(rec, n):
    """Gauss rule for ``w^2`` with ``n`` nodes (``n <= N + 1``).

    Zeros come from the Jacobi matrix eigenvalues, polished by Newton steps in
    extended precision; the Christoffel numbers are ``1 / K_n(x_k, x_k)`` and
    are cross-checked against the eigenvector formula.
    """
    if not 1 <= n <= rec.N + 1:
        raise ValueError(f"n must be in [1, {rec.N + 1}]")
    offdiag = np.asarray(rec.b[1:n], dtype=np.float64)
    try:
        vals, vecs = eigh_tridiagonal(np.zeros(n), offdiag)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"Jacobi eigenproblem for n={n} did not converge") from exc
    x = vals.astype(DTYPE)
    for _ in range(3):
        q, dq = _monic_like(rec, n, x)
        x = x - q / dq
    x = np.sort(x)
    x = (x - x[::-1]) / 2
    lam = 1 / np.sum(eval_basis(rec, n - 1, x) ** 2, axis=1)
    lam = (lam + lam[::-1]) / 2
    lam_eig = float(rec.mu0) * vecs[0, :] ** 2
    if np.max(np.abs(lam_eig - lam.astype(np.float64))) > GAUSS_CROSSCHECK_TOL * float(rec.mu0):
        raise ArithmeticError(f"Christoffel numbers disagree for n={n}")
    zeros = x[::-1].copy()
    lam = lam[::-1].copy()
    zeros.setflags(write=False)
    lam.setflags(write=False)
    return GaussData(n, zeros, lam)


def christoffel(rec, n, x):
    """``lambda_n(x) = 1 / sum_{k<n} p_k(x)^2``."""
    scalar = np.ndim(x) == 0
    out = 1 / np.sum(eval_basis(rec, n - 1, np.atleast_1d(x)) ** 2, axis=1)
    return out[0] if scalar else out


def kernel(rec, n, x, t):
    """``K_n(x, t) = sum_{k<n} p_k(x) p_k(t)``."""
    px = eval_basis(rec, n - 1, np.atleast_1d(x))
    pt = eval_basis(rec, n - 1, np.atleast_1d(t))
    out = np.sum(px * pt, axis=1)
    return out[0] if out.size == 1 else out


def kernel_cd(rec, n, x, t):
    """Christoffel-Darboux closed form of ``K_n(x, t)`` for ``x != t``."""
    if n > rec.N:
        raise ValueError("kernel_cd needs p_n, so n <= N")
    px = eval_basis(rec, n, np.atleast_1d(x))
    pt = eval_basis(rec, n, np.atleast_1d(t))
    x = np.asarray(np.atleast_1d(x), dtype=DTYPE)
    t = np.asarray(np.atleast_1d(t), dtype=DTYPE)
    out = rec.b[n] * (px[:, n] * pt[:, n - 1] - pt[:, n] * px[:, n - 1]) / (x - t)
    return out[0] if out.size == 1 else out
