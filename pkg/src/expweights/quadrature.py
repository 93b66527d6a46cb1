"""Composite Gauss-Legendre rules for integrals ``int f(t) w(t)**2 dt``.

Rules are built on ``[0, R]`` and mirrored, so nodes are exactly symmetric and
odd integrands cancel pairwise.  Nodes and weights are ``np.longdouble``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mrs import quadrature_radius

DTYPE = np.longdouble
POINTS_PER_PANEL = 24
START_PANELS = 32
MAX_NODES = 1 << 14
EXACTNESS_RTOL = 1e-9
TAIL_BOUND = 1e-30


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """``n``-point Gauss-Legendre rule on [-1, 1] in extended precision.

    The double-precision nodes from numpy are polished by Newton steps on the
    Legendre recurrence carried out in ``np.longdouble``.
    """
    x0, _ = np.polynomial.legendre.leggauss(n)
    x = x0.astype(DTYPE)

    def legendre(x):
        p0, p1 = np.ones_like(x), x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1)
        return p1, dp

    for _ in range(4):
        p, dp = legendre(x)
        x = x - p / dp
    _, dp = legendre(x)
    w = 2 / ((1 - x * x) * dp * dp)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_half(R, panels, points=POINTS_PER_PANEL):
    """Composite rule on ``[0, R]`` with ``panels`` equal panels."""
    t, wt = gauss_legendre(points)
    edges = np.linspace(0, 1, panels + 1).astype(DTYPE) * DTYPE(R)
    left, right = edges[:-1, None], edges[1:, None]
    half = (right - left) / 2
    nodes = (left + half * (t + 1)).ravel()
    wts = (half * wt).ravel()
    return nodes, wts


@dataclass(frozen=True)
class QuadRule:
    """Symmetric rule; ``weights`` already include ``w(t)**2``."""

    nodes: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray
    radius: float
    target_degree: int
    panels: int

    @property
    def half(self):
        return len(self.nodes) // 2

    def __len__(self):
        return len(self.nodes)


def _make_rule(weight, R, panels, degree):
    x, gw = composite_half(R, panels)
    q = weight.Q(x)
    logw = np.log(gw) - 2 * q
    w = np.exp(logw)
    keep = w > 0
    x, logw, w = x[keep], logw[keep], w[keep]
    nodes = np.concatenate([-x[::-1], x])
    weights = np.concatenate([w[::-1], w])
    log_weights = np.concatenate([logw[::-1], logw])
    for arr in (nodes, weights, log_weights):
        arr.setflags(write=False)
    return QuadRule(nodes, weights, log_weights, float(R), int(degree), int(panels))


def _moments(rule, degree):
    """``int t^k w^2`` and ``int |t|^k w^2`` for k <= degree (half-line sums)."""
    h = rule.half
    x, w = rule.nodes[h:], rule.weights[h:]
    powers = x[None, :] ** np.arange(degree + 1)[:, None]
    absm = 2 * (powers @ w)
    signed = absm.copy()
    signed[1::2] = 0
    return signed, absm


def _exact_enough(rule, finer, degree):
    _, a = _moments(rule, degree)
    _, b = _moments(finer, degree)
    return bool(np.all(np.abs(a - b) <= EXACTNESS_RTOL * b))


def _safe_radius(weight, R):
    """Shrink ``R`` if ``Q`` overflows there, provided the tail stays negligible."""
    if np.isfinite(float(weight.Q(np.array([R], dtype=DTYPE))[0])):
        return R
    lo, hi = 0.0, R
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.isfinite(float(weight.Q(np.array([mid], dtype=DTYPE))[0])):
            lo = mid
        else:
            hi = mid
    q = float(weight.Q(np.array([lo], dtype=DTYPE))[0])
    if not 2 * q > -np.log(TAIL_BOUND):
        raise OverflowError(f"Q overflows at R={R:g} before the tail is negligible")
    warnings.warn(f"quadrature radius reduced from {R:g} to {lo:g} (Q overflow)")
    return lo


def build_rule(weight, table, degree, panels=None):
    """Rule on ``[-R, R]``, ``R = a_{2m}(1 + 2 delta_{2m})`` with ``m = degree``.

    Panels are doubled until moments up to ``degree`` agree with a rule of twice
    the resolution to ``EXACTNESS_RTOL``.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    R = _safe_radius(weight, quadrature_radius(table, degree))
    panels = panels or START_PANELS
    while True:
        rule = _make_rule(weight, R, panels, degree)
        if 2 * panels * POINTS_PER_PANEL * 2 > MAX_NODES:
            raise ArithmeticError(
                f"quadrature for degree {degree} not exact within {MAX_NODES} nodes")
        finer = _make_rule(weight, R, 2 * panels, degree)
        if _exact_enough(rule, finer, degree):
            return rule
        panels *= 2


def evaluate(rule, f):
    values = f(rule.nodes) if callable(f) else np.asarray(f)
    values = np.asarray(values, dtype=DTYPE)
    if values.shape != rule.nodes.shape:
        values = np.broadcast_to(values, rule.nodes.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        node = rule.nodes[np.argmax(bad)]
        raise ValueError(f"integrand is not finite at node t={float(node):.17g}")
    return values


def integrate(rule, f):
    """``sum_i weights_i f(node_i)``, summed as mirrored pairs."""
    values = evaluate(rule, f)
    h = rule.half
    paired = values[:h][::-1] + values[h:]
    return rule.weights[h:] @ paired
