"""Exponential weights ``w = exp(-Q)`` on the real line.

Three families are supported:

* ``freud``  -- ``Q(x) = |x|**alpha`` with ``alpha > 1``;
* ``erdos``  -- ``Q(x) = |x|**u * (exp_l(|x|**alpha) - exp_l(0))`` where
  ``exp_l`` is the ``l``-fold iterated exponential;
* ``custom`` -- user supplied ``Q, Q', Q''`` callables (or a sympy expression).

All evaluators are vectorised and keep the floating dtype of their input, so
passing ``np.longdouble`` arrays gives extended-precision values.  Overflow is
saturating: values that do not fit come back as ``inf``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

FAMILIES = ("freud", "erdos", "custom")
MAX_ITERATED_EXP = 3
# T(0) for the Erdős family is taken as T at this abscissa.
T_ZERO_PROBE = 1e-6


def _as_float_array(x):
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    return x


def _exp_l_at_zero(l):
    """``exp_l(0)`` for l = 0, 1, 2, 3."""
    value = 0.0
    for _ in range(l):
        value = math.exp(value)
    return value


@dataclass(frozen=True)
class WeightSpec:
    """An even exponential weight ``w = exp(-Q)``.

    Use :meth:`freud`, :meth:`erdos` or :meth:`custom` rather than the raw
    constructor.  ``Lambda`` is filled in by :func:`check_class` (see
    :meth:`with_class_report`); ``lam`` is the exponent used for the
    ``|Q'|/Q**lam`` growth check.
    """

    family: str
    alpha: float = 2.0
    u: float = 0.0
    l: int = 1
    Lambda: Optional[float] = None
    lam: Optional[float] = None
    expr: Optional[str] = None
    q_funcs: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown weight family {self.family!r}")
        if self.family == "freud" and not self.alpha > 1:
            # alpha = 1 is allowed so that the class check can report it.
            if not self.alpha >= 1:
                raise ValueError("Freud weights need alpha >= 1")
        if self.family == "erdos":
            if self.u < 0 or self.alpha <= 0 or self.alpha + self.u <= 1:
                raise ValueError("Erdős weights need u >= 0, alpha > 0, alpha + u > 1")
            if int(self.l) != self.l or not 1 <= self.l <= MAX_ITERATED_EXP:
                raise ValueError(f"l must be an integer in [1, {MAX_ITERATED_EXP}]")
        if self.family == "custom" and self.q_funcs is None:
            raise ValueError("custom weights need Q, Q', Q'' callables")

    # -- constructors -------------------------------------------------------

    @classmethod
    def freud(cls, alpha=2.0, lam=1.0):
        return cls("freud", alpha=float(alpha), lam=lam)

    @classmethod
    def erdos(cls, u=0.0, alpha=2.0, l=1, lam=1.1):
        return cls("erdos", alpha=float(alpha), u=float(u), l=int(l), lam=lam)

    @classmethod
    def custom(cls, Q, dQ, d2Q, lam=None, expr=None):
        return cls("custom", q_funcs=(Q, dQ, d2Q), lam=lam, expr=expr)

    @classmethod
    def from_expression(cls, expr, lam=None):
        """Custom weight from a sympy-parsable expression in ``x``.

        The expression is used for ``x >= 0`` and reflected, e.g.
        ``"x**2 + x**4"``.
        """
        import sympy

        x = sympy.Symbol("x", positive=True)
        q = sympy.sympify(expr, locals={"x": x})
        funcs = [sympy.lambdify(x, e, modules="numpy")
                 for e in (q, sympy.diff(q, x), sympy.diff(q, x, 2))]

        def even(fn, parity):
            def wrapped(t):
                t = _as_float_array(t)
                s = np.abs(t)
                out = np.asarray(fn(s), dtype=t.dtype) * np.ones_like(s)
                return np.sign(t) * out if parity else out
            return wrapped

        return cls.custom(even(funcs[0], 0), even(funcs[1], 1), even(funcs[2], 0),
                          lam=lam, expr=str(expr))

    def with_class_report(self, report):
        return replace(self, Lambda=report.Lambda)

    # -- evaluation ---------------------------------------------------------

    @property
    def label(self):
        if self.family == "freud":
            return f"freud(alpha={self.alpha:g})"
        if self.family == "erdos":
            return f"erdos(u={self.u:g},alpha={self.alpha:g},l={self.l})"
        return f"custom({self.expr or 'callable'})"

    @property
    def default_lam(self):
        if self.lam is not None:
            return self.lam
        return 1.0 if self.family == "freud" else 1.1

    def _erdos_parts(self, s):
        """Iterated exponentials of ``s = |x|**alpha``.

        Returns ``(D, E1, E2)`` with ``D = exp_l(s) - exp_l(0)``,
        ``E1 = d/ds exp_l(s)`` and ``E2 = d2/ds2 exp_l(s)``.
        """
        E = [s]                     # E[j] = exp_j(s)
        D = s                       # exp_j(s) - exp_j(0), built with expm1
        for j in range(1, self.l + 1):
            E.append(np.exp(E[-1]))
            D = _exp_l_at_zero(j) * np.expm1(D)
        prod = np.ones_like(s)
        first = [np.ones_like(s)]   # first[j] = d/ds exp_j(s)
        for j in range(1, self.l + 1):
            prod = prod * E[j]
            first.append(prod)
        E1 = first[self.l]
        E2 = E1 * sum(first[:self.l])
        return D, E1, E2

    def _derivs(self, x):
        """``Q, Q', Q''`` at ``x`` (vectorised)."""
        x = _as_float_array(x)
        if self.family == "custom":
            Q, dQ, d2Q = self.q_funcs
            return (np.asarray(Q(x)), np.asarray(dQ(x)), np.asarray(d2Q(x)))
        a = x.dtype.type(self.alpha)
        s = np.abs(x)
        sign = np.sign(x)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.family == "freud":
                q = s ** a
                dq = a * s ** (a - 1) * sign
                d2q = a * (a - 1) * s ** (a - 2)
                return q, dq, d2q
            u = x.dtype.type(self.u)
            D, E1, E2 = self._erdos_parts(s ** a)
            g = D
            g1 = E1 * a * s ** (a - 1)
            g2 = E2 * a * a * s ** (2 * a - 2) + E1 * a * (a - 1) * s ** (a - 2)
            if self.u == 0:
                q, dq, d2q = g, g1, g2
            else:
                q = s ** u * g
                dq = u * s ** (u - 1) * g + s ** u * g1
                d2q = (u * (u - 1) * s ** (u - 2) * g + 2 * u * s ** (u - 1) * g1
                       + s ** u * g2)
            dq = np.where(s == 0, 0, dq) * sign
            return q, dq, d2q

    def Q(self, x):
        return self._derivs(x)[0]

    def dQ(self, x):
        return self._derivs(x)[1]

    def d2Q(self, x):
        return self._derivs(x)[2]

    def logw(self, x):
        return -self.Q(x)

    def T(self, x):
        """``x Q'(x) / Q(x)``; ``T(0)`` is the family's limiting value."""
        x = _as_float_array(x)
        if self.family == "freud":
            return np.full(x.shape, self.alpha, dtype=x.dtype)
        if self.family == "custom":
            if np.any(x == 0):
                raise ValueError("T(0) is undefined for custom weights")
            q, dq, _ = self._derivs(x)
            return x * dq / q
        s = np.abs(x)
        s = np.where(s == 0, x.dtype.type(T_ZERO_PROBE), s)
        a = x.dtype.type(self.alpha)
        with np.errstate(over="ignore", invalid="ignore"):
            z = s ** a
            E = [z]
            D = z
            for j in range(1, self.l):
                E.append(np.exp(E[-1]))
                D = _exp_l_at_zero(j) * np.expm1(D)
            # x g'/g = alpha z prod_{j<l} exp_j(z) / (1 - exp(-(exp_{l-1}(z) - exp_{l-1}(0))))
            prod = np.ones_like(z)
            for j in range(1, self.l):
                prod = prod * E[j]
            return self.u + a * z * prod / (-np.expm1(-D))

    def to_dict(self):
        if self.family == "freud":
            return {"family": "freud", "alpha": self.alpha}
        if self.family == "erdos":
            return {"family": "erdos", "u": self.u, "alpha": self.alpha, "l": self.l}
        if self.expr is None:
            raise ValueError("callable-based custom weights are not serialisable")
        return {"family": "custom", "Q": self.expr}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        family = data.get("family")
        lam = data.get("lambda")
        if family == "freud":
            return cls.freud(data.get("alpha", 2.0), lam=1.0 if lam is None else lam)
        if family == "erdos":
            return cls.erdos(data.get("u", 0.0), data.get("alpha", 2.0), data.get("l", 1),
                             lam=1.1 if lam is None else lam)
        if family == "custom":
            if "Q" not in data:
                raise ValueError("custom weight JSON needs a 'Q' expression")
            return cls.from_expression(data["Q"], lam=lam)
        raise ValueError(f"unknown weight family {family!r}")

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def parse_weight(text):
    """Parse ``freud:2``, ``erdos``, ``erdos:u,alpha,l`` or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        return WeightSpec.from_json(text)
    name, _, args = text.partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    if name == "freud":
        return WeightSpec.freud(*vals[:1])
    if name == "erdos":
        if len(vals) > 3:
            raise ValueError("erdos takes at most u,alpha,l")
        if len(vals) == 3:
            vals[2] = int(vals[2])
        return WeightSpec.erdos(*vals)
    raise ValueError(f"cannot parse weight {text!r}")


def eval_Q(spec, x, return_overflow=False):
    """``Q(x)``; with ``return_overflow`` also return a boolean overflow mask."""
    q = spec.Q(x)
    if return_overflow:
        return q, ~np.isfinite(q)
    return q


def eval_logw(spec, x, return_overflow=False):
    q = spec.Q(x)
    if return_overflow:
        return -q, ~np.isfinite(q)
    return -q


def eval_T(spec, x):
    return spec.T(x)


def weighted(values, logw):
    """``values * exp(logw)`` computed as ``sign * exp(log|values| + logw)``."""
    values = np.asarray(values)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        mag = np.exp(np.log(np.abs(values)) + logw)
    return np.where(values == 0, 0, np.sign(values) * mag)


@dataclass
class ClassReport:
    """Empirical membership report for the weight class conditions."""

    weight: str
    grid_max: float
    even: bool
    q_zero_at_origin: bool
    nonnegative: bool
    cond_a: bool
    cond_b: bool
    cond_c: bool
    cond_d: bool
    cond_e: bool
    Lambda: float
    t_quasi_increasing_C: float
    e_constant: float
    e_reverse_constant: float
    lam: float
    lam_sup: float
    lam_pass: bool
    t_growth: float
    erdos_type: bool
    failures: list

    @property
    def passes(self):
        return self.cond_a and self.cond_b and self.cond_c and self.cond_d and self.cond_e

    def as_dict(self):
        out = {k: v for k, v in self.__dict__.items()}
        out["passes"] = self.passes
        return out


def default_class_grid(spec, xmax=None, num=512):
    """Symmetric log-spaced grid (0 excluded) up to the quadrature radius."""
    if xmax is None:
        from .mrs import MrsTable, quadrature_radius
        xmax = quadrature_radius(MrsTable(spec), 82)
    pos = np.logspace(-3, np.log10(xmax), num // 2)
    return np.concatenate([-pos[::-1], pos])


def check_class(spec, grid=None, inner_radius=1.0, tail_K=1.0):
    """Check the class conditions (a)-(e) and the ``|Q'|/Q**lam`` bound on ``grid``."""
    if grid is None:
        grid = default_class_grid(spec)
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if np.any(grid == 0):
        grid = grid[grid != 0]
    pos = grid[grid > 0]
    failures = []

    q, dq, d2q = spec._derivs(grid)
    qm = spec.Q(-grid)
    scale = np.maximum(np.abs(q), 1e-300)
    even = bool(np.all(np.abs(q - qm) <= 1e-12 * scale))
    q0 = float(spec.Q(np.array([0.0]))[0])
    q_zero = q0 == 0.0
    nonneg = bool(np.all(q >= 0))
    cond_a = q_zero and bool(np.all(np.isfinite(dq)))
    cond_b = bool(np.all(d2q > 0))
    qp, dqp, d2qp = spec._derivs(pos)
    cond_c = bool(np.all(np.diff(qp) > 0))

    T = spec.T(pos)
    Lambda = float(np.min(T))
    running = np.maximum.accumulate(T)
    quasi_C = float(np.max(running / T))
    cond_d = Lambda > 1 + 1e-12 and np.isfinite(quasi_C)

    with np.errstate(divide="ignore", invalid="ignore"):
        e_ratio = d2qp * qp / dqp ** 2
        outer = pos >= inner_radius
        e_rev = (dqp ** 2 / (qp * d2qp))[outer]
    e_const = float(np.max(e_ratio))
    e_rev_const = float(np.max(e_rev)) if e_rev.size else float("nan")
    cond_e = bool(np.isfinite(e_const) and (e_rev.size == 0 or np.isfinite(e_rev_const)))

    lam = spec.default_lam
    tail = pos[pos >= tail_K]
    if tail.size >= 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(spec.dQ(tail)) / spec.Q(tail) ** lam
        lam_sup = float(np.max(ratio))
        half = ratio[tail <= tail[-1] / 2]
        ref = float(np.max(half)) if half.size else float(ratio[0])
        lam_pass = bool(np.isfinite(lam_sup) and ratio[-1] <= ref * (1 + 1e-9))
    else:
        lam_sup, lam_pass = float("nan"), False

    probe = max(4.0, float(pos[-1]))
    t_growth = float(spec.T(np.array([probe]))[0] / spec.T(np.array([1.0]))[0])
    erdos_type = t_growth > 10

    for name, ok in (("even", even), ("a", cond_a), ("b", cond_b), ("c", cond_c),
                     ("d", cond_d), ("e", cond_e), ("F_lambda", lam_pass)):
        if not ok:
            failures.append(name)
    return ClassReport(
        weight=spec.label, grid_max=float(pos[-1]), even=even, q_zero_at_origin=q_zero,
        nonnegative=nonneg, cond_a=cond_a, cond_b=cond_b, cond_c=cond_c, cond_d=cond_d,
        cond_e=cond_e, Lambda=Lambda, t_quasi_increasing_C=quasi_C, e_constant=e_const,
        e_reverse_constant=e_rev_const, lam=lam, lam_sup=lam_sup, lam_pass=lam_pass,
        t_growth=t_growth, erdos_type=erdos_type, failures=failures,
    )
