"""Weighted L^p norms and degrees of best approximation ``E_{p,n}(w; f)``.

``p`` is one of ``1``, ``2`` or ``inf``.  For ``p = 2`` everything is exact
projection on the master quadrature rule.  For ``p = inf`` a Remez exchange on
a dense grid is followed by continuous refinement of the extremal points, so
the reported error is the sup of ``|f - P| w`` rather than its grid sample.
For ``p = 1`` the discrete problem on the grid (trapezoid weights) is solved
as a linear program and then polished to the exact optimal vertex in extended
precision, with a dual certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import linprog

from .operators import BasisPoly, _values, partial_sum
from .orthopoly import eval_basis
from .quadrature import DTYPE, gauss_legendre

EPS = float(np.finfo(DTYPE).eps)
DENSITY = 40
MIN_GRID = 1200
REMEZ_TOL = 1e-8
REMEZ_MAXITER = 60
L1_ROUNDS = 6
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10,
              "maxiter": 200000}
GOLDEN_ITERS = 60
L1_POINTS = 5
BISECT_ITERS = 64
P_CHOICES = (1, 2, math.inf)


class ExchangeError(ArithmeticError):
    """Remez exchange failed to converge; carries the best iterate."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


def parse_p(p):
    if isinstance(p, str):
        p = p.strip().lower()
        if p in ("inf", "infinity", "oo", "∞"):
            return math.inf
        p = float(p)
    if p == math.inf:
        return math.inf
    if p in (1, 2):
        return int(p)
    raise ValueError(f"p must be 1, 2 or inf (got {p!r})")


def p_label(p):
    return "inf" if p == math.inf else str(int(p))


@dataclass(frozen=True, eq=False)
class NormGrid:
    """Dense symmetric evaluation grid on ``[-R, R]``.

    Nodes are Chebyshev-clustered on ``[-A, A]`` (``A`` slightly beyond
    ``a_n``) and uniform outside.  ``trap`` are trapezoid weights for ``p = 1``.
    """

    rec: object
    nodes: np.ndarray
    logw: np.ndarray
    trap: np.ndarray
    radius: float
    inner: float
    degree: int

    @property
    def w(self):
        return np.exp(self.logw)

    @property
    def rule(self):
        return self.rec.rule

    def with_point(self, x):
        """Copy with ``x`` (and ``-x``) inserted as nodes."""
        pts = np.unique(np.concatenate([self.nodes, np.asarray([x, -x], dtype=DTYPE)]))
        return _finish_grid(self.rec, pts, self.radius, self.inner, self.degree)

    def refined(self, factor=2):
        """Grid with ``factor`` times as many nodes (midpoints inserted)."""
        x = self.nodes
        pts = [x]
        for j in range(1, factor):
            pts.append(x[:-1] + (x[1:] - x[:-1]) * DTYPE(j) / factor)
        pts = np.unique(np.concatenate(pts))
        return _finish_grid(self.rec, pts, self.radius, self.inner, self.degree)


def _finish_grid(rec, pts, R, A, degree):
    pts = np.asarray(pts, dtype=DTYPE)
    trap = np.zeros_like(pts)
    trap[1:-1] = (pts[2:] - pts[:-2]) / 2
    trap[0] = (pts[1] - pts[0]) / 2
    trap[-1] = (pts[-1] - pts[-2]) / 2
    logw = -rec.weight.Q(pts)
    return NormGrid(rec, pts, logw, trap, float(R), float(A), int(degree))


def build_grid(rec, degree, table=None, density=DENSITY, min_nodes=MIN_GRID):
    """Grid for approximation problems of degree ``degree``."""
    table = table or rec.table
    R = rec.rule.radius
    m = max(int(degree), 1)
    A = min(R, table.a(m) * (1 + 4 * table.delta(m)))
    total = max(density * (degree + 1), min_nodes)
    n_in = total * 4 // 5
    n_out = max((total - n_in) // 2, 8)
    theta = np.linspace(-np.pi / 2, np.pi / 2, n_in, dtype=DTYPE)
    inner = DTYPE(A) * np.sin(theta)
    inner = (inner - inner[::-1]) / 2
    if R > A:
        outer = np.linspace(A, R, n_out + 1, dtype=DTYPE)[1:]
        pts = np.concatenate([-outer[::-1], inner, outer])
    else:
        pts = inner
    return _finish_grid(rec, np.unique(pts), R, A, degree)


# -- norms ------------------------------------------------------------------

def _golden_max(fn, lo, hi, iters=GOLDEN_ITERS):
    """Vectorised golden-section maximisation of ``fn`` on ``[lo, hi]``."""
    g = DTYPE((math.sqrt(5) - 1) / 2)
    a, b = lo.copy(), hi.copy()
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - g * (b - a)
        new_d = a + g * (b - a)
        c2 = np.where(left, new_c, d)
        d2 = np.where(left, c, new_d)
        fc2 = np.where(left, fn(c2), fd)
        fd2 = np.where(left, fc, fn(d2))
        c, d, fc, fd = c2, d2, fc2, fd2
    x = np.where(fc >= fd, c, d)
    return x, np.maximum(fc, fd)


def _local_sup(absfun, x, vals, top=8):
    """Refine the largest local maxima of ``vals = absfun(x)`` on the grid."""
    n = vals.size
    if n < 3:
        return float(np.max(vals))
    interior = (vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])
    idx = np.nonzero(interior)[0] + 1
    ends = [i for i in (0, n - 1) if vals[i] > 0]
    idx = np.concatenate([idx, np.asarray(ends, dtype=int)])
    if idx.size == 0:
        return float(np.max(vals))
    idx = idx[np.argsort(vals[idx])[::-1][:top]]
    lo = x[np.maximum(idx - 1, 0)]
    hi = x[np.minimum(idx + 1, n - 1)]
    _, best = _golden_max(absfun, lo, hi)
    return float(max(np.max(best), np.max(vals)))


def weighted_values(rec, f, x):
    x = np.asarray(x, dtype=DTYPE)
    return _values(f, x) * np.exp(-rec.weight.Q(x))


def weighted_norm(f, p, grid, refine=True):
    """``||f w||_p`` (``p = 2`` on the quadrature rule, else on ``grid``)."""
    p = parse_p(p)
    rec = grid.rec
    if p == 2:
        rule = rec.rule
        vals = _values(f, rule.nodes)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite values in weighted_norm")
        return float(np.sqrt(rule.weights @ (vals * vals)))
    vals = _values(f, grid.nodes)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite values in weighted_norm")
    fw = np.abs(vals) * grid.w
    if p == 1:
        if not refine or not callable(f):
            return float(grid.trap @ fw)
        return _abs_integral(lambda t: weighted_values(rec, f, t), grid.nodes, vals * grid.w)
    if not refine or not callable(f):
        return float(np.max(fw))
    return _local_sup(lambda t: np.abs(weighted_values(rec, f, t)), grid.nodes, fw)


def _abs_integral(gw, x, v):
    """``int |gw|`` over ``[x_0, x_-1]`` with ``v = gw(x)``.

    Sign changes between nodes are located by bisection and become panel
    breaks, so each panel sees a smooth integrand for Gauss-Legendre.
    """
    cross = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    lo, hi, flo = x[cross].copy(), x[cross + 1].copy(), v[cross].copy()
    for _ in range(BISECT_ITERS if cross.size else 0):
        mid = (lo + hi) / 2
        fm = gw(mid)
        same = np.sign(fm) == np.sign(flo)
        lo, flo = np.where(same, mid, lo), np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    pts = np.unique(np.concatenate([x, (lo + hi) / 2]))
    gx, gwts = gauss_legendre(L1_POINTS)
    a, b = pts[:-1, None], pts[1:, None]
    half = (b - a) / 2
    s = a + half * (gx + 1)
    vals = np.abs(gw(s.ravel())).reshape(s.shape)
    return float(np.sum(vals * half * gwts))


# -- best constants ---------------------------------------------------------

def best_const(rec, f, p, grid=None):
    """Minimise ``c -> ||(f - c) w||_p``; returns ``(c0, value)``."""
    p = parse_p(p)
    if p == 2:
        rule = rec.rule
        vals = _values(f, rule.nodes)
        c0 = (rule.weights @ vals) / np.sum(rule.weights)
        resid = vals - c0
        return c0, float(np.sqrt(rule.weights @ (resid * resid)))
    if grid is None:
        raise ValueError("p = 1 and p = inf need a NormGrid")
    vals = _values(f, grid.nodes)
    w = grid.w
    if p == 1:
        # weighted median of f with weights trap * w
        mass = grid.trap * w
        order = np.argsort(vals)
        cum = np.cumsum(mass[order])
        # every c between these two sorted values is a weighted median; nodes
        # far out carry negligible mass, so the tie can span several of them
        tol = 1e-9 * cum[-1]
        sv = vals[order]
        lo = int(np.searchsorted(cum, cum[-1] / 2 - tol))
        hi = min(int(np.searchsorted(cum, cum[-1] / 2 + tol)), sv.size - 1)
        c0 = (sv[lo] + sv[hi]) / 2
        if callable(f):
            return c0, weighted_norm(lambda t: _values(f, t) - c0, 1, grid)
        return c0, float(mass @ np.abs(vals - c0))

    def objective(c):
        return float(np.max(np.abs(vals - c) * w))

    # any c with objective <= v0 lies in every [f_i - v0/w_i, f_i + v0/w_i]
    live = w > 0
    c_start = vals[np.argmax(w)]
    v0 = objective(c_start)
    if v0 == 0:
        return c_start, 0.0
    lo = DTYPE(np.max(vals[live] - v0 / w[live]))
    hi = DTYPE(np.min(vals[live] + v0 / w[live]))
    lo, hi = min(lo, c_start), max(hi, c_start)
    g = DTYPE((math.sqrt(5) - 1) / 2)
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = objective(c), objective(d)
    width = float(hi - lo)
    while float(b - a) > 1e-10 * width:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = objective(d)
    c0 = (a + b) / 2
    G = lambda t: _values(f, t) - c0  # noqa: E731
    return c0, weighted_norm(G, math.inf, grid) if callable(f) else objective(c0)


# -- best polynomials -------------------------------------------------------

@dataclass
class BestApprox:
    poly: BasisPoly
    E: float
    p: float
    n: int
    lower: float = float("nan")
    defect: float = 0.0
    iterations: int = 0
    certificate: float = 0.0
    tail_flag: bool = False
    radius: float = float("nan")
    info: dict = field(default_factory=dict)


def solve_refined(A, b, iters=3):
    """Solve ``A x = b`` in extended precision by refining a double LU solve."""
    lu = lu_factor(np.asarray(A, dtype=np.float64))
    x = lu_solve(lu, np.asarray(b, dtype=np.float64)).astype(DTYPE)
    for _ in range(iters):
        r = b - A @ x
        x = x + lu_solve(lu, np.asarray(r, dtype=np.float64)).astype(DTYPE)
    return x


def best_poly(rec, f, p, n, grid=None, table=None):
    """Best weighted approximation of degree ``n``; returns :class:`BestApprox`."""
    p = parse_p(p)
    if n > rec.N:
        raise ValueError(f"n={n} exceeds table size {rec.N}")
    if p == 2:
        return _best_l2(rec, f, n)
    grid = grid or build_grid(rec, n, table)
    if p == math.inf:
        return _remez(rec, f, n, grid, table or rec.table)
    return _best_l1(rec, f, n, grid)


def _best_l2(rec, f, n):
    P = partial_sum(rec, f, n + 1)
    rule = rec.rule
    vals = _values(f, rule.nodes)
    resid = vals - rec.rule_basis[:, :n + 1] @ P.coeffs
    E = float(np.sqrt(rule.weights @ (resid * resid)))
    full = (rule.weights * vals) @ rec.rule_basis
    fnorm = float(np.sqrt(rule.weights @ (vals * vals)))
    tail = float(np.max(np.abs(full[max(rec.N - 2, 0):])))
    return BestApprox(P, E, 2, n, lower=E, radius=rule.radius,
                      tail_flag=tail > 1e-10 * fnorm,
                      info={"coeff_tail_estimate": float(np.sqrt(np.sum(full[n + 1:] ** 2)))})


def _noise_floor(G, Phi, c):
    scale = float(np.max(np.abs(G))) + float(np.max(np.abs(Phi)) * np.sum(np.abs(c)))
    return 2 * EPS * max(scale, 1e-300)


def _select_alternating(xs, r, h):
    """Extremal points of ``r`` with alternating signs (one per sign run)."""
    cand = np.nonzero(np.abs(r) >= 0.5 * abs(h))[0]
    if cand.size == 0:
        return np.asarray([], dtype=int)
    sg = np.sign(r[cand])
    breaks = np.nonzero(np.diff(sg) != 0)[0] + 1
    runs = np.split(cand, breaks)
    return np.asarray([run[np.argmax(np.abs(r[run]))] for run in runs], dtype=int)


def _trim(idx, r, k):
    idx = list(idx)
    while len(idx) > k:
        if abs(r[idx[0]]) < abs(r[idx[-1]]):
            idx.pop(0)
        else:
            idx.pop()
    return np.asarray(idx, dtype=int)


def _remez(rec, f, n, grid, table):
    weight = rec.weight
    X = grid.nodes
    Phi = eval_basis(rec, n, X) * grid.w[:, None]
    G = _values(f, X) * grid.w
    m = n + 2

    def resid_at(t):
        t = np.asarray(t, dtype=DTYPE)
        return (_values(f, t) - eval_basis(rec, n, t) @ c) * np.exp(-weight.Q(t))

    A = DTYPE(table.a(max(n, 1)))
    ref = A * np.cos(np.pi * np.arange(m, dtype=DTYPE) / (m - 1))[::-1]
    signs = (-1.0) ** np.arange(m)
    best = None
    c = np.zeros(n + 1, dtype=DTYPE)
    for it in range(1, REMEZ_MAXITER + 1):
        Phi_ref = eval_basis(rec, n, ref) * np.exp(-weight.Q(ref))[:, None]
        M = np.column_stack([Phi_ref, signs.astype(DTYPE)])
        sol = solve_refined(M, _values(f, ref) * np.exp(-weight.Q(ref)))
        c, h = sol[:-1], sol[-1]
        # evaluate on grid plus the current reference
        xs = np.concatenate([X, ref])
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        r = np.concatenate([G - Phi @ c, resid_at(ref)])[order]
        floor = _noise_floor(G, Phi, c)
        if abs(h) <= floor and float(np.max(np.abs(r))) <= 10 * floor:
            poly = BasisPoly(rec, c)
            return BestApprox(poly, float(np.max(np.abs(r))), math.inf, n, lower=abs(float(h)),
                              iterations=it, radius=grid.radius, info={"exact": True})
        idx = _select_alternating(xs, r, h)
        if idx.size < m:
            raise ExchangeError(f"lost alternation at iteration {it}", best)
        # refine each extremum inside its neighbouring grid cells
        lo = xs[np.maximum(idx - 1, 0)]
        hi = xs[np.minimum(idx + 1, xs.size - 1)]
        sgn = np.sign(r[idx])
        pts, _ = _golden_max(lambda t: np.abs(resid_at(t)), lo, hi)
        keep = np.abs(resid_at(pts)) >= np.abs(r[idx])
        pts = np.where(keep, pts, xs[idx])
        rv = resid_at(pts)
        rv = np.where(np.sign(rv) == sgn, rv, r[idx])
        sel = _trim(np.arange(pts.size), rv, m)
        new_ref, new_r = pts[sel], rv[sel]
        E = float(np.max(np.abs(r)))
        E = max(E, float(np.max(np.abs(rv))))
        defect = (E - abs(float(h))) / E
        cand = BestApprox(BasisPoly(rec, c), E, math.inf, n, lower=abs(float(h)),
                          defect=defect, iterations=it, radius=grid.radius)
        if best is None or E < best.E:
            best = cand
        if defect < REMEZ_TOL or E - abs(float(h)) <= floor:
            cand.info["noise_floor"] = floor
            return cand
        ref = np.sort(new_ref)
    raise ExchangeError(f"Remez exchange did not converge in {REMEZ_MAXITER} iterations "
                        f"(defect {best.defect:.3e})", best)


def _best_l1(rec, f, n, grid):
    X = grid.nodes
    w = grid.w
    Phi = eval_basis(rec, n, X) * w[:, None]
    G = _values(f, X) * w
    tau = grid.trap
    live = tau * w > 0
    M = X.size
    k = n + 1
    Phi64 = np.asarray(Phi, dtype=np.float64)
    G64 = np.asarray(G, dtype=np.float64)
    tau64 = np.asarray(tau, dtype=np.float64)
    cost = np.concatenate([np.zeros(k), tau64])
    I = np.eye(M)
    A_ub = np.block([[Phi64, -I], [-Phi64, -I]])
    bounds = [(None, None)] * k + [(0, None)] * M
    # solve for corrections to the current coefficients with the residual
    # rescaled to unit size, so solver tolerances stay relative to E; the
    # first round starts from zero (starting from the L2 fit can leave a
    # noise level residual on which the simplex method stalls)
    c = np.zeros(k, dtype=DTYPE)
    obj = float(tau @ np.abs(G))
    res = last = None
    for rnd in range(L1_ROUNDS):
        r = G - Phi @ c
        scale = float(np.max(np.abs(r)))
        if scale == 0:
            break
        rs = np.asarray(r / DTYPE(scale), dtype=np.float64)
        res = _solve_lp(cost, A_ub, np.concatenate([rs, -rs]), bounds, first=rnd == 0)
        if res.status != 0 and rnd > 0:
            break  # refinement did not finish; keep the current iterate
        if res.status != 0:
            raise ArithmeticError(f"L1 linear program failed: {res.message}")
        last = res
        trial = c + DTYPE(scale) * np.asarray(res.x[:k], dtype=DTYPE)
        tobj = float(tau @ np.abs(G - Phi @ trial))
        if tobj >= obj:
            break
        improved = obj - tobj
        c, obj = trial, tobj
        if improved <= 1e-12 * obj:
            break
    r = G - Phi @ c
    # polish to the optimal vertex: the interpolation points are the rows whose
    # slack variable sits at zero in the last simplex solution
    slack = np.asarray(last.x[k:], dtype=np.float64) if last is not None else np.abs(
        np.asarray(r, dtype=np.float64))
    size = np.max(np.abs(Phi64), axis=1)
    live = live & (size > 1e-6 * np.max(size))
    order = np.lexsort((np.abs(np.asarray(r, dtype=np.float64)), ~live, slack))
    chosen = np.sort(order[:k])
    if np.linalg.matrix_rank(np.asarray(Phi[chosen], dtype=np.float64)) < k:
        chosen = None
    certificate = float("nan")
    if chosen is not None:
        c2 = solve_refined(Phi[chosen], G[chosen])
        r2 = G - Phi @ c2
        obj2 = float(tau @ np.abs(r2))
        tol = 64 * EPS * float(tau @ (np.abs(G) + np.abs(Phi) @ np.abs(c)))
        if obj2 <= obj + tol:
            c, r, obj = c2, r2, obj2
            certificate = _l1_certificate(Phi, r, tau, chosen)
    lower = obj
    if not certificate <= 1e-8 and last is not None:
        # degenerate vertex: fall back to the duality gap of the LP multipliers
        lower = _l1_dual_bound(Phi, G, tau, last)
        certificate = max(0.0, (obj - lower) / obj) if obj > 0 else 0.0
    # the LP optimum is for the trapezoid discretisation; report the accurate
    # norm of its residual and keep the discrete value alongside
    P = BasisPoly(grid.rec, c)
    E = weighted_norm(lambda t: _values(f, t) - P(t), 1, grid)
    return BestApprox(P, E, 1, n, lower=lower, certificate=certificate, radius=grid.radius,
                      info={"discrete_E": obj, "discrete_lower": lower})


def _solve_lp(cost, A_ub, b_ub, bounds, first):
    """HiGHS with fallbacks.

    The first solve runs at default tolerances (tight ones can make the
    simplex method stall when E is tiny), then tries interior point and tight
    simplex.  Refinement rounds only see the rescaled residual and run tight.
    """
    loose = {"maxiter": LP_OPTIONS["maxiter"]}
    attempts = ([("highs", loose), ("highs-ipm", loose), ("highs", LP_OPTIONS)] if first
                else [("highs", LP_OPTIONS)])
    for method, opts in attempts:
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method=method, options=opts)
        if res.status == 0:
            break
    return res


def _l1_dual_bound(Phi, G, tau, res):
    """Lower bound ``y^T G`` from LP multipliers made exactly dual feasible.

    Any ``y`` with ``Phi^T y = 0`` and ``|y| <= tau`` gives
    ``y^T G = y^T (G - Phi c) <= sum tau |G - Phi c|`` for every ``c``.
    """
    M = G.size
    m = np.asarray(res.ineqlin.marginals, dtype=DTYPE)
    best = 0.0
    for y in (m[M:] - m[:M], m[:M] - m[M:]):
        # project onto the null space of Phi^T, then shrink into the box
        y = y - Phi @ solve_refined(Phi.T @ Phi, Phi.T @ y)
        ratio = np.max(np.abs(y)[tau > 0] / tau[tau > 0]) if np.any(tau > 0) else 0
        y = np.where(tau > 0, y, 0)
        if ratio > 1:
            y = y / ratio
        best = max(best, float(y @ G))
    return best


def _l1_certificate(Phi, r, tau, basic):
    """Subgradient optimality residual for the discrete L1 problem.

    Off the interpolation set the dual variable is ``tau * sign(r)``; on it the
    dual is forced by ``Phi^T y = 0``.  Optimal iff ``|y_i| <= tau_i`` there.
    """
    mask = np.ones(r.size, dtype=bool)
    mask[basic] = False
    y_off = tau[mask] * np.sign(r[mask])
    rhs = -(Phi[mask].T @ y_off)
    y_on = solve_refined(Phi[basic].T, rhs)
    excess = np.abs(y_on) / tau[basic] - 1
    return float(max(0.0, float(np.max(excess))))


def favard_check(rec, table, g, gprime, p, n, grid=None):
    """``E_{p,n}(w; g) / ((a_n / n) ||g' w||_p)``."""
    p = parse_p(p)
    grid = grid or build_grid(rec, n, table)
    E = best_poly(rec, g, p, n, grid, table).E
    denom = table.a(n) / n * weighted_norm(gprime, p, grid)
    return E / denom if denom > 0 else 0.0
