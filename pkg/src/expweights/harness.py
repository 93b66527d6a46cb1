"""Verification experiments and their machine-readable reports.

Every experiment returns a :class:`VerifyReport`.  Two row schemas are used:

``bound``
    derivative-error experiments.  Each row carries the measured error, the
    best-approximation error entering the bound, ``T(a_n)``, ``a_n`` and the
    exponent of ``T``; the bound is recomputable from the row alone as
    ``T**t_power * E_df + (n / a_n) * sqrt(T) * eta``.
``ratio``
    everything else: one measured ``value`` against a ``reference`` scale,
    with the admissible band ``[lo, hi]`` stored on the row.

Constants in the results being checked are unspecified, so "bounded" is
operationalised as band membership plus stability of the ratio over ``n``
(max/median for the derivative bounds, max/min for the supporting
relations).
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .approx import (EPS, ExchangeError, best_const, best_poly, build_grid, p_label, parse_p,
                     weighted_norm)
from .battery import BATTERY_VERSION, DEFAULT_FUNCTIONS, get_function, tail_battery
from .mrs import MrsTable, check_condition_14
from .operators import (BasisPoly, _values, orthogonality_check, primitive_vp,
                        tail_operator, tail_operator_derivative, vallee_poussin)
from .orthopoly import MAX_DEGREE, christoffel, stieltjes
from .quadrature import DTYPE
from .weights import WeightSpec, check_class, parse_weight

SCHEMA_VERSION = "1"
DEFAULT_BAND = 20.0
DEFAULT_STABILITY = 10.0
EXACT_TOL = 1e-8
CONSISTENCY_RTOL = 1e-12
VP_MAX_N = 20
FLOOR_ULPS = 16

BOUND_COLUMNS = ("experiment", "variant", "weight", "f", "p", "n", "order", "eta",
                 "err_f", "err_df", "E_f", "E_df", "E_df_degree", "T_an", "a_n",
                 "t_power", "bound", "ratio", "scope", "status", "note")
RATIO_COLUMNS = ("experiment", "relation", "weight", "f", "p", "n", "x", "value",
                 "reference", "ratio", "lo", "hi", "scope", "status", "note")


class ConfigError(ValueError):
    pass


# -- configuration ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    weights: tuple = (WeightSpec.erdos(),)
    p_list: tuple = (2,)
    n_list: tuple = tuple(range(4, 17))
    functions: tuple = DEFAULT_FUNCTIONS
    band: float = DEFAULT_BAND
    stability: float = DEFAULT_STABILITY
    N: int = MAX_DEGREE
    orders: int = 2
    eta_factors: tuple = (1.0, 10.0, 20.0, 40.0, 80.0)
    step_n: tuple = (2, 4, 6, 8)
    step_points: tuple = (0.0, 0.5, 1.0, 1.5)
    asymptotic_t: tuple = (4, 8, 16, 32, 64, 128, 256)
    asymptotic_n: tuple = (8, 16, 32)
    condition_n: tuple = tuple(2 ** k for k in range(2, 15))
    out_dir: str | None = None

    def __post_init__(self):
        try:
            self._normalise()
            self.validate()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def _normalise(self):
        self.weights = tuple(parse_weight(w) if isinstance(w, str) else
                             WeightSpec.from_dict(w) if isinstance(w, dict) else w
                             for w in self.weights)
        self.p_list = tuple(parse_p(p) for p in self.p_list)
        for name in ("n_list", "eta_factors", "step_n", "step_points", "asymptotic_t",
                     "asymptotic_n", "condition_n", "functions"):
            setattr(self, name, tuple(getattr(self, name)))

    def validate(self):
        if not self.weights:
            raise ConfigError("at least one weight is required")
        if not self.n_list or min(self.n_list) < 1:
            raise ConfigError("n_list must be non-empty with entries >= 1")
        if not 1 <= self.N <= MAX_DEGREE:
            raise ConfigError(f"N must be in [1, {MAX_DEGREE}]")
        if max(self.n_list) > self.N - 3:
            raise ConfigError(f"max n is {self.N - 3} for N={self.N}")
        if not self.band > 1 or not self.stability >= 1:
            raise ConfigError("band must exceed 1 and stability must be >= 1")
        if not 1 <= self.orders <= 3:
            raise ConfigError("orders must be 1, 2 or 3")
        if any(e < 1 for e in self.eta_factors):
            raise ConfigError("eta factors must be >= 1 (eta >= E)")
        if self.step_n and 2 * max(self.step_n) - 1 > self.N:
            raise ConfigError("step_n too large for N")
        if self.asymptotic_n and max(self.asymptotic_n) > self.N + 1:
            raise ConfigError("asymptotic_n too large for N")
        for name in self.functions:
            if not name.startswith("p"):
                get_function(name)

    def vp_n_list(self):
        return tuple(n for n in self.n_list if n <= min(VP_MAX_N, (self.N + 1) // 2))

    def to_dict(self):
        return {
            "weights": [w.to_dict() for w in self.weights],
            "p_list": [p_label(p) for p in self.p_list],
            "n_list": list(self.n_list),
            "functions": list(self.functions),
            "band": self.band,
            "stability": self.stability,
            "N": self.N,
            "orders": self.orders,
            "eta_factors": list(self.eta_factors),
            "step_n": list(self.step_n),
            "step_points": list(self.step_points),
            "asymptotic_t": list(self.asymptotic_t),
            "asymptotic_n": list(self.asymptotic_n),
            "condition_n": list(self.condition_n),
            "out_dir": self.out_dir,
            "battery_version": BATTERY_VERSION,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("battery_version", None)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


# -- shared numerical state -------------------------------------------------

class Context:
    """Caches MRS tables, recurrence tables and norm grids per weight."""

    def __init__(self, N=MAX_DEGREE):
        self.N = N
        self._lock = threading.Lock()
        self._tables = {}
        self._recs = {}
        self._grids = {}

    @staticmethod
    def _key(weight):
        return (weight, id(weight.q_funcs))

    def table(self, weight):
        key = self._key(weight)
        with self._lock:
            if key not in self._tables:
                self._tables[key] = MrsTable(weight)
            return self._tables[key]

    def rec(self, weight):
        key = self._key(weight)
        with self._lock:
            hit = self._recs.get(key)
        if hit is None:
            hit = stieltjes(weight, self.table(weight), self.N)
            with self._lock:
                self._recs.setdefault(key, hit)
        return hit

    def grid(self, weight, n):
        key = (self._key(weight), n)
        with self._lock:
            hit = self._grids.get(key)
        if hit is None:
            hit = build_grid(self.rec(weight), n, self.table(weight))
            with self._lock:
                self._grids.setdefault(key, hit)
        return hit


# -- reports ----------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def _num(text):
    if text == "":
        return float("nan")
    return float(text)


def bound_value(row):
    """``T**t_power * E_df + (n / a_n) * sqrt(T) * eta`` from the row's own columns."""
    T, a, n = float(row["T_an"]), float(row["a_n"]), float(row["n"])
    eta = row["eta"]
    eta = 0.0 if eta == "" or eta != eta else float(eta)
    return T ** float(row["t_power"]) * float(row["E_df"]) + (n / a) * math.sqrt(T) * eta


@dataclass
class VerifyReport:
    experiment: str
    schema: str
    rows: list = field(default_factory=list)
    header: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def columns(self):
        return BOUND_COLUMNS if self.schema == "bound" else RATIO_COLUMNS

    def add(self, **row):
        full = {c: row.get(c, "") for c in self.columns}
        extra = set(row) - set(self.columns)
        if extra:
            raise KeyError(f"unknown columns {sorted(extra)}")
        self.rows.append(full)
        return full

    def check(self, name, value, limit, passed, group="", kind="max"):
        self.checks.append({"name": name, "group": group, "value": float(value),
                            "limit": float(limit), "kind": kind, "passed": bool(passed)})

    def asserted(self):
        return [r for r in self.rows if r["scope"] == "asserted"]

    def failing_rows(self):
        return [r for r in self.asserted() if r["status"] in ("fail", "exact-fail", "error")]

    def counts(self):
        rows = self.asserted()
        bad = len(self.failing_rows())
        cbad = sum(not c["passed"] for c in self.checks)
        return {"rows": len(self.rows), "asserted_rows": len(rows), "row_pass": len(rows) - bad,
                "row_fail": bad, "check_pass": len(self.checks) - cbad, "check_fail": cbad}

    @property
    def passed(self):
        c = self.counts()
        return c["row_fail"] == 0 and c["check_fail"] == 0 and self.consistency_ok()

    def consistency_residual(self):
        """Largest relative mismatch between stored and recomputed derived columns."""
        worst = 0.0
        for row in self.rows:
            if self.schema == "bound":
                if row["status"] == "skip" or row["bound"] == "":
                    continue
                stored, again = float(row["bound"]), bound_value(row)
                ratio_again = float(row["err_df"]) / again if again > 0 else float("nan")
                pairs = [(stored, again), (float(row["ratio"]), ratio_again)]
            else:
                if row["value"] == "" or row["reference"] == "":
                    continue
                v, ref = float(row["value"]), float(row["reference"])
                pairs = [(float(row["ratio"]), v / ref if ref != 0 else float("nan"))]
            for a, b in pairs:
                if math.isnan(a) and math.isnan(b):
                    continue
                if math.isnan(a) or math.isnan(b):
                    worst = max(worst, float("inf"))
                    continue
                worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-300))
        return worst

    def consistency_ok(self):
        return self.consistency_residual() <= CONSISTENCY_RTOL

    # -- serialisation ------------------------------------------------------

    def to_csv(self, stream=None):
        out = stream or io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return out.getvalue() if stream is None else None

    @classmethod
    def from_csv(cls, text, experiment=""):
        """Load rows back and verify the derived columns are self-consistent."""
        reader = csv.DictReader(io.StringIO(text))
        cols = tuple(reader.fieldnames or ())
        if cols == BOUND_COLUMNS:
            schema = "bound"
            numeric = ("n", "order", "eta", "err_f", "err_df", "E_f", "E_df", "E_df_degree",
                       "T_an", "a_n", "t_power", "bound", "ratio")
        elif cols == RATIO_COLUMNS:
            schema = "ratio"
            numeric = ("n", "x", "value", "reference", "ratio", "lo", "hi")
        else:
            raise ValueError("unrecognised report columns")
        rep = cls(experiment, schema)
        for raw in reader:
            row = dict(raw)
            for c in numeric:
                if row[c] != "" or c in ("ratio",):
                    row[c] = _num(row[c]) if row[c] != "" else ""
            rep.rows.append(row)
        rep.experiment = experiment or (rep.rows[0]["experiment"] if rep.rows else "")
        if not rep.consistency_ok():
            raise ValueError(f"report is not self-consistent "
                             f"(residual {rep.consistency_residual():.3e})")
        return rep

    def summary(self, config=None, code_version=None):
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "code_version": code_version or __version__,
            "config": config,
            "header": self.header,
            "counts": self.counts(),
            "consistency_residual": self.consistency_residual(),
            "passed": self.passed,
            "checks": self.checks,
            "failing_rows": [{k: _fmt(v) for k, v in r.items()} for r in self.failing_rows()],
            "rows": [{k: _fmt(v) for k, v in r.items()} for r in self.rows],
        }

    def series(self):
        """``{group: [(n, ratio), ...]}`` for plot files."""
        out = {}
        for row in self.rows:
            if row["status"] in ("skip", "exact") or row["n"] == "":
                continue
            r = float(row["ratio"]) if row["ratio"] != "" else float("nan")
            if not math.isfinite(r):
                continue
            if self.schema == "bound":
                parts = (row["variant"], row["weight"], row["f"], f"p{row['p']}",
                         f"i{row['order']}")
            else:
                parts = (row["relation"], row["weight"], row["f"],
                         f"p{row['p']}" if row["p"] != "" else "")
            key = "_".join(str(v) for v in parts if v != "")
            out.setdefault(key, []).append((float(row["n"]), r))
        return out


# -- helpers ----------------------------------------------------------------

def _hypothesis(ctx, weight, n_list, band):
    """Class membership and growth-condition diagnostics for one weight."""
    table = ctx.table(weight)
    rep = check_class(weight)
    cond = check_condition_14(table, sorted(set(n_list)))
    ratios = [r for _, r in cond]
    bounded = max(ratios) <= band
    in_scope = bool(rep.passes and rep.erdos_type and bounded)
    return {
        "weight": weight.label,
        "class_F": rep.passes,
        "class_F_lambda": rep.lam_pass,
        "lambda": rep.lam,
        "Lambda": rep.Lambda,
        "erdos_type": rep.erdos_type,
        "growth_condition_ratios": {str(n): r for n, r in cond},
        "growth_condition_bounded": bounded,
        "in_hypothesis": in_scope,
        "failures": list(rep.failures),
    }


def _scope(hyp):
    return "asserted" if hyp["in_hypothesis"] else "comparison"


def _stability_checks(report, key_fields, band, stability, use_median=True):
    groups = {}
    for row in report.rows:
        if row["scope"] != "asserted" or row["status"] not in ("ok", "fail"):
            continue
        key = "|".join(str(row[k]) for k in key_fields)
        groups.setdefault(key, []).append(float(row["ratio"]))
    for key, vals in groups.items():
        vals = np.asarray(vals)
        finite = bool(np.all(np.isfinite(vals)))
        vmax = float(np.max(vals)) if finite else float("inf")
        report.check("max_ratio_finite_in_band", vmax, band, finite and vmax <= band, key)
        if use_median:
            med = float(np.median(vals))
            spread = vmax / med if finite and med > 0 else float("inf")
            report.check("max_over_median", spread, stability, spread <= stability, key)
            lo = float(np.min(vals))
            report.check("max_over_min_recorded", vmax / lo if lo > 0 else float("inf"),
                         float("inf"), True, key, kind="info")
        else:
            lo = float(np.min(vals))
            spread = vmax / lo if finite and lo > 0 else float("inf")
            report.check("max_over_min", spread, stability, spread <= stability, key)


def _ratio_status(ratio, lo, hi):
    return "ok" if math.isfinite(ratio) and lo <= ratio <= hi else "fail"


def _floor(scale):
    """Values below this are indistinguishable from extended-precision rounding."""
    return FLOOR_ULPS * EPS * scale


def _precision_note(E, scale):
    return "E near extended-precision floor" if E < 1e3 * EPS * max(scale, 1e-300) else ""


def _tail_side_condition(ctx, weight, fn, n):
    """``|f' w|`` at three points beyond ``a_{2n}``."""
    table = ctx.table(weight)
    a2n = table.a(2 * n)
    x = np.asarray([1.1 * a2n, 1.3 * a2n, 1.6 * a2n], dtype=DTYPE)
    vals = np.abs(_values(fn, x) * np.exp(-weight.Q(x)))
    return [float(v) for v in vals]


def _derivative(poly, i):
    return poly.derivative(i)


def _minus(f, P):
    return lambda x: _values(f, x) - P(x)


# -- derivative bounds ------------------------------------------------------

def verify_derivative_bound(cfg, ctx=None):
    """``||w (f' - P')||_p`` against ``T^(3/4)(a_n) E_{p,n-1}(w; f')`` with ``P`` best."""
    return _higher(cfg, ctx, orders=(1,), experiment="derivative-bound")


def verify_higher_derivatives(cfg, j=None, ctx=None):
    """Orders ``i = 1..j`` against ``T^((2i+1)/4)(a_n) E_{p,n-i}(w; f^(i))``.

    Rows with ``variant = relaxed`` use a perturbed ``P`` with
    ``||(f - P) w||_p = T^(1/4)(a_n) E_{p,n}(w; f)`` instead of the best one.
    """
    j = cfg.orders if j is None else j
    if not 1 <= j <= 3:
        raise ConfigError("j must be 1, 2 or 3")
    return _higher(cfg, ctx, orders=tuple(range(1, j + 1)), experiment="higher-derivatives",
                   relaxed=True)


def _higher(cfg, ctx, orders, experiment, relaxed=False):
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport(experiment, "bound")
    rep.header = {"battery_version": BATTERY_VERSION, "hypothesis": [], "side_condition": {},
                  "P": "best approximation of degree n (so its error equals E_{p,n}(w;f))"}
    for weight in cfg.weights:
        rec, table = ctx.rec(weight), ctx.table(weight)
        hyp = _hypothesis(ctx, weight, cfg.n_list, cfg.band)
        rep.header["hypothesis"].append(hyp)
        scope = _scope(hyp)
        for fname in cfg.functions:
            tf = get_function(fname, rec)
            if tf.order < max(orders):
                raise ConfigError(f"{fname} lacks derivative order {max(orders)}")
            side = _tail_side_condition(ctx, weight, tf.derivative(1), max(cfg.n_list))
            scale = float(weighted_norm(tf.derivative(1), math.inf, ctx.grid(weight, 1)))
            rep.header["side_condition"][f"{weight.label}|{fname}"] = side
            rep.check("derivative_times_weight_vanishes", max(side), 1e-6 * max(scale, 1e-300),
                      max(side) <= 1e-6 * max(scale, 1e-300), f"{weight.label}|{fname}")
            for p in cfg.p_list:
                for n in cfg.n_list:
                    grid = ctx.grid(weight, n)
                    best = best_poly(rec, tf, p, n, grid, table)
                    variants = [("best", best.poly, best.E, float("nan"))]
                    if relaxed:
                        T = table.T(n)
                        eta = T ** 0.25 * best.E
                        P2, achieved = _perturb(rec, tf, p, n, grid, best, eta)
                        variants.append(("relaxed", P2, achieved, eta))
                    for variant, P, err_f, eta in variants:
                        for i in orders:
                            _bound_row(rep, cfg, ctx, weight, tf, p, n, i, P, err_f, best.E,
                                       scope, variant, eta_col=eta)
    _stability_checks(rep, ("variant", "weight", "f", "p", "order"), cfg.band, cfg.stability)
    return rep


def _bound_row(rep, cfg, ctx, weight, tf, p, n, i, P, err_f, E_f, scope, variant, eta_col):
    rec, table = ctx.rec(weight), ctx.table(weight)
    base = dict(experiment=rep.experiment, variant=variant, weight=weight.label, f=tf.name,
                p=p_label(p), n=n, order=i, eta=eta_col, err_f=err_f, E_f=E_f, scope=scope)
    if n - i < 0:
        rep.add(**base, status="skip", note=f"n - i < 0 (n={n}, i={i})")
        return
    grid = ctx.grid(weight, n)
    fi = tf.derivative(i)
    Pi = _derivative(P, i)
    err = weighted_norm(_minus(fi, Pi), p, grid)
    T, a = table.T(n), table.a(n)
    tp = (2 * i + 1) / 4
    deg = tf.derivative_degree(i)
    common = dict(base, err_df=err, E_df_degree=n - i, T_an=T, a_n=a, t_power=tp, eta="")
    common["note"] = "" if variant == "best" else f"eta={eta_col:.6g}"
    if deg is not None and deg <= n - i:
        common.update(E_df=0.0, bound=0.0, ratio=float("nan"),
                      status="exact" if err <= EXACT_TOL else "exact-fail")
        rep.add(**common)
        return
    E_df = best_poly(rec, fi, p, n - i, ctx.grid(weight, max(n - i, 0)), table).E
    bound = T ** tp * E_df
    ratio = err / bound if bound > 0 else float("inf")
    note = _precision_note(E_df, weighted_norm(fi, math.inf, grid, refine=False))
    common.update(E_df=E_df, bound=bound, ratio=ratio, status=_ratio_status(ratio, 0, cfg.band))
    if note:
        common["note"] = (common["note"] + "; " + note).strip("; ")
    rep.add(**common)


def _perturb(rec, f, p, n, grid, best, eta):
    """``P = P* + t p_n`` with ``||(f - P) w||_p = eta`` (``t >= 0``)."""
    E = best.E
    pn = BasisPoly(rec, np.eye(n + 1, dtype=DTYPE)[n])
    if eta <= E:
        return best.poly, E
    if p == 2:
        t = math.sqrt(eta * eta - E * E)
    else:
        def gap(t):
            P = best.poly + DTYPE(t) * pn
            return weighted_norm(_minus(f, P), p, grid) - eta
        hi = 2 * eta / weighted_norm(pn, p, grid)
        while gap(hi) < 0:
            hi *= 2
        t = brentq(gap, 0.0, hi, xtol=1e-300, rtol=1e-14, maxiter=200)
    P = best.poly + DTYPE(t) * pn
    return P, weighted_norm(_minus(f, P), p, grid)


def verify_perturbed_bound(cfg, eta_mode="sweep", ctx=None):
    """Derivative error of deliberately perturbed near-best polynomials.

    ``P = P* + t p_n`` with ``||(f - P) w||_p = eta``; the bound is
    ``T^(3/4)(a_n) E_{p,n}(w; f') + (n / a_n) T^(1/2)(a_n) eta``.  With
    ``eta_mode = "sweep"`` eta runs over ``cfg.eta_factors * E`` (doubling
    steps from 10E), with ``"pair"`` over ``{E, 10E}``.  Markov-Bernstein
    rows for ``P = p_n`` are appended with ``variant = markov-bernstein``.
    """
    if eta_mode not in ("sweep", "pair"):
        raise ConfigError("eta_mode must be 'sweep' or 'pair'")
    factors = cfg.eta_factors if eta_mode == "sweep" else (1.0, 10.0)
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("perturbed-bound", "bound")
    rep.header = {"battery_version": BATTERY_VERSION, "hypothesis": [], "eta_factors":
                  list(factors), "perturbation": "t * p_n, t >= 0"}
    for weight in cfg.weights:
        rec, table = ctx.rec(weight), ctx.table(weight)
        hyp = _hypothesis(ctx, weight, cfg.n_list, cfg.band)
        rep.header["hypothesis"].append(hyp)
        scope = _scope(hyp)
        for p in cfg.p_list:
            for n in cfg.n_list:
                grid = ctx.grid(weight, n)
                T, a = table.T(n), table.a(n)
                # Markov-Bernstein: ||p_n' w|| <= C (n sqrt(T) / a_n) ||p_n w||
                pn = BasisPoly(rec, np.eye(n + 1, dtype=DTYPE)[n])
                num = weighted_norm(pn.derivative(), p, grid)
                den = weighted_norm(pn, p, grid)
                mb = (n / a) * math.sqrt(T) * den
                rep.add(experiment=rep.experiment, variant="markov-bernstein",
                        weight=weight.label, f=f"p{n}", p=p_label(p), n=n, order=1, eta=den,
                        err_f=den, err_df=num, E_f="", E_df=0.0, E_df_degree=n, T_an=T, a_n=a,
                        t_power=0.75, bound=mb, ratio=num / mb,
                        status=_ratio_status(num / mb, 0, cfg.band), scope=scope,
                        note="eta column holds ||p_n w||_p")
                for fname in cfg.functions:
                    tf = get_function(fname, rec)
                    best = best_poly(rec, tf, p, n, grid, table)
                    f1 = tf.derivative(1)
                    deg = tf.derivative_degree(1)
                    if deg is not None and deg <= n:
                        E_df = 0.0
                    else:
                        E_df = best_poly(rec, f1, p, n, grid, table).E
                    for fac in factors:
                        eta = fac * best.E
                        P, achieved = _perturb(rec, tf, p, n, grid, best, eta)
                        err = weighted_norm(_minus(f1, P.derivative()), p, grid)
                        bound = T ** 0.75 * E_df + (n / a) * math.sqrt(T) * eta
                        ratio = err / bound if bound > 0 else float("nan")
                        if bound == 0:
                            status = "exact" if err <= EXACT_TOL else "exact-fail"
                        else:
                            status = _ratio_status(ratio, 0, cfg.band)
                        rep.add(experiment=rep.experiment, variant=f"eta={fac:g}E",
                                weight=weight.label, f=fname, p=p_label(p), n=n, order=1,
                                eta=eta, err_f=achieved, err_df=err, E_f=best.E, E_df=E_df,
                                E_df_degree=n, T_an=T, a_n=a, t_power=0.75, bound=bound,
                                ratio=ratio, status=status, scope=scope,
                                note="" if abs(achieved - eta) <= 1e-6 * eta else
                                f"achieved eta {achieved:.6g}")
                    _eta_scaling_checks(rep, weight, fname, p, n, factors)
    _stability_checks(rep, ("variant", "weight", "f", "p"), cfg.band, cfg.stability)
    return rep


def _eta_scaling_checks(rep, weight, fname, p, n, factors):
    rows = [r for r in rep.rows if r["weight"] == weight.label and r["f"] == fname
            and r["p"] == p_label(p) and r["n"] == n and r["variant"].startswith("eta=")]
    group = f"{weight.label}|{fname}|p{p_label(p)}|n{n}"
    if any(r["status"] == "exact" for r in rows):
        return
    # the bound is affine in eta with slope (n / a_n) sqrt(T)
    slope = (n / rows[0]["a_n"]) * math.sqrt(rows[0]["T_an"])
    worst = 0.0
    for r0, r1 in zip(rows, rows[1:]):
        s = (r1["bound"] - r0["bound"]) / (r1["eta"] - r0["eta"])
        worst = max(worst, abs(s - slope) / slope)
    rep.check("bound_linear_in_eta", worst, 1e-9, worst <= 1e-9, group)
    doubling = [r for r in rows if r["eta"] >= 10 * r["E_f"] * (1 - 1e-12)]
    if len(doubling) >= 2:
        C = np.asarray([r["ratio"] for r in doubling], dtype=float)
        mean = float(np.mean(C))
        dev = float(np.max(np.abs(C / mean - 1)))
        rep.check("constant_stable_under_eta_doubling", dev, 0.2, dev <= 0.2, group)
        rep.header.setdefault("recorded_C", {})[group] = mean


# -- relation-level experiments ---------------------------------------------

def _ratio_row(rep, cfg, *, relation, weight, f="", p="", n="", x="", value, reference,
               lo=0.0, hi=None, scope="asserted", note="", status=None, floor=0.0):
    hi = cfg.band if hi is None else hi
    ratio = value / reference if reference != 0 else float("nan")
    if status is None and value <= floor:
        status = "floor"
        note = (note + "; " if note else "") + f"value below rounding floor {floor:.3g}"
    if status is None:
        status = _ratio_status(ratio, lo, hi)
    return rep.add(experiment=rep.experiment, relation=relation, weight=weight.label, f=f,
                   p=p if p == "" else p_label(p), n=n, x=x, value=value, reference=reference,
                   ratio=ratio, lo=lo, hi=hi, scope=scope, status=status, note=note)


def _relation_stability(rep, cfg, relations, fields=("relation", "weight", "f", "p")):
    groups = {}
    for row in rep.rows:
        if row["relation"] not in relations or row["status"] != "ok":
            continue
        key = "|".join(str(row[k]) for k in fields)
        groups.setdefault(key, []).append(float(row["ratio"]))
    for key, vals in groups.items():
        lo, hi = min(vals), max(vals)
        spread = hi / lo if lo > 0 else float("inf")
        rep.check("max_over_min", spread, cfg.stability, spread <= cfg.stability, key)


def verify_step_approximation(cfg, ctx=None):
    """``E_{1,2n-1}(w; chi_(-inf,x])`` against ``(a_n / n) w(x)``."""
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("step-approximation", "ratio")
    rep.header = {"x_points": "multiples of a_n", "multiples": list(cfg.step_points)}
    for weight in cfg.weights:
        rec, table = ctx.rec(weight), ctx.table(weight)
        for n in cfg.step_n:
            a = table.a(n)
            base = ctx.grid(weight, 2 * n - 1)
            for mult in cfg.step_points:
                x = DTYPE(mult * a)
                grid = base.with_point(x) if mult else base.with_point(DTYPE(0))
                chi = (lambda xx, x=x: (np.asarray(xx, dtype=DTYPE) <= x).astype(DTYPE))
                E = best_poly(rec, chi, 1, 2 * n - 1, grid, table)
                wx = float(np.exp(-weight.Q(np.asarray([x], dtype=DTYPE)))[0])
                ref = a / n * wx
                note = f"x={mult:g}a_n; certificate={E.certificate:.2e}"
                floor = _floor(weighted_norm(chi, math.inf, grid, refine=False))
                status = None
                if E.E > floor and not E.certificate <= 1e-8:
                    status = "fail"
                    note += "; L1 optimality not certified"
                _ratio_row(rep, cfg, relation="step", weight=weight, f=f"chi({mult:g}a_n)", p=1,
                           n=n, x=float(x), value=E.E, reference=ref, note=note, status=status,
                           floor=floor)
                if mult == 0:
                    half = lambda xx, chi=chi: chi(xx) - DTYPE(0.5)  # noqa: E731
                    cand = weighted_norm(half, 1, grid)
                    _ratio_row(rep, cfg, relation="step-vs-half-constant", weight=weight,
                               f="chi(0)", p=1, n=n, x=0.0, value=E.E, reference=cand, hi=1.0)
    fields = ("relation", "weight", "f", "p")
    _relation_stability(rep, cfg, {"step"}, fields)
    return rep


def verify_tail_operator(cfg, ctx=None):
    """Bounds and identities for ``I(h)(t) = w(t)^-2 int_t^inf h w^2``."""
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("tail-operator", "ratio")
    rep.header = {"h_battery": "centered: int h w^2 = 0", "g": "sin"}
    for weight in cfg.weights:
        rec, table = ctx.rec(weight), ctx.table(weight)
        grid = ctx.grid(weight, max(cfg.n_list))
        rule = rec.rule
        for hname, h in tail_battery(rec).items():
            mass = float(rule.weights @ _values(h, rule.nodes))
            hscale = weighted_norm(h, 2, grid)
            _ratio_row(rep, cfg, relation="centered", weight=weight, f=hname,
                       value=abs(mass), reference=hscale, hi=1e-12,
                       note="int h w^2 relative to ||h w||_2")
            on_rule, flag_r = tail_operator(weight, h, rule.nodes, centered=True,
                                            return_flag=True)
            on_grid, flag_g = tail_operator(weight, h, grid.nodes, centered=True,
                                            return_flag=True)
            dI_grid = 2 * weight.dQ(grid.nodes) * on_grid - _values(h, grid.nodes)
            dI_rule = 2 * weight.dQ(rule.nodes) * on_rule - _values(h, rule.nodes)
            for p in (1, 2, math.inf):
                if p == 2:
                    val = float(np.sqrt(rule.weights @ (dI_rule * dI_rule)))
                else:
                    val = weighted_norm(dI_grid, p, grid)
                _ratio_row(rep, cfg, relation="derivative-bound", weight=weight, f=hname,
                           p=p, value=val, reference=weighted_norm(h, p, grid),
                           note="tail not decayed" if (flag_r or flag_g) else "")
            # integration by parts: int g h w^2 = int g' I(h) w^2
            lhs = float(rule.weights @ (np.sin(rule.nodes) * _values(h, rule.nodes)))
            rhs = float(rule.weights @ (np.cos(rule.nodes) * on_rule))
            scale = weighted_norm(np.sin, 2, grid) * hscale
            _ratio_row(rep, cfg, relation="integration-by-parts", weight=weight, f=hname,
                       value=abs(lhs - rhs), reference=scale, hi=1e-6)
            # left tail written through the mass versus the centered form
            t = -grid.nodes[grid.nodes < 0][:: max(1, grid.nodes.size // 40)]
            t = -np.abs(t)
            a1 = tail_operator(weight, h, t, centered=True)
            a2 = tail_operator(weight, h, t, centered=False)
            # both forms are integrals of h w^2, so compare them on that scale;
            # against w alone the rounding in int h w^2 is amplified by exp(Q(t))
            wt = np.exp(-2 * weight.Q(t))
            diff = float(np.max(np.abs((a1 - a2) * wt)))
            ref = float(np.max(np.abs(a1 * wt))) + hscale
            _ratio_row(rep, cfg, relation="left-tail-forms", weight=weight, f=hname,
                       value=diff, reference=ref, hi=1e-10)
        for n in cfg.n_list:
            if n + 3 > rec.N:
                continue
            h = BasisPoly(rec, np.eye(n + 4, dtype=DTYPE)[n + 1] + np.eye(n + 4, dtype=DTYPE)[n + 3])
            g = ctx.grid(weight, n)
            # h is orthogonal to p_0, so the centred left tail avoids adding back
            # a rounding-level mass times exp(2Q)
            vals = tail_operator(weight, h, g.nodes, centered=True)
            val = weighted_norm(vals, math.inf, g)
            ref = table.a(n) / n * weighted_norm(h, math.inf, g)
            _ratio_row(rep, cfg, relation="orthogonal-tail-bound", weight=weight,
                       f=f"p{n + 1}+p{n + 3}", p=math.inf, n=n, value=val, reference=ref)
    _relation_stability(rep, cfg, {"orthogonal-tail-bound"}, ("relation", "weight", "p"))
    return rep


def verify_favard(cfg, ctx=None):
    """``E_{p,n}(w; g)`` against ``(a_n / n) ||g' w||_p``."""
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("favard", "ratio")
    for weight in cfg.weights:
        rec, table = ctx.rec(weight), ctx.table(weight)
        for fname in cfg.functions:
            tf = get_function(fname, rec)
            for p in cfg.p_list:
                for n in cfg.n_list:
                    grid = ctx.grid(weight, n)
                    E = best_poly(rec, tf, p, n, grid, table).E
                    ref = table.a(n) / n * weighted_norm(tf.derivative(1), p, grid)
                    deg = tf.poly_degree
                    status = ("exact" if E <= EXACT_TOL else "exact-fail") if (
                        deg is not None and deg <= n) else None
                    _ratio_row(rep, cfg, relation="favard", weight=weight, f=fname, p=p, n=n,
                               value=E, reference=ref, status=status, floor=_floor(
                                   weighted_norm(tf, math.inf, grid, refine=False)))
    return rep


def verify_vp_near_best(cfg, ctx=None):
    """``||(f - v_n f) w||_p`` against ``T^(1/4)(a_n) E_{p,n}(w; f)``.

    Also records the orthogonality residual of ``f - v_n f`` against ``P_n``
    and the closed-form check for ``f = p_{n+1}`` (``p = 2``).
    """
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("vp-near-best", "ratio")
    rep.header = {"hypothesis": []}
    ns = cfg.vp_n_list()
    for weight in cfg.weights:
        rec, table = ctx.rec(weight), ctx.table(weight)
        hyp = _hypothesis(ctx, weight, ns, cfg.band)
        rep.header["hypothesis"].append(hyp)
        for fname in cfg.functions:
            tf = get_function(fname, rec)
            fnorm = weighted_norm(tf, 2, ctx.grid(weight, 1))
            for n in ns:
                resid = orthogonality_check(rec, tf, n)
                _ratio_row(rep, cfg, relation="orthogonality", weight=weight, f=fname, p=2,
                           n=n, value=resid, reference=fnorm, hi=1e-8)
                v = vallee_poussin(rec, tf, n)
                for p in cfg.p_list:
                    grid = ctx.grid(weight, n)
                    lhs = weighted_norm(_minus(tf, v), p, grid)
                    E = best_poly(rec, tf, p, n, grid, table).E
                    deg = tf.poly_degree
                    status = None
                    if deg is not None and deg <= n:
                        status = "exact" if lhs <= EXACT_TOL else "exact-fail"
                    _ratio_row(rep, cfg, relation="near-best", weight=weight, f=fname, p=p,
                               n=n, value=lhs, reference=table.T(n) ** 0.25 * E, status=status,
                               floor=_floor(weighted_norm(tf, math.inf, grid, refine=False)))
        for n in ns:
            if n < 2:
                continue
            pk = BasisPoly(rec, np.eye(n + 2, dtype=DTYPE)[n + 1])
            v = vallee_poussin(rec, pk, n)
            lhs = weighted_norm(_minus(pk, v), 2, ctx.grid(weight, n))
            _ratio_row(rep, cfg, relation="closed-form-p_{n+1}", weight=weight, f=f"p{n + 1}",
                       p=2, n=n, value=lhs, reference=1.0 / n, lo=1 - 1e-10, hi=1 + 1e-10)
    _relation_stability(rep, cfg, {"near-best"})
    return rep


def verify_primitive(cfg, ctx=None):
    """``V_n = a + int_0^x v_n(g')`` against ``(a_n / n) T^(1/4)(a_n) E_{p,n}(w; g')``."""
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("primitive", "ratio")
    ns = cfg.vp_n_list()
    for weight in cfg.weights:
        rec, table = ctx.rec(weight), ctx.table(weight)
        for fname in cfg.functions:
            tf = get_function(fname, rec)
            g, g1 = tf.derivative(0), tf.derivative(1)
            for p in cfg.p_list:
                for n in ns:
                    grid = ctx.grid(weight, 2 * n)
                    V = primitive_vp(rec, table, g, g1, n, p, grid, return_basis=True)
                    lhs = weighted_norm(_minus(g, V), p, grid)
                    E = best_poly(rec, g1, p, n, ctx.grid(weight, n), table).E
                    ref = table.a(n) / n * table.T(n) ** 0.25 * E
                    deg = tf.derivative_degree(1)
                    status = None
                    if deg is not None and deg <= n:
                        status = "exact" if lhs <= EXACT_TOL else "exact-fail"
                    _ratio_row(rep, cfg, relation="primitive-bound", weight=weight, f=fname,
                               p=p, n=n, value=lhs, reference=ref, status=status,
                               floor=_floor(weighted_norm(g, math.inf, grid, refine=False)))
                    # V_n' = v_n(g') on the grid (weighted sup)
                    v = vallee_poussin(rec, g1, n)
                    dV = V.derivative()
                    diff = weighted_norm(lambda x: dV(x) - v(x), math.inf, grid, refine=False)
                    _ratio_row(rep, cfg, relation="primitive-derivative", weight=weight,
                               f=fname, p=math.inf, n=n, value=diff,
                               reference=weighted_norm(v, math.inf, grid, refine=False), hi=1e-8)
                    # the constant is within factor 2 of E_{p,0} computed independently
                    prim = v.antiderivative()
                    G = _minus(g, prim)
                    note = ""
                    try:
                        E0 = best_poly(rec, G, p, 0, grid, table).E
                    except ExchangeError as exc:
                        E0 = exc.best.E
                        note = f"exchange stalled (defect {exc.best.defect:.2g})"
                    _ratio_row(rep, cfg, relation="primitive-constant", weight=weight, f=fname,
                               p=p, n=n, value=lhs, reference=E0, hi=2.0, note=note,
                               floor=_floor(weighted_norm(g, math.inf, grid, refine=False)))
    _relation_stability(rep, cfg, {"primitive-bound"})
    return rep


def verify_supporting_asymptotics(cfg, ctx=None):
    """Ratio checks of the basic MRS, zero-spacing and Christoffel-function relations.

    The Christoffel relation is asserted with ``w^2``; the ``w^1`` reading is
    recorded as unasserted rows.  The range parameter is ``eta_n := delta_n``.
    """
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("supporting-asymptotics", "ratio")
    rep.header = {"band": [1 / cfg.band, cfg.band], "eta_n": "delta_n = (n T(a_n))^(-2/3)",
                  "christoffel_reading": "w^2 asserted, w^1 recorded"}
    lo = 1 / cfg.band
    for weight in cfg.weights:
        table = ctx.table(weight)
        rec = ctx.rec(weight)
        for t in cfg.asymptotic_t:
            at, a2t = table.a(t), table.a(2 * t)
            T = table.T(t)
            x = np.asarray([at], dtype=DTYPE)
            _ratio_row(rep, cfg, relation="a_2t/a_t", weight=weight, n=t, value=a2t,
                       reference=at, lo=lo)
            _ratio_row(rep, cfg, relation="Q'(a_t)a_t/(t sqrtT)", weight=weight, n=t,
                       value=float(weight.dQ(x)[0]) * at, reference=t * math.sqrt(T), lo=lo)
            _ratio_row(rep, cfg, relation="Q(a_t)sqrtT/t", weight=weight, n=t,
                       value=float(weight.Q(x)[0]) * math.sqrt(T), reference=t, lo=lo)
            _ratio_row(rep, cfg, relation="|1-a_2t/a_t|T(a_t)", weight=weight, n=t,
                       value=abs(1 - a2t / at) * T, reference=1.0, lo=lo)
        for n in cfg.asymptotic_n:
            g = rec.gauss(n)
            z = np.asarray(g.zeros, dtype=np.float64)
            ph = table.phi(n, z)
            for k in range(1, n - 1):
                _ratio_row(rep, cfg, relation="zero-spacing/phi", weight=weight, n=n,
                           x=z[k], value=z[k - 1] - z[k], reference=ph[k], lo=lo)
                _ratio_row(rep, cfg, relation="phi-adjacent", weight=weight, n=n, x=z[k],
                           value=ph[k], reference=ph[k + 1], lo=lo)
            half = table.a(n / 2)
            wz = np.exp(-np.asarray(weight.Q(g.zeros), dtype=np.float64))
            for k in range(n - 1):
                if max(abs(z[k]), abs(z[k + 1])) <= half:
                    # orientation free: larger over smaller of the two weights
                    big, small = max(wz[k], wz[k + 1]), min(wz[k], wz[k + 1])
                    _ratio_row(rep, cfg, relation="w-adjacent-zeros", weight=weight, n=n,
                               x=z[k], value=big, reference=small, lo=lo)
            an = table.a(n)
            xs = np.concatenate([z[np.abs(z) <= an],
                                 an * np.asarray([0.0, 0.25, 0.5, 0.75, 1.0])])
            lam = christoffel(rec, n, np.asarray(xs, dtype=DTYPE))
            ph = table.phi(n, xs)
            w = np.exp(-np.asarray(weight.Q(np.asarray(xs, dtype=DTYPE)), dtype=np.float64))
            for xi, li, pi, wi in zip(xs, lam, ph, w):
                _ratio_row(rep, cfg, relation="christoffel/(phi w^2)", weight=weight, n=n,
                           x=float(xi), value=float(li), reference=pi * wi * wi, lo=lo)
                _ratio_row(rep, cfg, relation="christoffel/(phi w)", weight=weight, n=n,
                           x=float(xi), value=float(li), reference=pi * wi, lo=lo,
                           scope="recorded", note="alternative reading, not asserted")
        for n in range(8, rec.N + 1):
            _ratio_row(rep, cfg, relation="b_n/a_n", weight=weight, n=n, value=float(rec.b[n]),
                       reference=table.a(n), lo=lo)
    asserted = {"a_2t/a_t", "Q'(a_t)a_t/(t sqrtT)", "Q(a_t)sqrtT/t", "|1-a_2t/a_t|T(a_t)",
                "zero-spacing/phi", "phi-adjacent", "christoffel/(phi w^2)", "b_n/a_n"}
    # w-adjacent-zeros is band checked only: its ratio is 1 at the centre by
    # construction, so a max/min spread just squares the band
    _relation_stability(rep, cfg, asserted, ("relation", "weight"))
    return rep


def verify_growth_condition(cfg, ctx=None):
    """``T(a_n) / (n / a_n)^(2/3)`` over ``cfg.condition_n``: bounded and decreasing."""
    ctx = ctx or Context(cfg.N)
    rep = VerifyReport("growth-condition", "ratio")
    for weight in cfg.weights:
        table = ctx.table(weight)
        vals = []
        for n in cfg.condition_n:
            a = table.a(n)
            row = _ratio_row(rep, cfg, relation="T(a_n)/(n/a_n)^(2/3)", weight=weight, n=n,
                             value=table.T(n), reference=(n / a) ** (2 / 3))
            vals.append(row["ratio"])
        steps = np.diff(vals)
        rep.check("decreasing", float(np.max(steps)) if steps.size else 0.0, 0.0,
                  bool(np.all(steps < 0)), weight.label)
    return rep


EXPERIMENTS = {
    "1.1": verify_derivative_bound,
    "4.1": verify_perturbed_bound,
    "4.2": verify_higher_derivatives,
    "3.3": verify_step_approximation,
    "3.4": verify_tail_operator,
    "3.5": verify_favard,
    "3.6": verify_vp_near_best,
    "3.7": verify_primitive,
    "1.4": verify_growth_condition,
    "asymptotics": verify_supporting_asymptotics,
}


def run_experiment(key, cfg, ctx=None):
    if key not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {key!r}; choose from {sorted(EXPERIMENTS)}")
    return EXPERIMENTS[key](cfg, ctx=ctx)
