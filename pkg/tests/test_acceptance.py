"""Numbered acceptance criteria.

Each test carries ``@pytest.mark.acceptance(k, title)``; the conftest hooks
print one PASS/FAIL line per criterion in the terminal summary.  Tolerances
are fixed here and are not tuned to the results.
"""

import filecmp
import math
import time

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from expweights import cli
from expweights.battery import DEFAULT_FUNCTIONS, get_function
from expweights.harness import Context, ExperimentConfig, run_experiment
from expweights.mrs import MrsTable, check_condition_14
from expweights.operators import (BasisPoly, orthogonality_check, partial_sum, vallee_poussin,
                                  vallee_poussin_direct)
from expweights.approx import weighted_norm
from expweights.orthopoly import christoffel, orthonormality_residuals, stieltjes
from expweights.quadrature import DTYPE, build_rule, integrate
from expweights.weights import WeightSpec

FREUD2, FREUD4 = WeightSpec.freud(2.0), WeightSpec.freud(4.0)
ERDOS = WeightSpec.erdos(0.0, 2.0, 1)
BATTERY = DEFAULT_FUNCTIONS + ("smoothabs3",)


def _checks(rep, name, predicate=lambda group: True):
    return [c for c in rep.checks if c["name"] == name and predicate(c["group"])]


@pytest.mark.acceptance(1, "MRS numbers match the Freud closed forms (1e-9, < 1 s)")
def test_c01_mrs_oracle(record_property):
    t0 = time.perf_counter()
    t2, t4 = MrsTable(FREUD2), MrsTable(FREUD4)
    n = np.arange(1, 101)
    e2 = max(abs(t2.a(k) / math.sqrt(k) - 1) for k in n)
    e4 = max(abs(t4.a(k) / (2 * k / 3) ** 0.25 - 1) for k in n)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"x^2 rel {e2:.1e}, x^4 rel {e4:.1e}, {elapsed:.2f}s")
    assert e2 <= 1e-9 and e4 <= 1e-9
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "orthonormality to degree 40 (1e-8, < 30 s)")
def test_c02_orthonormality(record_property):
    t0 = time.perf_counter()
    worst = {}
    for w in (FREUD2, FREUD4, ERDOS):
        table = MrsTable(w)
        rec = stieltjes(w, table, 40)
        # measured on an independent, finer rule than the one used to build rec
        worst[w.label] = float(np.max(orthonormality_residuals(rec, build_rule(w, table, 60))))
    elapsed = time.perf_counter() - t0
    record_property("detail", ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                    + f", {elapsed:.1f}s")
    assert max(worst.values()) <= 1e-8
    assert elapsed < 30


@pytest.mark.acceptance(3, "Gauss rules exact to degree 2n-1 and lambda_n(x_k) = lambda_k")
def test_c03_gauss(ctx, record_property):
    moment_err = christ_err = 0.0
    for w in (FREUD2, ERDOS):
        rec = ctx.rec(w)
        ref = build_rule(w, ctx.table(w), 90)
        exact = [integrate(ref, lambda t, k=k: t ** k) for k in range(80)]
        scale = [integrate(ref, lambda t, k=k: np.abs(t) ** k) for k in range(80)]
        for n in range(1, 41):
            g = rec.gauss(n)
            for k in range(2 * n):
                got = np.sum(g.christoffel * g.zeros ** k)
                moment_err = max(moment_err, float(abs(got - exact[k]) / scale[k]))
            # independent reference: Golub-Welsch eigenvector formula mu_0 v_0k^2
            vals, vecs = eigh_tridiagonal(np.zeros(n), np.asarray(rec.b[1:n], float))
            ref_lam = float(rec.mu0) * vecs[0, ::-1] ** 2
            np.testing.assert_allclose(vals[::-1], np.asarray(g.zeros, float), atol=1e-12)
            lam = np.asarray(christoffel(rec, n, g.zeros), float)
            christ_err = max(christ_err, float(np.max(np.abs(lam / ref_lam - 1))),
                             float(np.max(np.abs(lam / np.asarray(g.christoffel, float) - 1))))
    record_property("detail", f"moments {moment_err:.1e}, Christoffel {christ_err:.1e}")
    assert moment_err <= 1e-8
    assert christ_err <= 1e-8


@pytest.mark.acceptance(4, "s_n and v_n reproduce polynomials; two v_n forms agree")
def test_c04_reproduction(ctx, record_property):
    rng = np.random.default_rng(4)
    s_err = v_err = form_err = 0.0
    for w in (FREUD2, ERDOS):
        rec = ctx.rec(w)
        for n in range(1, 17):
            for degree, op in ((n - 1, "s"), (n, "v")):
                P = BasisPoly(rec, rng.uniform(-1, 1, degree + 1).astype(DTYPE))
                fv = lambda x, P=P: P(x)  # noqa: E731 (plain callable: no shortcut)
                if op == "s":
                    got = partial_sum(rec, fv, n).padded(n)
                    s_err = max(s_err, float(np.max(np.abs(got - P.padded(n)))))
                else:
                    got = vallee_poussin(rec, fv, n).padded(2 * n)
                    v_err = max(v_err, float(np.max(np.abs(got - P.padded(2 * n)))))
        for n in (2, 3, 5):
            for name in BATTERY:
                f = get_function(name).derivative(0)
                a = vallee_poussin(rec, f, n).coeffs
                b = vallee_poussin_direct(rec, f, n).coeffs
                form_err = max(form_err, float(np.max(np.abs(a - b))))
    record_property("detail", f"s_n {s_err:.1e}, v_n {v_err:.1e}, forms {form_err:.1e}")
    assert s_err <= 1e-8 and v_err <= 1e-8
    assert form_err <= 1e-12


@pytest.mark.acceptance(5, "f - v_n(f) orthogonal to P_n (1e-8 ||fw||_2, n <= 12)")
def test_c05_orthogonality(ctx, record_property):
    worst = 0.0
    for w in (FREUD2, FREUD4, ERDOS):
        rec = ctx.rec(w)
        grid = ctx.grid(w, 12)
        for name in BATTERY:
            f = get_function(name).derivative(0)
            scale = weighted_norm(f, 2, grid)
            for n in range(1, 13):
                worst = max(worst, orthogonality_check(rec, f, n) / scale)
    record_property("detail", f"max relative residual {worst:.1e}")
    assert worst <= 1e-8


@pytest.mark.acceptance(6, "tail operator constants <= 20, integration by parts <= 1e-6")
def test_c06_tail_operator(ctx, record_property):
    rep = run_experiment("3.4", ExperimentConfig(), ctx)
    by = {}
    for row in rep.rows:
        by.setdefault(row["relation"], []).append(row)
    consts = [r["ratio"] for rel in ("derivative-bound", "orthogonal-tail-bound")
              for r in by[rel]]
    ibp = max(r["ratio"] for r in by["integration-by-parts"])
    record_property("detail", f"max constant {max(consts):.3g}, parts residual {ibp:.1e}, "
                    f"{rep.counts()['row_pass']}/{rep.counts()['asserted_rows']} rows")
    assert {r["n"] for r in by["orthogonal-tail-bound"]} == set(range(4, 17))
    assert len({r["f"] for r in by["derivative-bound"]}) >= 6
    assert all(math.isfinite(c) for c in consts) and max(consts) <= 20
    assert ibp <= 1e-6
    assert rep.passed, rep.failing_rows()[:3]


@pytest.mark.acceptance(7, "derivative bound: Erdos, p in {2, inf}, n 4..16, max/median <= 10")
def test_c07_derivative_bound(record_property):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(weights=(ERDOS,), p_list=(2, "inf"), n_list=tuple(range(4, 17)),
                           functions=("sin", "xgauss", "arctan"))
    rep = run_experiment("1.1", cfg, Context(cfg.N))
    elapsed = time.perf_counter() - t0
    spreads = _checks(rep, "max_over_median")
    finite = _checks(rep, "max_ratio_finite_in_band")
    worst = max(c["value"] for c in spreads)
    record_property("detail", f"{len(spreads)} series, worst max/median {worst:.3g}, "
                    f"max ratio {max(c['value'] for c in finite):.3g}, {elapsed:.0f}s")
    assert len(spreads) == 6
    assert all(math.isfinite(c["value"]) for c in finite)
    assert worst <= 10
    assert rep.passed, rep.failing_rows()[:3]
    assert elapsed < 600


@pytest.mark.acceptance(8, "perturbed bound is linear in eta; constant stable under doubling")
def test_c08_eta_scaling(ctx, record_property):
    cfg = ExperimentConfig(weights=(ERDOS,), p_list=(2, "inf"), n_list=(4, 8, 12, 16))
    rep = run_experiment("4.1", cfg, ctx)
    linear = _checks(rep, "bound_linear_in_eta")
    stable = _checks(rep, "constant_stable_under_eta_doubling")
    record_property("detail", f"slope error {max(c['value'] for c in linear):.1e}, "
                    f"worst C deviation {max(c['value'] for c in stable):.1%} "
                    f"over {len(stable)} cells")
    assert len(linear) == len(stable) == 2 * 4 * len(cfg.functions)
    assert all(c["passed"] for c in linear)
    assert all(c["value"] <= 0.2 for c in stable)
    assert set(rep.header["recorded_C"]) == {c["group"] for c in stable}


@pytest.mark.acceptance(9, "second derivative: sin, p = 2, n 6..16, max/median <= 10")
def test_c09_second_derivative(ctx, record_property):
    cfg = ExperimentConfig(weights=(ERDOS,), p_list=(2,), n_list=tuple(range(6, 17)),
                           functions=("sin",), orders=2)
    rep = run_experiment("4.2", cfg, ctx)
    target = _checks(rep, "max_over_median", lambda g: g.startswith("best|")
                     and g.endswith("|2"))
    record_property("detail", f"max/median {target[0]['value']:.3g}")
    assert len(target) == 1
    assert target[0]["value"] <= 10
    assert rep.passed, rep.failing_rows()[:3]


@pytest.mark.acceptance(10, "growth-condition ratio decreasing over n = 2^2..2^14 (< 5 s)")
def test_c10_growth_condition(record_property):
    t0 = time.perf_counter()
    ratios = [r for _, r in check_condition_14(MrsTable(ERDOS), [2 ** k for k in range(2, 15)])]
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{ratios[0]:.3g} -> {ratios[-1]:.3g}, {elapsed:.2f}s")
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert elapsed < 5


@pytest.mark.acceptance(11, "repeated verify runs are byte-identical")
def test_c11_determinism(tmp_path, record_property, capsys):
    argv = ["verify", "--theorem", "1.1", "--weight", "erdos", "--p", "2,inf", "--nmin", "4",
            "--nmax", "8", "--functions", "sin,arctan"]
    for run in ("a", "b"):
        assert cli.main(argv + ["--out", str(tmp_path / run)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files,
                                               shallow=False)
    record_property("detail", f"{len(match)} files compared")
    assert len(files) >= 3
    assert not mismatch and not errors
