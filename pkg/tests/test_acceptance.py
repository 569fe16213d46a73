"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section of the
terminal summary (see ``conftest.py``).
"""
import math
import os

import numpy as np
import pytest
import scipy.linalg as sla

from harmlab.cli import run
from harmlab.experiments import (
    abp_experiment,
    bifurcation_experiment,
    bound_sweep_experiment,
    comparison_experiment,
    estimate_experiment,
    linear_branch_sup,
    trace_branch,
    transform_check,
)
from harmlab.field import ScalarField, make_grid, sup_norm
from harmlab.fixpoint import SolverConfig, newton_solve, picard_solve
from harmlab.ops import make_spec
from harmlab.specio import load_spec
from harmlab.spectral import dirichlet_laplacian, principal_eigenpair
from harmlab.transform import Transform, asymptotics_report, c_beta, c_beta_quadrature, limits, smp_hypothesis_check

MS, KS = (0.5, 1.0, 2.0), (1, 3)


@pytest.fixture(scope="module")
def transform_report():
    return transform_check(MS, KS, n=17, levels=3, min_order=1.8)


@pytest.fixture(scope="module")
def fold_runs(specs_dir):
    spec = load_spec(os.path.join(specs_dir, "fold_model.json")).spec
    fine = load_spec(os.path.join(specs_dir, "fold_model.json"), refine=1).spec
    rep, br = bifurcation_experiment(spec, ds0=1e-2)
    lams = {
        ("n129", 1e-2): br.lambda_bar,
        ("n129", 5e-3): trace_branch(spec, ds0=5e-3)[1].lambda_bar,
        ("n257", 1e-2): trace_branch(fine, ds0=1e-2)[1].lambda_bar,
        ("n257", 5e-3): trace_branch(fine, ds0=5e-3)[1].lambda_bar,
    }
    return rep, lams


def test_criterion_01_identities(transform_report, criterion):
    ids = transform_report["identity"]
    orders = [min(r[key]["orders"]) for r in ids for key in ("laplacian", "sandwich")]
    fields = {r["field"] for r in ids}
    ok = transform_report["checks"]["laplacian_identity"] and transform_report["checks"]["sandwich"]
    ok = ok and len(fields) >= 5 and {(r["m"], r["k"]) for r in ids} == {(m, k) for m in MS for k in KS}
    assert criterion(1, "Laplacian identity and Pucci sandwich", ok, f"{len(fields)} fields, min order {min(orders):.3f}")


def test_criterion_02_c_beta(criterion):
    # [DERIVED] mpmath quadrature at 30 digits
    frozen = {(1.0, 1): 1.25331413731550025, (2.0, 1): 0.886226925452758014, (1.0, 3): 1.28184667602042379}
    diffs, scal = [], []
    for (m, k), ref in frozen.items():
        closed = c_beta(m, k)
        diffs += [abs(closed - c_beta_quadrature(m, k)), abs(closed - ref)]
    for k in KS:
        for m in (0.25, 0.5, 2.0, 7.0):
            scal.append(abs(c_beta(m, k) / (c_beta(1.0, k) * m ** (-1.0 / (k + 1))) - 1))
    ok = max(diffs) <= 1e-8 and max(scal) <= 1e-10
    assert criterion(2, "C_beta closed form and m-scaling", ok, f"max diff {max(diffs):.1e}, scaling {max(scal):.1e}")


def test_criterion_03_asymptotics(criterion):
    # each normalised quantity at v = 1e12 (s = 1e-8) must be within 5% of its limit
    worst = {"a": 0.0, "psi_inv": 0.0, "smp": 0.0}
    for m in MS:
        for k in KS:
            t = Transform(m, k)
            a = asymptotics_report(t, exps=range(2, 13))
            lim = limits(t)
            assert a.v[-1] == 1e12
            worst["a"] = max(worst["a"], abs(math.log(a.a_over_m_log[-1] / lim["a_over_m_log"])))
            worst["psi_inv"] = max(worst["psi_inv"], abs(math.log(a.psi_inv_over_log_root[-1] / lim["psi_inv_over_log_root"])))
            s = smp_hypothesis_check(t, exps=range(1, 9))
            assert s.s[-1] == 1e-8
            worst["smp"] = max(worst["smp"], abs(math.log(s.rate_ratio[-1])))
    ok = all(w <= math.log(1.05) for w in worst.values())
    detail = ", ".join(f"{n} ratio off by x{math.exp(w):.3f}" for n, w in worst.items())
    assert criterion(3, "growth and decay laws at the extreme samples", ok, detail)


def _linear_exact_errors():
    g = make_grid(1, [21], [0, 2])
    exact = ScalarField(g, 1 + g.coords()[0] - 0.75 * g.coords()[0] ** 2)
    errs = []
    for sign, h in ((1, 0.75), (-1, 3.0)):
        spec = make_spec(g, sign=sign, pucci=(0.5, 2.0), h=h, dirichlet=exact)
        for rep in (newton_solve(spec), picard_solve(spec)):
            errs.append(sup_norm(rep.solution - exact))
    return max(errs)


def test_criterion_04_manufactured(specs_dir, criterion):
    path = os.path.join(specs_dir, "manufactured.json")
    errs = []
    for r in range(3):
        loaded = load_spec(path, refine=r)
        errs.append(sup_norm(newton_solve(loaded.spec).solution - loaded.exact_field()))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    spec = load_spec(path).spec
    cfg = SolverConfig(tol=1e-10)
    a, b = picard_solve(spec, cfg), newton_solve(spec, None, cfg)
    gap = sup_norm(a.solution - b.solution)
    lin = _linear_exact_errors()
    ok = bool(np.all(orders >= 1.8)) and a.converged and b.converged and gap <= 2 * cfg.tol and lin <= 1e-10
    detail = f"orders {np.round(orders, 3).tolist()}, picard-newton {gap:.1e}, linear error {lin:.1e}"
    assert criterion(4, "manufactured solution and solver agreement", ok, detail)


def test_criterion_05_small_data_estimate(criterion):
    rep = estimate_experiment(n=33, n_specs=20, seed=0)
    detail = f"C_hat {rep['C_hat']:.4f}, refinement change {rep['refinement_rel_change']:.2%}"
    assert criterion(5, "a priori estimate in the small-data regime", rep["passed"], detail)


def test_criterion_06_abp(specs_dir, criterion):
    square = load_spec(os.path.join(specs_dir, "abp_square.json")).spec
    reps = [
        abp_experiment(make_grid(1, [65], [0, 1]), (1.0, 2.0), 1.0, n=20, seed=0),
        abp_experiment(square.grid, square.pucci, 1.0, n=20, seed=0),
    ]
    ok = all(r["passed"] and r["instances"] == 20 for r in reps)
    detail = "; ".join(
        f"{d}D C {r['uniform_C']:.3f}, scaling {r['linear_scaling_max_rel_diff']:.1e}, mp violations {r['zero_forcing_violations']}"
        for d, r in zip((1, 2), reps)
    )
    assert criterion(6, "ABP batch, maximum principle and scaling", ok, detail)


def test_criterion_07_comparison(specs_dir, criterion):
    spec = load_spec(os.path.join(specs_dir, "comparison.json")).spec
    rep = comparison_experiment(spec, [1e-5, 3e-5, 1e-4, 3e-4, 1e-3], n_pairs=20, seed=0)
    ok = rep["checks"]["ordered_below_threshold"] and rep["threshold_mu2"] is not None and rep["failure_reproducible"]
    assert criterion(7, "comparison below the empirical threshold", ok, f"first unordered mu2 = {rep['threshold_mu2']}")


def test_criterion_08_eigenpair(criterion):
    gammas = {}
    for n in (65, 129, 257):
        g = make_grid(1, [n], [0, 1])
        gammas[n] = principal_eigenpair(g, ScalarField.constant(g, 1.0)).gamma1
    rel = abs(gammas[257] - math.pi**2) / math.pi**2
    e = [abs(gammas[n] - math.pi**2) for n in (65, 129, 257)]
    orders = [math.log2(a / b) for a, b in zip(e, e[1:])]
    g = make_grid(1, [33], [0, 1])
    dense = sla.eigh(dirichlet_laplacian(g).toarray(), eigvals_only=True)[0]
    d1 = abs(principal_eigenpair(g, ScalarField.constant(g, 1.0)).gamma1 - dense)
    # [DERIVED] dense generalized eigenproblem with weight 1 + x on 33 nodes
    d2 = abs(principal_eigenpair(g, ScalarField.from_function(g, lambda x: 1 + x)).gamma1 - 6.543037365053421)
    ok = rel <= 5e-3 and all(abs(o - 2) <= 0.1 for o in orders) and max(d1, d2) <= 1e-6
    detail = f"rel err {rel:.2e} at 257, orders {[round(o, 3) for o in orders]}, dense diff {max(d1, d2):.1e}"
    assert criterion(8, "principal eigenpair", ok, detail)


def test_criterion_09_sweep(specs_dir, criterion):
    spec = load_spec(os.path.join(specs_dir, "sign_changing.json")).spec
    rep = bound_sweep_experiment(spec, 4.0, n_lam=9)
    detail = f"bound {rep['neg_part_bound']:.5f}, halving change {rep['halving_rel_change']:.2%}"
    assert criterion(9, "uniform bound on the negative part", rep["passed"], detail)


def test_criterion_10_fold(fold_runs, criterion):
    rep, lams = fold_runs
    ref = lams[("n129", 1e-2)]
    ok = ref is not None and all(v is not None for v in lams.values())
    spread = max(abs(v / ref - 1) for v in lams.values()) if ok else math.inf
    st = rep["structure"] or {"checks": {}, "samples": []}
    eps = min((min(s["eps_u0_u1"], s["eps_u1_u2"]) for s in st["samples"] if "eps_u0_u1" in s), default=0.0)
    ok = ok and spread <= 0.01 and rep["passed"] and len(st["samples"]) == 5 and eps > 1e-6
    detail = f"lambda_bar {ref:.5f}, spread {spread:.1e}, min eps {eps:.2e}, checks {sum(st['checks'].values())}/{len(st['checks'])}"
    assert criterion(10, "fold and two-solution structure", ok, detail)


def test_criterion_11_linear_branch(specs_dir, criterion):
    spec = load_spec(os.path.join(specs_dir, "linear_model.json")).spec
    rep, _ = bifurcation_experiment(spec, probe_lams=[1.0, 4.0, 8.0])
    errs = [abs(p["sup_norm"] / linear_branch_sup(p["lam"]) - 1) if p["sup_norm"] else math.inf for p in rep["probes"]]
    ok = rep["lambda_bar"] is None and max(errs) <= 0.01
    assert criterion(11, "linear branch against closed form", ok, f"max rel err {max(errs):.1e}, stop: {rep['stop_reason']}")


def test_criterion_12_reproducible(specs_dir, tmp_path, criterion):
    small_abp = tmp_path / "abp.json"
    small_abp.write_text('{"grid": {"dim": 1, "counts": [33], "extents": [[0, 1]]}, "pucci": [1, 2], "b": 1}')
    commands = [
        ["solve", "--spec", os.path.join(specs_dir, "manufactured.json"), "--refine", "0,1"],
        ["abp", "--spec", str(small_abp), "--instances", "5", "--seed", "7"],
        ["eigen", "--spec", os.path.join(specs_dir, "linear_model.json")],
        ["transform-check", "--m", "1", "--k", "1"],
    ]
    outs = [tmp_path / "first", tmp_path / "second"]
    for out in outs:
        for cmd in commands:
            run([*cmd, "--out", str(out)])
        run(["report", "--out", str(out)])
    names = sorted(os.listdir(outs[0]))
    same = names == sorted(os.listdir(outs[1])) and all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    assert criterion(12, "byte-identical reruns", same, f"{len(names)} files compared")
