"""Reproducible experiment drivers shared by the command line and the test suite.

Every driver is deterministic given its arguments (random data comes from
``numpy.random.default_rng(seed)``) and returns a plain dict of numbers,
strings, booleans and lists, ready for JSON output.
"""
from __future__ import annotations

import math

import numpy as np

from .continuation import (
    PROTOCOL_AMPLITUDES,
    PROTOCOL_VERSION,
    ArclengthConfig,
    arclength_continue,
    natural_sweep,
    solution_at,
    solve_p0,
    verify_branch_structure,
)
from .field import Grid, MatrixField, ScalarField, boundary_max, lp_norm, make_grid, sup_norm
from .fixpoint import SolverConfig, data_norm, estimate_constants, newton_solve, picard_solve, smallness_check
from .ops import ProblemSpec, PucciParams, make_spec
from .spectral import EigenPair, principal_eigenpair
from .transform import (
    Transform,
    asymptotics_report,
    c_beta,
    c_beta_quadrature,
    smp_hypothesis_check,
    verify_laplacian_identity,
    verify_sandwich,
)
from .verify import (
    ComparisonResult,
    abp_batch,
    abp_check,
    comparison_check,
    comparison_threshold,
    generate_supersolutions,
    lower_bound_sweep,
    upper_bound_sweep,
)

# ---------------------------------------------------------------------------
# transform identities and asymptotics

# smooth fields of unit size; defects are compared at nodes shared by all levels
IDENTITY_FIELDS = {
    "sin_sin": lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
    "saddle": lambda x, y: x * x + x * y - y * y,
    "exp_tilt": lambda x, y: 0.5 * np.exp(x - y),
    "signed_product": lambda x, y: (x - 0.3) * (y + 0.2),
    "cos_ridge": lambda x, y: 0.5 * np.cos(x + 2.0 * y),
}


def transform_check(ms=(0.5, 1.0, 2.0), ks=(1, 3), n: int = 17, levels: int = 3, P=(1.0, 2.0), min_order: float = 1.8) -> dict:
    """Change-of-variables identities, ``C_beta`` and asymptotic laws.

    Identities are measured on the fields of :data:`IDENTITY_FIELDS` over
    ``levels`` refinements of an ``n x n`` grid on the unit square.
    """
    grid = make_grid(2, [n, n], [(0.0, 1.0), (0.0, 1.0)])
    P = PucciParams(*P)
    out: dict = {"identity": [], "c_beta": [], "asymptotics": [], "smp": []}
    id_ok = sw_ok = True
    for m in ms:
        for k in ks:
            t = Transform(m, k)
            for name, fn in IDENTITY_FIELDS.items():
                r1 = verify_laplacian_identity(fn, t, grid, levels, min_order)
                r2 = verify_sandwich(fn, t, P, grid, levels, min_order)
                id_ok &= r1.passed
                sw_ok &= r2.passed
                out["identity"].append({"m": m, "k": k, "field": name, "laplacian": r1.as_dict(), "sandwich": r2.as_dict()})
    cb_ok = scale_ok = True
    for m, k in ((1.0, 1), (2.0, 1), (1.0, 3)):
        closed, quad = c_beta(m, k), c_beta_quadrature(m, k)
        law = c_beta(1.0, k) * m ** (-1.0 / (k + 1))
        rec = {"m": m, "k": k, "closed": closed, "quadrature": quad, "abs_diff": abs(closed - quad), "scaling_rel_diff": abs(closed / law - 1)}
        cb_ok &= rec["abs_diff"] <= 1e-8
        scale_ok &= rec["scaling_rel_diff"] <= 1e-10
        out["c_beta"].append(rec)
    as_ok = smp_ok = True
    for m in ms:
        for k in ks:
            t = Transform(m, k)
            a = asymptotics_report(t)
            s = smp_hypothesis_check(t)
            as_ok &= a.passed
            smp_ok &= s.passed
            out["asymptotics"].append({"m": m, "k": k, **a.as_dict()})
            out["smp"].append({"m": m, "k": k, **s.as_dict()})
    out["checks"] = {
        "laplacian_identity": bool(id_ok),
        "sandwich": bool(sw_ok),
        "c_beta_closed_vs_quadrature": bool(cb_ok),
        "c_beta_scaling": bool(scale_ok),
        "asymptotics": bool(as_ok),
        "smp_hypothesis": bool(smp_ok),
    }
    out["passed"] = all(out["checks"].values())
    return out


# ---------------------------------------------------------------------------
# random data


def _unit_coords(grid: Grid):
    X = grid.coords()
    return [(x - e[0]) / (e[1] - e[0]) for x, e in zip(X, grid.extents)]


def random_smooth(grid: Grid, rng: np.random.Generator, terms: int = 3, modes: int = 4, offset: float = 0.0) -> np.ndarray:
    """Random combination of sine modes on the unit-scaled box plus ``offset``."""
    xi = _unit_coords(grid)
    f = np.full(grid.size, offset)
    for _ in range(terms):
        a = rng.normal()
        term = np.ones(grid.size)
        for s in xi:
            term = term * np.sin(rng.integers(1, modes + 1) * np.pi * s)
        f += a * term
    return f


def random_affine(grid: Grid, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    xi = _unit_coords(grid)
    v = np.full(grid.size, scale * rng.normal())
    for s in xi:
        v = v + scale * rng.normal() * s
    return v


# ---------------------------------------------------------------------------
# ABP


def abp_experiment(grid: Grid, P=(1.0, 2.0), b: float = 1.0, n: int = 20, seed: int = 0, p: float | None = None, config: SolverConfig | None = None) -> dict:
    """Uniform ABP constant over ``n`` random subsolutions, plus two structural checks.

    Each instance solves ``M+(D^2u) + b|Du| = -f`` with random ``f`` and
    affine boundary data, so ``u`` is a subsolution with forcing ``f``.
    ``f = 0`` instances must obey the discrete maximum principle, and in linear
    instances (Laplacian, ``b = 0``, zero boundary data) the admissible
    constant must not change under ``f -> 2f``.
    """
    cfg = config or SolverConfig()
    p = float(grid.dim + 1) if p is None else p
    rng = np.random.default_rng(seed)
    P = PucciParams(*P) if not isinstance(P, PucciParams) else P
    items, failed = [], 0
    zero_viol, zero_excess = [], []
    scale_diffs = []
    for i in range(n):
        f = ScalarField(grid, random_smooth(grid, rng, offset=rng.uniform(0.5, 2.0)))
        d = ScalarField(grid, random_affine(grid, rng, 0.1))
        spec = make_spec(grid, sign=1, pucci=P, b=b, h=f, dirichlet=d, p=p)
        rep = newton_solve(spec, None, cfg)
        if not rep.converged:
            failed += 1
            continue
        u = rep.solution
        items.append((u, lp_norm(ScalarField(grid, np.maximum(f.values, 0.0)), p), boundary_max(u)))
        # f = 0 with the same boundary data
        r0 = newton_solve(spec.with_(h=0.0), None, cfg)
        if r0.converged:
            a0 = abp_check(r0.solution, 0.0, boundary_max(r0.solution))
            zero_viol.append(a0.violation)
            zero_excess.append(a0.excess)
        else:
            failed += 1
        # linear scaling
        lin = make_spec(grid, sign=1, pucci=PucciParams(1.0, 1.0), b=0.0, h=f, dirichlet=0.0, p=p)
        fp = lp_norm(ScalarField(grid, np.maximum(f.values, 0.0)), p)
        u1 = newton_solve(lin, None, cfg).solution
        u2 = newton_solve(lin.with_(h=2.0 * f.values), None, cfg).solution
        C1 = abp_check(u1, fp, 0.0).admissible_C
        C2 = abp_check(u2, 2 * fp, 0.0).admissible_C
        scale_diffs.append(abs(C2 - C1) / max(C1, 1e-300) if C1 > 0 else abs(C2))
    batch = abp_batch(items)
    out = {
        "instances": n,
        "solver_failures": failed,
        "p": p,
        "uniform_C": batch["uniform_C"],
        "per_instance_C": batch["per_instance"],
        "zero_forcing_max_excess": max(zero_excess, default=0.0),
        "zero_forcing_violations": int(sum(zero_viol)),
        "linear_scaling_max_rel_diff": max(scale_diffs, default=0.0),
    }
    out["checks"] = {
        "batch_admissible": bool(batch["passed"] and math.isfinite(batch["uniform_C"])),
        "max_principle": out["zero_forcing_violations"] == 0,
        "linear_scaling_invariant": out["linear_scaling_max_rel_diff"] <= 1e-10,
        "all_solved": failed == 0,
    }
    out["passed"] = all(out["checks"].values())
    return out


# ---------------------------------------------------------------------------
# comparison


def comparison_pairs(spec: ProblemSpec, n: int, seed: int, pair: EigenPair, config: SolverConfig | None = None) -> list:
    """``n`` (subsolution, supersolution) pairs of ``spec``.

    The subsolution solves the problem with ``h - t`` and boundary data
    lowered by ``d``; among the solutions reached from the fixed multi-start
    set (zero and multiples of ``phi1``) the one with the largest maximum is
    kept.  The supersolution solves the problem with ``h + t'`` and boundary
    data raised by ``d'``, started from zero.  ``t, t', d, d'`` are drawn
    from the seeded generator.  Pairs whose solves fail are returned as
    ``None``.
    """
    cfg = config or SolverConfig(max_iter=60)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        ts, tu = rng.uniform(0.0, 0.2, 2)
        ds, du = rng.uniform(0.0, 0.05, 2)
        sub = spec.with_(h=spec.h - ts, dirichlet=spec.dirichlet - ds)
        best = None
        starts = [None] + [ScalarField(spec.grid, a * pair.phi1.values) for a in PROTOCOL_AMPLITUDES]
        for st in starts:
            r = newton_solve(sub, st, cfg)
            if r.converged and (best is None or np.max(r.solution.values) > np.max(best.values) + 1e-9):
                best = r.solution
        sup = newton_solve(spec.with_(h=spec.h + tu, dirichlet=spec.dirichlet + du), None, cfg)
        out.append(None if best is None or not sup.converged else (best, sup.solution))
    return out


def comparison_experiment(spec: ProblemSpec, mu2_values, n_pairs: int = 20, seed: int = 0, config: SolverConfig | None = None) -> dict:
    """Order check of generated pairs while ``M = mu2 I`` grows.

    The first ``mu2`` with an unordered pair is the empirical threshold; that
    level is regenerated from the same seed to confirm the failure is
    reproducible.
    """
    mu2_values = sorted(float(m) for m in mu2_values)
    pair = principal_eigenpair(spec.grid, ScalarField.constant(spec.grid, 1.0))
    levels, results = [], []
    for mu2 in mu2_values:
        sp_ = spec.with_(M=MatrixField.identity(spec.grid, mu2))
        pairs = comparison_pairs(sp_, n_pairs, seed, pair, config)
        checks = [comparison_check(sp_, a, u, mu2) for a, u in (p for p in pairs if p is not None)]
        ordered = sum(c.ordered for c in checks)
        min_gap = min((c.min_gap for c in checks), default=math.nan)
        if checks:
            results.append(ComparisonResult(ordered == len(checks), min_gap, mu2))
        levels.append({"mu2": mu2, "pairs": len(checks), "unsolved": sum(p is None for p in pairs), "ordered": ordered, "min_gap": min_gap})
    threshold = comparison_threshold(results)
    reproducible = None
    if threshold is not None:
        sp_ = spec.with_(M=MatrixField.identity(spec.grid, threshold))
        again = comparison_pairs(sp_, n_pairs, seed, pair, config)
        gaps = [float(np.min(u.values - a.values)) for a, u in (p for p in again if p is not None)]
        lvl = next(l for l in levels if l["mu2"] == threshold)
        reproducible = bool(gaps) and min(gaps) == lvl["min_gap"]
    below = [l for l in levels if threshold is None or l["mu2"] < threshold]
    out = {
        "protocol": PROTOCOL_VERSION,
        "seed": seed,
        "levels": levels,
        "threshold_mu2": threshold,
        "delta0_estimate": threshold,
        "failure_reproducible": reproducible,
    }
    out["checks"] = {
        "ordered_below_threshold": bool(below) and all(l["ordered"] == l["pairs"] == n_pairs for l in below),
        "failure_reproducible": threshold is None or bool(reproducible),
    }
    out["passed"] = all(out["checks"].values())
    return out


# ---------------------------------------------------------------------------
# uniform bounds


def bound_sweep_experiment(spec: ProblemSpec, Lambda2: float, n_lam: int = 9, shifts=(0.0, 0.5, 1.0), config: SolverConfig | None = None, stability: float = 0.1) -> dict:
    """Bound on ``||u^-||`` over supersolution probes for ``lam`` in ``[0, Lambda2]``.

    The sweep is repeated on the halved ``lam`` grid and the bound must agree
    within ``stability`` (relative).  The sup-norm bound over the solution
    probes (shift 0) on ``[lam_1, Lambda2]`` is reported as well.
    """
    out = {"Lambda2": float(Lambda2), "shifts": [float(s) for s in shifts], "grids": []}
    bounds = []
    for n in (n_lam, 2 * n_lam - 1):
        lams = np.linspace(0.0, Lambda2, n)
        probes = generate_supersolutions(spec, lams, shifts, config)
        low = lower_bound_sweep(spec, Lambda2, probes)
        sols = [p for p in probes if p.label == f"h+{0.0:g}" and p.lam > 0]
        up = upper_bound_sweep(spec, float(lams[1]), Lambda2, sols) if sols else None
        bounds.append(low.bound)
        out["grids"].append({"n_lambda": n, "probes": len(probes), "lower": low.as_dict(), "upper": up.as_dict() if up else None})
    b1, b2 = bounds
    rel = abs(b2 - b1) / b1 if b1 > 0 else (0.0 if b2 == 0 else math.inf)
    out["neg_part_bound"] = b2
    out["halving_rel_change"] = rel
    out["checks"] = {
        "no_violations": all(not g["lower"]["violations"] for g in out["grids"]),
        "stable_under_halving": rel <= stability,
    }
    out["passed"] = all(out["checks"].values())
    return out


# ---------------------------------------------------------------------------
# smallness-regime estimate


def _small_data_family(n_specs: int, seed: int) -> list:
    """Random coefficient recipes on the unit interval; evaluated per grid."""
    rng = np.random.default_rng(seed)
    recipes = []
    for _ in range(n_specs):
        recipes.append(
            {
                "Lam": float(rng.uniform(1.0, 3.0)),
                "b": float(rng.uniform(0.0, 1.0)),
                "h": [(float(rng.normal()), int(rng.integers(1, 5))) for _ in range(3)],
                "d": (float(0.5 * rng.normal()), float(0.5 * rng.normal())),
            }
        )
    return recipes


def _recipe_spec(grid: Grid, r: dict, c_scale: float = 1.0, mu: float = 1.0) -> ProblemSpec:
    x = grid.coords()[0]
    h = sum(a * np.sin(j * np.pi * x) for a, j in r["h"])
    d = r["d"][0] + r["d"][1] * x
    return make_spec(grid, pucci=(1.0, r["Lam"]), b=r["b"], h=ScalarField(grid, h), dirichlet=ScalarField(grid, d), c=c_scale, mu=mu, k=1, lam=1.0)


def estimate_experiment(n: int = 33, n_specs: int = 20, seed: int = 0, margin: float = 0.5, stability: float = 0.25, config: SolverConfig | None = None) -> dict:
    """Constant ``C_hat`` with ``||u||_inf <= C_hat (||h||_p + ||psi||_{W^{2,p}})`` over small-data specs.

    Each random spec has ``c`` and ``mu`` scaled to ``margin`` times the
    admissible bounds on the coarse grid, so it passes the smallness check
    there; it is re-checked on the refined grid.  ``C_hat`` is the maximum
    ratio, computed on the coarse grid and on one refinement.
    """
    cfg = config or SolverConfig()
    coarse = make_grid(1, [n], [(0.0, 1.0)])
    grids = [coarse, coarse.refine()]
    recipes = _small_data_family(n_specs, seed)
    scales = []
    per_level = []
    for lvl, g in enumerate(grids):
        ratios, passed, failed = [], 0, 0
        for i, r in enumerate(recipes):
            consts = estimate_constants(g, PucciParams(1.0, r["Lam"]), r["b"])
            if lvl == 0:
                rep = smallness_check(_recipe_spec(g, r), consts)
                scales.append((margin * rep.c_bound / max(rep.c_norm, 1e-300), margin * rep.eps1 / max(rep.mu_lhs, 1e-300)))
            cs, ms = scales[i]
            spec = _recipe_spec(g, r, cs, ms)
            ok = smallness_check(spec, consts).passed
            passed += ok
            sol = newton_solve(spec, None, cfg)
            if not sol.converged:
                sol = picard_solve(spec, cfg)
            if not (ok and sol.converged):
                failed += 1
                continue
            ratios.append(sol.sup_norm / data_norm(spec))
        per_level.append({"n": g.counts[0], "C_hat": max(ratios, default=math.nan), "ratios": ratios, "passed_smallness": passed, "excluded": failed})
    c0, c1 = per_level[0]["C_hat"], per_level[1]["C_hat"]
    rel = abs(c1 - c0) / c0
    out = {"specs": n_specs, "seed": seed, "levels": per_level, "C_hat": max(c0, c1), "refinement_rel_change": rel}
    out["checks"] = {
        "all_pass_smallness": all(l["passed_smallness"] == n_specs for l in per_level),
        "all_solved": all(l["excluded"] == 0 for l in per_level),
        "stable_under_refinement": rel <= stability,
    }
    out["passed"] = all(out["checks"].values())
    return out


# ---------------------------------------------------------------------------
# bifurcation


def trace_branch(spec: ProblemSpec, ds0: float = 1e-2, lam_max: float = math.inf, sup_guard: float = 1e5, config: SolverConfig | None = None, seed_lams=(0.0, 0.05, 0.1)) -> tuple:
    """``(u0, branch)``: solution at ``lam = 0`` and the pseudo-arclength branch from it."""
    cfg = config or SolverConfig()
    u0 = solve_p0(spec, cfg)
    seed = natural_sweep(spec, list(seed_lams), cfg, u0=u0)
    ac = ArclengthConfig(ds0=ds0, lam_min=1e-3, lam_max=lam_max, sup_guard=sup_guard)
    return u0, arclength_continue(seed, spec, cfg, ac)


def linear_branch_sup(lam: float) -> float:
    """Sup-norm of the solution of ``-u'' = lam u + 1`` on ``(0, 1)`` with zero boundary values."""
    if lam == 0:
        return 0.125
    r = math.sqrt(lam)
    return (1.0 / math.cos(r / 2) - 1.0) / lam


def bifurcation_experiment(
    spec: ProblemSpec, ds0: float = 1e-2, lam_max: float = math.inf, sup_guard: float = 1e5, config: SolverConfig | None = None, probe_lams=()
) -> tuple:
    """Trace the branch, check the two-solution picture if a fold is found.

    Returns ``(report, branch)``.  ``probe_lams`` are solved on the lower part
    and their sup-norms reported.
    """
    cfg = config or SolverConfig()
    u0, br = trace_branch(spec, ds0, lam_max, sup_guard, cfg)
    pair = principal_eigenpair(spec.grid, spec.c)
    rep = {
        "protocol": PROTOCOL_VERSION,
        "lambda_bar": br.lambda_bar,
        "fold_index": br.fold_index,
        "fold_confirmed_by_det": br.fold_confirmed,
        "stop_reason": br.stop_reason,
        "points": len(br.points),
        "gamma1": pair.gamma1,
        "upper_identification": "u_lam2 is the Newton solution at lam started from the arclength branch after the fold",
    }
    probes = []
    for lam in probe_lams:
        u = solution_at(br.lower(), spec, float(lam), cfg)
        probes.append({"lam": float(lam), "sup_norm": sup_norm(u) if u is not None else None})
    rep["probes"] = probes
    if br.lambda_bar is not None:
        rep["structure"] = verify_branch_structure(br, spec, pair, u0, config=cfg)
        rep["passed"] = rep["structure"]["passed"]
    else:
        rep["structure"] = None
        rep["passed"] = True
    return rep, br
