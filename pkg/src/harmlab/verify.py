"""Residual-sign classification and numerical checks of the qualitative estimates.

Sign convention follows :mod:`harmlab.ops`: a subsolution has interior
residual <= 0 and boundary values <= the Dirichlet data, a supersolution the
reverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .field import ScalarField, sup_norm
from .fixpoint import SolverConfig, newton_solve, picard_solve
from .ops import DiscreteProblem, ProblemSpec

DEFAULT_TOL = 10 * SolverConfig().tol


@dataclass(frozen=True)
class Classification:
    verdict: str  # "solution", "subsolution", "supersolution" or "neither"
    residual_min: float
    residual_max: float
    boundary_gap_min: float  # min of u - dirichlet on the boundary
    boundary_gap_max: float
    tol: float

    @property
    def is_sub(self) -> bool:
        return self.verdict in ("subsolution", "solution")

    @property
    def is_super(self) -> bool:
        return self.verdict in ("supersolution", "solution")

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "residual_min": self.residual_min,
            "residual_max": self.residual_max,
            "boundary_gap_min": self.boundary_gap_min,
            "boundary_gap_max": self.boundary_gap_max,
            "tol": self.tol,
        }


def classify(spec: ProblemSpec, u: ScalarField, tol: float | None = None) -> Classification:
    """Sub/supersolution verdict from the interior residual and the boundary inequality."""
    tol = DEFAULT_TOL if tol is None else tol
    dp = DiscreteProblem(spec)
    with np.errstate(all="ignore"):
        r = dp.residual(u.values)
    gap = u.values[dp.B] - dp.ub
    rmin, rmax = float(np.min(r)), float(np.max(r))
    gmin, gmax = float(np.min(gap)), float(np.max(gap))
    sub = rmax <= tol and gmax <= tol
    sup = rmin >= -tol and gmin >= -tol
    verdict = "solution" if sub and sup else "subsolution" if sub else "supersolution" if sup else "neither"
    return Classification(verdict, rmin, rmax, gmin, gmax, tol)


# ---------------------------------------------------------------------------
# ABP


@dataclass(frozen=True)
class ABPResult:
    admissible_C: float
    passed: bool
    violation: bool
    excess: float

    def as_dict(self) -> dict:
        return {
            "admissible_C": self.admissible_C,
            "passed": self.passed,
            "violation": self.violation,
            "excess": self.excess,
        }


def abp_check(u: ScalarField, f_plus_norm: float, boundary_max_u: float, budget: float = math.inf, tol: float = 1e-12) -> ABPResult:
    """Smallest ``C`` with ``max u <= boundary_max_u + C ||f+||_p``.

    With ``||f+|| = 0`` an interior maximum above the boundary maximum is a
    hard violation of the discrete maximum principle.
    """
    excess = max(0.0, float(np.max(u.values)) - boundary_max_u)
    if f_plus_norm <= 0:
        bad = excess > tol * (1 + abs(boundary_max_u))
        C = math.inf if bad else 0.0
        return ABPResult(C, not bad, bad, excess)
    C = excess / f_plus_norm
    return ABPResult(C, C <= budget, False, excess)


def abp_batch(items: Iterable, budget: float = math.inf) -> dict:
    """One admissible constant for a family of ``(u, f_plus_norm, boundary_max)`` triples."""
    results = [abp_check(u, fn, bm) for u, fn, bm in items]
    C = max((r.admissible_C for r in results), default=0.0)
    return {
        "uniform_C": C,
        "passed": C <= budget and not any(r.violation for r in results),
        "per_instance": [r.admissible_C for r in results],
        "violations": [i for i, r in enumerate(results) if r.violation],
    }


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparisonResult:
    ordered: bool
    min_gap: float
    mu2: float | None
    delta0_estimate: float | None = None

    def as_dict(self) -> dict:
        return {"ordered": self.ordered, "min_gap": self.min_gap, "mu2": self.mu2, "delta0_estimate": self.delta0_estimate}


def comparison_check(
    spec: ProblemSpec, alpha: ScalarField, u: ScalarField, mu2: float | None = None, tol: float | None = None, check_inputs: bool = True
) -> ComparisonResult:
    """Nodewise order ``alpha <= u`` for a subsolution ``alpha`` and supersolution ``u``.

    Raises ``ValueError`` when ``check_inputs`` is set and the inputs are not
    classified as a subsolution and a supersolution of ``spec``.
    """
    tol = DEFAULT_TOL if tol is None else tol
    if check_inputs:
        ca, cu = classify(spec, alpha, tol), classify(spec, u, tol)
        if not ca.is_sub:
            raise ValueError(f"alpha is not a subsolution ({ca.verdict})")
        if not cu.is_super:
            raise ValueError(f"u is not a supersolution ({cu.verdict})")
    gap = u.values - alpha.values
    mg = float(np.min(gap))
    return ComparisonResult(mg >= -max(tol, 1e-9 * (1 + sup_norm(u))), mg, mu2)


def comparison_threshold(results: list) -> float | None:
    """First ``mu2`` of an ascending sweep at which the ordering fails (``None`` if never)."""
    for r in results:
        if not r.ordered:
            return r.mu2
    return None


# ---------------------------------------------------------------------------
# uniform bound sweeps


@dataclass(frozen=True)
class Probe:
    lam: float
    field: ScalarField
    label: str


@dataclass(frozen=True)
class SweepReport:
    lambdas: tuple
    per_lambda: tuple
    bound: float
    violations: tuple
    labels: tuple = ()
    quantity: str = "neg_part"

    @property
    def holds(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "lambdas": list(self.lambdas),
            "per_lambda": list(self.per_lambda),
            "bound": self.bound,
            "violations": list(self.violations),
            "labels": list(self.labels),
            "holds": self.holds,
        }


def generate_supersolutions(spec: ProblemSpec, lambdas, shifts=(0.0, 0.5, 1.0), config: SolverConfig | None = None) -> list:
    """Supersolutions of ``spec`` at each ``lam``: solutions of the problem with ``h + s``, ``s >= 0``.

    A solution of the shifted problem has residual ``s >= 0`` for the original
    one and the same boundary values, so it is a supersolution.  Solves are
    continued in ``lam`` from the previous solution.  Each probe is labelled
    with the shift that produced it.
    """
    cfg = config or SolverConfig()
    probes = []
    for s in shifts:
        if s < 0:
            raise ValueError("shifts must be nonnegative")
        prev = None
        for lam in lambdas:
            sp_ = spec.with_(lam=float(lam), h=spec.h + s)
            rep = newton_solve(sp_, prev, cfg)
            if not rep.converged:
                rep = picard_solve(sp_, cfg, initial=prev)
            if rep.converged:
                prev = rep.solution
                probes.append(Probe(float(lam), rep.solution, f"h+{s:g}"))
    return probes


def lower_bound_sweep(spec: ProblemSpec, Lambda2: float, probes: Iterable[Probe], tol: float | None = None) -> SweepReport:
    """Uniform bound on ``||u^-||_inf`` over supersolution probes with ``lam`` in ``[0, Lambda2]``.

    Probes that are not classified as supersolutions of ``spec`` at their
    ``lam``, or whose ``lam`` lies outside the interval, are listed as
    violations and excluded from the bound.
    """
    per, viol, labels = {}, [], []
    for i, pr in enumerate(probes):
        if not 0 <= pr.lam <= Lambda2:
            viol.append(f"probe {i} ({pr.label}): lam={pr.lam} outside [0, {Lambda2}]")
            continue
        c = classify(spec.with_(lam=pr.lam), pr.field, tol)
        if not c.is_super:
            viol.append(f"probe {i} ({pr.label}): classified {c.verdict} at lam={pr.lam}")
            continue
        neg = float(np.max(np.maximum(-pr.field.values, 0.0)))
        per[pr.lam] = max(per.get(pr.lam, 0.0), neg)
        labels.append(pr.label)
    lams = tuple(sorted(per))
    vals = tuple(per[l] for l in lams)
    return SweepReport(lams, vals, max(vals, default=0.0), tuple(viol), tuple(labels), "neg_part")


def upper_bound_sweep(
    spec: ProblemSpec, Lambda1: float, Lambda2: float, probes: Iterable[Probe], mu2: float | None = None, tol: float | None = None
) -> SweepReport:
    """Uniform bound on ``||u||_inf`` over solution probes with ``lam`` in ``[Lambda1, Lambda2]``."""
    if not Lambda1 > 0:
        raise ValueError("Lambda1 must be positive")
    per, viol, labels = {}, [], []
    for i, pr in enumerate(probes):
        if not Lambda1 <= pr.lam <= Lambda2:
            viol.append(f"probe {i} ({pr.label}): lam={pr.lam} outside [{Lambda1}, {Lambda2}]")
            continue
        c = classify(spec.with_(lam=pr.lam), pr.field, tol)
        if c.verdict != "solution":
            viol.append(f"probe {i} ({pr.label}): probe not a solution ({c.verdict})")
            continue
        per[pr.lam] = max(per.get(pr.lam, 0.0), sup_norm(pr.field))
        labels.append(pr.label)
    lams = tuple(sorted(per))
    vals = tuple(per[l] for l in lams)
    return SweepReport(lams, vals, max(vals, default=0.0), tuple(viol), tuple(labels), "sup_norm")


# ---------------------------------------------------------------------------
# strong maximum principle


@dataclass(frozen=True)
class SMPSpotReport:
    min_interior: float
    identically_zero: bool
    strictly_positive: bool
    interior_zero: bool
    consistent: bool

    def as_dict(self) -> dict:
        return {
            "min_interior": self.min_interior,
            "identically_zero": self.identically_zero,
            "strictly_positive": self.strictly_positive,
            "interior_zero": self.interior_zero,
            "consistent": self.consistent,
        }


def smp_spot_check(u: ScalarField, tol: float = 1e-12) -> SMPSpotReport:
    """Dichotomy for a nonnegative supersolution: positive inside or identically zero."""
    vals = u.values
    if np.min(vals) < -tol:
        raise ValueError("smp_spot_check expects a nonnegative field")
    scale = max(1.0, float(np.max(np.abs(vals))))
    mi = float(np.min(u.interior_values()))
    zero = float(np.max(np.abs(vals))) <= tol
    pos = mi > tol * scale
    interior_zero = not zero and not pos
    return SMPSpotReport(mi, zero, pos, interior_zero, zero or pos)
