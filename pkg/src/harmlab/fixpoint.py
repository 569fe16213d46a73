"""Solvers for the model equation and the smallness calculator.

The frozen problem ``M^s(D^2u) + s b|Du| = rhs`` is solved by Howard policy
iteration.  The full problem is solved either by damped Picard iteration on
the map ``T`` that freezes the gradient nonlinearity and zero-order term, or
by semismooth Newton with Armijo backtracking.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import (
    Grid,
    ScalarField,
    hessian_fd,
    lp_norm,
    sup_norm,
    w1r_norm,
    w2p_norm,
)
from .ops import DiscreteProblem, ProblemSpec, PucciParams, make_spec


class SolverError(RuntimeError):
    """Base class for solver failures."""


class SingularSystemError(SolverError):
    """A policy or Newton system is singular or produced non-finite values."""


class PolicyIterationError(SolverError):
    """Policy iteration exceeded its sweep budget."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration budgets.

    ``tol`` bounds the sup-norm of the interior residual.  ``theta`` is the
    Picard damping; it is halved whenever a step would increase the residual.
    """

    tol: float = 1e-9
    max_iter: int = 200
    theta: float = 0.5
    inner_tol: float = 1e-11
    max_sweeps: int = 50
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    min_step: float = 1e-8
    divergence_factor: float = 10.0

    def __post_init__(self):
        if not (self.tol > 0 and self.inner_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.max_iter < 1 or self.max_sweeps < 1:
            raise ValueError("iteration budgets must be positive")


@dataclass(frozen=True)
class SolveReport:
    solution: ScalarField
    iterations: int
    residual_history: tuple
    converged: bool
    final_residual: float
    method: str
    reason: str = ""
    nagumo: dict = field(default_factory=dict)

    @property
    def sup_norm(self) -> float:
        return sup_norm(self.solution)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "residual_history": list(self.residual_history),
            "reason": self.reason,
            "sup_norm": self.sup_norm,
            "nagumo": dict(self.nagumo),
        }


def _spsolve(A: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A.tocsc(), rhs)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("linear solve produced non-finite values")
    return x


def _howard(dp: DiscreteProblem, rhs: np.ndarray, u0: np.ndarray, cfg: SolverConfig):
    """Policy iteration for ``L(u) = rhs`` on interior nodes; returns ``(u, sweeps)``."""
    u = u0.copy()
    scale = 1.0 + np.max(np.abs(rhs), initial=0.0)
    prev = None
    for sweep in range(1, cfg.max_sweeps + 1):
        _, A = dp.frozen_operator(u)
        AI, AB = dp.split(A)
        u_int = _spsolve(AI, rhs - AB @ dp.ub)
        u = dp.full(u_int)
        val, _ = dp.frozen_operator(u, want_matrix=False)
        err = np.max(np.abs(val - rhs), initial=0.0)
        same = prev is not None and (abs(A - prev) > 0).nnz == 0
        if err <= cfg.inner_tol * scale or same:
            return u, sweep
        prev = A
    raise PolicyIterationError(f"policy iteration did not settle in {cfg.max_sweeps} sweeps")


def solve_frozen(spec: ProblemSpec, rhs, dirichlet: ScalarField | None = None, config: SolverConfig | None = None) -> ScalarField:
    """Solve ``M^s(D^2u) + s b|Du| = rhs`` with Dirichlet data.

    Parameters
    ----------
    spec : ProblemSpec
        Supplies the grid, sign, Pucci constants and ``b``; all other
        coefficients are ignored.
    rhs : ScalarField, array or float
        Right-hand side; only interior values are used.
    dirichlet : ScalarField, optional
        Overrides ``spec.dirichlet``.
    """
    cfg = config or SolverConfig()
    if dirichlet is not None:
        spec = spec.with_(dirichlet=dirichlet)
    dp = DiscreteProblem(spec)
    r = _rhs_interior(spec.grid, rhs)
    u, _ = _howard(dp, r, spec.dirichlet.values.astype(float), cfg)
    return ScalarField(spec.grid, u)


def _rhs_interior(grid: Grid, rhs) -> np.ndarray:
    if isinstance(rhs, ScalarField):
        return rhs.values[grid.interior]
    arr = np.asarray(rhs, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.interior.size, float(arr))
    if arr.size == grid.size:
        return arr[grid.interior]
    if arr.size == grid.interior.size:
        return arr
    raise ValueError("rhs has the wrong number of values")


def nagumo_diagnostic(spec: ProblemSpec, u: ScalarField) -> dict:
    """Second-derivative surrogate of a solution next to its sup-norm and data size."""
    g = spec.grid
    H = hessian_fd(g, u.values)
    frob = np.zeros(g.size)
    frob[g.interior] = np.sqrt(np.sum(H * H, axis=(1, 2)))
    d2 = lp_norm(ScalarField(g, frob), spec.p)
    sup = sup_norm(u)
    hn = lp_norm(spec.h, spec.p)
    return {
        "sup_norm": sup,
        "second_difference_lp": d2,
        "h_lp": hn,
        "ratio": d2 / (1.0 + sup + hn),
    }


def _finish(spec, u, it, hist, ok, method, reason=""):
    sol = ScalarField(spec.grid, u)
    diag = nagumo_diagnostic(spec, sol) if ok else {}
    return SolveReport(sol, it, tuple(hist), ok, hist[-1] if hist else math.nan, method, reason, diag)


def _initial(spec: ProblemSpec, initial) -> np.ndarray:
    u = spec.dirichlet.values.astype(float).copy()
    if initial is not None:
        vals = initial.values if isinstance(initial, ScalarField) else np.asarray(initial, float)
        u[spec.grid.interior] = vals[spec.grid.interior]
    return u


def picard_solve(spec: ProblemSpec, config: SolverConfig | None = None, initial=None, radius: float | None = None) -> SolveReport:
    """Damped fixed-point iteration ``u <- (1 - theta) u + theta T(u)``.

    ``T(v)`` solves ``M^s(D^2u) + s b|Du| = -h - s mu beta(v) Q(v) - lam c v``.
    A full step is taken whenever it lowers the residual; otherwise the
    configured damping is used and halved until the residual decreases.
    The iteration stops as diverged when the iterate becomes non-finite or its
    sup-norm exceeds ``divergence_factor * radius`` (``radius`` defaults to a
    large guard).
    """
    cfg = config or SolverConfig()
    dp = DiscreteProblem(spec)
    u = _initial(spec, initial)
    guard = cfg.divergence_factor * radius if radius else 1e12
    hist = [float(np.max(np.abs(dp.residual(u)), initial=0.0))]
    if hist[-1] <= cfg.tol:
        return _finish(spec, u, 0, hist, True, "picard")
    theta = cfg.theta
    for it in range(1, cfg.max_iter + 1):
        T, _, _, _, _ = dp.gradient_term(u)
        rhs = -dp.h - spec.sign * T - spec.lam * dp.c * u[dp.I]
        try:
            tu, _ = _howard(dp, rhs, u, cfg)
        except SolverError as exc:
            return _finish(spec, u, it, hist, False, "picard", f"inner solve failed: {exc}")
        def mix(th):
            c = (1 - th) * u + th * tu
            with np.errstate(all="ignore"):
                return c, float(np.max(np.abs(dp.residual(c)), initial=0.0))

        cand, res = mix(1.0)
        if not res < hist[-1]:
            th = theta
            while True:
                c, r = mix(th)
                if r < res:
                    cand, res = c, r
                if r < hist[-1] or th <= 1e-3:
                    break
                th *= 0.5
            theta = th
        u = cand
        hist.append(res)
        if not np.all(np.isfinite(u)) or not math.isfinite(res) or np.max(np.abs(u)) > guard:
            return _finish(spec, u, it, hist, False, "picard", "diverged")
        if res <= cfg.tol:
            return _finish(spec, u, it, hist, True, "picard")
    return _finish(spec, u, cfg.max_iter, hist, False, "picard", "max iterations")


def newton_solve(spec: ProblemSpec, initial=None, config: SolverConfig | None = None) -> SolveReport:
    """Semismooth Newton with Armijo backtracking on ``||R||^2 / 2``.

    The generalized Jacobian uses the active stencil frame and upwind branch
    at each node (lowest index on ties) and exact derivatives of the smooth
    terms.
    """
    cfg = config or SolverConfig()
    dp = DiscreteProblem(spec)
    u = _initial(spec, initial)
    hist = []
    for it in range(cfg.max_iter + 1):
        R, J, _ = dp.jacobian(u)
        rn = float(np.max(np.abs(R), initial=0.0))
        hist.append(rn)
        if not math.isfinite(rn):
            return _finish(spec, u, it, hist, False, "newton", "non-finite residual")
        if rn <= cfg.tol:
            return _finish(spec, u, it, hist, True, "newton")
        if it == cfg.max_iter:
            break
        try:
            du = _spsolve(J, -R)
        except SingularSystemError as exc:
            return _finish(spec, u, it, hist, False, "newton", f"singular Jacobian: {exc}")
        phi = 0.5 * float(R @ R)
        step = 1.0
        while True:
            cand = u.copy()
            cand[dp.I] += step * du
            with np.errstate(all="ignore"):
                Rc = dp.residual(cand)
            pc = 0.5 * float(Rc @ Rc)
            if math.isfinite(pc) and pc <= (1 - 2 * cfg.armijo_c * step) * phi:
                break
            step *= cfg.armijo_shrink
            if step < cfg.min_step:
                return _finish(spec, u, it, hist, False, "newton", "line-search stall")
        u = cand
    return _finish(spec, u, cfg.max_iter, hist, False, "newton", "max iterations")


# ---------------------------------------------------------------------------
# smallness regime


@dataclass(frozen=True)
class EmbeddingConstants:
    """Numerical surrogates for the stability and embedding constants.

    ``C_tilde`` bounds ``||u||_{W^{2,p}} / ||rhs||_p`` for the frozen problem,
    ``D`` bounds ``||v||_{W^{1,r}} / ||v||_{W^{2,p}}`` and ``C1`` bounds
    ``||v||_inf / ||v||_{W^{1,r}}``, each as a maximum over a probe set.
    """

    C1: float
    C_tilde: float
    D: float
    probes: int = 0

    def as_dict(self) -> dict:
        return {"C1": self.C1, "C_tilde": self.C_tilde, "D": self.D, "probes": self.probes, "surrogate": True}


def _probe_fields(grid: Grid, n_random: int, seed: int) -> list:
    """Deterministic smooth fields vanishing on the boundary."""
    x = grid.coords()
    lo = [a[0] for a in grid.extents]
    L = [a[1] - a[0] for a in grid.extents]
    xi = [(xx - l0) / ll for xx, l0, ll in zip(x, lo, L)]
    out = []
    if grid.dim == 1:
        (s,) = xi
        for j in (1, 2, 3, 4):
            out.append(np.sin(j * np.pi * s))
        out.append(s * (1 - s))
        out.append(s**2 * (1 - s))
        out.append(np.exp(-40 * (s - 0.5) ** 2) * s * (1 - s))
    else:
        s, t = xi
        for i, j in ((1, 1), (1, 2), (2, 1), (2, 2), (3, 1)):
            out.append(np.sin(i * np.pi * s) * np.sin(j * np.pi * t))
        out.append(s * (1 - s) * t * (1 - t))
        out.append(np.exp(-40 * ((s - 0.5) ** 2 + (t - 0.5) ** 2)) * s * (1 - s) * t * (1 - t))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        f = np.zeros(grid.size)
        for _ in range(4):
            if grid.dim == 1:
                f += rng.normal() * np.sin(rng.integers(1, 6) * np.pi * xi[0])
            else:
                f += rng.normal() * np.sin(rng.integers(1, 5) * np.pi * xi[0]) * np.sin(rng.integers(1, 5) * np.pi * xi[1])
        out.append(f)
    return out


def estimate_constants(
    grid: Grid,
    P: PucciParams | None = None,
    b=None,
    p: float | None = None,
    m_growth: float = 2.0,
    n_random: int = 8,
    seed: int = 0,
    sign: int = 1,
) -> EmbeddingConstants:
    """Probe-based surrogates ``C1``, ``C_tilde`` and ``D``.

    Probe right-hand sides and probe fields are the same deterministic family
    (sine modes, polynomial bubbles, a localized bump and ``n_random`` seeded
    random sine combinations).  Each constant is a maximum of ratios over the
    probes, so enlarging the family never decreases it.
    """
    P = P or PucciParams()
    p = float(grid.dim + 1) if p is None else p
    r = p * m_growth
    spec = make_spec(grid, sign=sign, pucci=P, b=b, p=p)
    probes = _probe_fields(grid, n_random, seed)
    C_t = C1 = D = 0.0
    for f in probes:
        F = ScalarField(grid, f)
        fn = lp_norm(F, p)
        if fn > 0:
            u = solve_frozen(spec, F)
            C_t = max(C_t, w2p_norm(u, p) / fn)
        v = ScalarField(grid, f - 0.0)
        v2 = w2p_norm(v, p)
        v1 = w1r_norm(v, r)
        if v2 > 0:
            D = max(D, v1 / v2)
        if v1 > 0:
            C1 = max(C1, sup_norm(v) / v1)
    return EmbeddingConstants(C1, C_t, D, len(probes))


@dataclass(frozen=True)
class SmallnessReport:
    eps1: float
    C1: float
    C_tilde: float
    D: float
    c_norm: float
    c_bound: float
    data_norm: float
    mu_lhs: float
    c_ok: bool
    mu_ok: bool
    radius: float

    @property
    def passed(self) -> bool:
        return self.c_ok and self.mu_ok

    def as_dict(self) -> dict:
        return {
            "eps1": self.eps1,
            "C1": self.C1,
            "C_tilde": self.C_tilde,
            "D": self.D,
            "c_norm": self.c_norm,
            "c_bound": self.c_bound,
            "data_norm": self.data_norm,
            "mu_lhs": self.mu_lhs,
            "c_ok": self.c_ok,
            "mu_ok": self.mu_ok,
            "radius": self.radius,
            "passed": self.passed,
        }


def data_norm(spec: ProblemSpec) -> float:
    """``||h||_p + ||dirichlet||_{W^{2,p}}`` with discrete norms."""
    return lp_norm(spec.h, spec.p) + w2p_norm(spec.dirichlet, spec.p)


def smallness_check(spec: ProblemSpec, constants: EmbeddingConstants) -> SmallnessReport:
    """Evaluate the two smallness inequalities for ``eps1 = (3 C_tilde D)^-(m+k)``.

    The conditions are::

        ||c||_q < eps1^{1/(m+k)} / (C1 |Omega|^{(q-p)/(pq)})
        ||mu||_inf C_beta C1^k (||h||_p + ||psi||_{W^{2,p}})^{m+k-1} < eps1

    with ``C_beta`` the growth constant ``beta_growth_C`` of the spec.
    """
    m, k, p, q = spec.m_growth, spec.k, spec.p, spec.q
    C1, Ct, D = constants.C1, constants.C_tilde, constants.D
    eps1 = (3 * Ct * D) ** (-(m + k))
    expo = 1.0 / p if q == math.inf else (q - p) / (p * q)
    c_norm = lp_norm(spec.c, q)
    c_bound = eps1 ** (1 / (m + k)) / (C1 * spec.grid.volume**expo)
    dn = data_norm(spec)
    mu_sup = float(np.max(np.abs(spec.mu_values())))
    mu_lhs = mu_sup * spec.beta_growth_C * C1**k * dn ** (m + k - 1)
    return SmallnessReport(
        eps1, C1, Ct, D, c_norm, c_bound, dn, mu_lhs, c_norm < c_bound, mu_lhs < eps1, 3 * Ct * D * dn
    )
