"""Monotone finite-difference discretization of the model operators.

The model family, for ``s = +1`` or ``s = -1``, is::

    M^s(D^2 u) + s b|Du| + s mu(x) beta(u) <M(x)Du, Du>^{m/2} + lam c u = -h

with ``beta(u) = u**k``.  For ``s = +1`` and Laplacian Pucci constants this is
the one-parameter problem ``-Lap u - b|Du| = lam c u + mu beta(u)|Du|^2 + h``.
:func:`residual` returns ``-(LHS) - h`` at interior nodes, so a discrete
subsolution has residual <= 0 and a supersolution residual >= 0, and the
residual is nonincreasing in every neighbouring value (degenerate ellipticity)
once the quadratic term is frozen.

Second-order terms use (wide-stencil) directional differences, the
``b|Du|`` term uses centered differences wherever the positive-coefficient
rule allows it and sign-dependent upwinding elsewhere, and the quadratic
gradient form uses centered differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .field import (
    Grid,
    GridError,
    MatrixField,
    ScalarField,
    centered_gradient,
)


class BoundaryMismatch(ValueError):
    """The field does not carry the problem's Dirichlet data."""


class ExponentError(ValueError):
    """Lebesgue exponents outside the admissible cases."""


@dataclass(frozen=True)
class PucciParams:
    """Ellipticity constants ``0 < lam <= Lam`` of the extremal operators."""

    lam: float = 1.0
    Lam: float = 1.0

    def __post_init__(self):
        if not (0 < self.lam <= self.Lam) or not math.isfinite(self.Lam):
            raise ValueError(f"need 0 < lam <= Lam, got lam={self.lam}, Lam={self.Lam}")

    @property
    def is_laplacian(self) -> bool:
        return self.lam == self.Lam


def pucci_exact(eigs, P: PucciParams, sign: int) -> float:
    """Extremal operator value from the eigenvalues of a symmetric matrix.

    ``M+ = Lam * sum(e+) - lam * sum(e-)`` and ``M- = lam * sum(e+) - Lam * sum(e-)``.
    """
    e = np.asarray(eigs, dtype=float)
    pos, neg = np.sum(np.maximum(e, 0.0)), np.sum(np.maximum(-e, 0.0))
    if sign > 0:
        return float(P.Lam * pos - P.lam * neg)
    return float(P.lam * pos - P.Lam * neg)


def pucci_exact_batch(eigs: np.ndarray, P: PucciParams, sign: int) -> np.ndarray:
    """Vectorised :func:`pucci_exact` over rows of ``eigs``."""
    e = np.atleast_2d(eigs)
    pos = np.maximum(e, 0.0).sum(axis=1)
    neg = np.maximum(-e, 0.0).sum(axis=1)
    if sign > 0:
        return P.Lam * pos - P.lam * neg
    return P.lam * pos - P.Lam * neg


@dataclass(frozen=True)
class ExponentPlan:
    case: str
    r: float


def resolve_exponents(p: float, q: float, q1: float, m_growth: float, n: int = 1) -> ExponentPlan:
    """Classify ``(p, q)`` into cases (i)-(iii) and select the embedding exponent ``r``.

    The boundary ``q = m p / (m - 1)`` is classified as case (iii); there both
    formulas for ``r`` agree.
    """
    if not m_growth > 1:
        raise ExponentError(f"gradient exponent must exceed 1, got {m_growth}")
    if not p > n:
        raise ExponentError(f"need p > n = {n}, got p = {p}")
    if p > q1:
        raise ExponentError(f"need p <= q1, got p = {p}, q1 = {q1}")
    if q == math.inf:
        return ExponentPlan("i", p * m_growth)
    if q < p:
        raise ExponentError(f"need p <= q, got p = {p}, q = {q}")
    if q >= m_growth / (m_growth - 1) * p:
        return ExponentPlan("iii", p * m_growth)
    if q == p:
        return ExponentPlan("ii", math.inf)
    return ExponentPlan("ii", p * q / (q - p))


# ---------------------------------------------------------------------------
# problem description


def _as_field(grid: Grid, value, name: str) -> ScalarField:
    if value is None:
        return ScalarField.constant(grid, 0.0)
    if isinstance(value, ScalarField):
        if not value.grid.same_as(grid):
            raise GridError(f"{name} lives on a different grid")
        return value
    if callable(value):
        return ScalarField.from_function(grid, value)
    return ScalarField(grid, value)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A full discrete instance of the model equation.

    ``h`` is the source term with the sign convention of the one-parameter
    problem (``-Lap u = ... + h``); for the Pucci form ``M(D^2u) + ... = f``
    use ``h = -f``.  ``mu_field`` multiplies the scalar ``mu`` nodewise.
    ``dirichlet`` is given on every node: its boundary values are the
    boundary condition and its interior values serve as the extension used
    in the ``W^{2,p}`` surrogate norm.
    """

    grid: Grid
    sign: int = 1
    pucci: PucciParams = field(default_factory=PucciParams)
    b: ScalarField | None = None
    c: ScalarField | None = None
    h: ScalarField | None = None
    mu: float = 0.0
    mu_field: ScalarField | None = None
    k: int = 1
    beta_growth_C: float = 1.0
    M: MatrixField | None = None
    m_growth: float = 2.0
    p: float | None = None
    q: float = math.inf
    q1: float = math.inf
    dirichlet: ScalarField | None = None
    lam: float = 0.0
    stencil_width: int = 1

    def __post_init__(self):
        g = self.grid
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        for name in ("b", "c", "h", "dirichlet"):
            object.__setattr__(self, name, _as_field(g, getattr(self, name), name))
        if self.mu_field is not None:
            object.__setattr__(self, "mu_field", _as_field(g, self.mu_field, "mu_field"))
        if self.M is None:
            object.__setattr__(self, "M", MatrixField.identity(g))
        elif not self.M.grid.same_as(g):
            raise GridError("M lives on a different grid")
        if np.any(self.b.values < 0):
            raise ValueError("b must be nonnegative")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if int(self.k) != self.k or self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"k must be an odd natural number, got {self.k}")
        if not self.m_growth > 1:
            raise ValueError("m_growth must exceed 1")
        if self.p is None:
            object.__setattr__(self, "p", float(g.dim + 1))
        if not (g.dim < self.p <= self.q):
            raise ValueError(f"need n < p <= q, got n={g.dim}, p={self.p}, q={self.q}")
        if self.stencil_width < 1:
            raise ValueError("stencil_width must be >= 1")

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    @property
    def beta(self) -> Callable:
        k = self.k
        return lambda s: np.power(s, k)

    def mu_values(self) -> np.ndarray:
        if self.mu_field is None:
            return np.full(self.grid.size, self.mu)
        return self.mu * self.mu_field.values

    def exponent_plan(self) -> ExponentPlan:
        return resolve_exponents(self.p, self.q, self.q1, self.m_growth, self.grid.dim)


def make_spec(grid: Grid, **kwargs) -> ProblemSpec:
    """Convenience constructor; coefficient fields may be scalars or callables."""
    if "pucci" in kwargs and isinstance(kwargs["pucci"], (tuple, list)):
        kwargs["pucci"] = PucciParams(*kwargs["pucci"])
    if "mu_field" in kwargs and kwargs["mu_field"] is not None:
        kwargs["mu_field"] = _as_field(grid, kwargs["mu_field"], "mu_field")
    return ProblemSpec(grid, **kwargs)


def manufactured_forcing(spec: ProblemSpec, u, grad, hess) -> ScalarField:
    """Forcing ``h`` that makes ``u`` an exact solution of the continuous problem.

    Parameters
    ----------
    spec : ProblemSpec
        Problem whose ``h`` is ignored.
    u, grad, hess : callable
        ``u(*coords)``, ``grad(*coords) -> (N, d)`` and ``hess(*coords) -> (N, d, d)``.

    Returns
    -------
    ScalarField
        ``h = -[M^s(D^2u) + s b|Du| + s mu beta(u) <M Du, Du>^{m/2} + lam c u]``;
        boundary entries are evaluated too but unused by the residual.
    """
    g = spec.grid
    X = g.coords()
    uv = np.asarray(u(*X), dtype=float)
    Du = np.asarray(grad(*X), dtype=float).reshape(g.size, g.dim)
    D2u = np.asarray(hess(*X), dtype=float).reshape(g.size, g.dim, g.dim)
    eigs = np.linalg.eigvalsh(0.5 * (D2u + np.swapaxes(D2u, 1, 2)))
    s = spec.sign
    pv = pucci_exact_batch(eigs, spec.pucci, s)
    MDu = np.einsum("nij,nj->ni", spec.M.values, Du)
    q2 = np.einsum("ni,ni->n", MDu, Du)
    T = spec.mu_values() * np.power(uv, spec.k) * np.power(q2, spec.m_growth / 2)
    val = pv + s * spec.b.values * np.linalg.norm(Du, axis=1) + s * T + spec.lam * spec.c.values * uv
    return ScalarField(g, -val)


# ---------------------------------------------------------------------------
# stencils


@dataclass(frozen=True, eq=False)
class _Frame:
    offsets: tuple  # flat index offsets, one per direction
    h2: tuple  # squared physical length of each offset
    valid: np.ndarray  # mask over interior nodes where the frame fits


@dataclass(frozen=True, eq=False)
class _Stencil:
    grid: Grid
    frames: tuple
    axis_only: bool


def _primitive_frames(width: int) -> list:
    vecs = []
    for a in range(0, width + 1):
        for b in range(-width, width + 1):
            if (a, b) == (0, 0) or (a == 0 and b < 0) or math.gcd(a, abs(b)) != 1:
                continue
            vecs.append((a, b))
    frames, seen = [], set()
    for a, b in vecs:
        perp = (-b, a) if -b > 0 or (-b == 0 and a > 0) else (b, -a)
        key = frozenset([(a, b), perp])
        if key in seen:
            continue
        seen.add(key)
        frames.append(((a, b), perp))
    frames.sort(key=lambda f: (max(abs(f[0][0]), abs(f[0][1])), f))
    # axis frame first so ties resolve to it
    frames.sort(key=lambda f: 0 if {f[0], f[1]} == {(1, 0), (0, 1)} else 1)
    return frames


@lru_cache(maxsize=64)
def _stencil(grid: Grid, width: int = 1, axis_only: bool = False) -> _Stencil:
    """Stencil frames; ``axis_only`` keeps just the coordinate frame (linear operators)."""
    I = grid.interior
    if grid.dim == 1:
        frame = _Frame((1,), (grid.spacing[0] ** 2,), np.ones(I.size, dtype=bool))
        return _Stencil(grid, (frame,), True)
    nx, ny = grid.counts
    hx, hy = grid.spacing
    ii, jj = np.divmod(I, ny)
    frames = []
    square = math.isclose(hx, hy, rel_tol=1e-12)
    for d1, d2 in _primitive_frames(width):
        if (axis_only or not square) and {d1, d2} != {(1, 0), (0, 1)}:
            continue
        offs, h2s = [], []
        valid = np.ones(I.size, dtype=bool)
        for a, b in (d1, d2):
            offs.append(a * ny + b)
            h2s.append((a * hx) ** 2 + (b * hy) ** 2)
            valid &= (ii - abs(a) >= 0) & (ii + abs(a) <= nx - 1) & (jj - abs(b) >= 0) & (jj + abs(b) <= ny - 1)
        frames.append(_Frame(tuple(offs), tuple(h2s), valid))
    return _Stencil(grid, tuple(frames), len(frames) == 1)


def _second_diff(u: np.ndarray, I: np.ndarray, off: int, h2: float, valid: np.ndarray) -> np.ndarray:
    n = u.size
    up = np.clip(I + off, 0, n - 1)
    dn = np.clip(I - off, 0, n - 1)
    d = (u[up] - 2.0 * u[I] + u[dn]) / h2
    return np.where(valid, d, 0.0)


def _scalar_pucci(d: np.ndarray, P: PucciParams, sign: int):
    """Pucci of a scalar second difference and the chosen coefficient."""
    if sign > 0:
        a = np.where(d > 0, P.Lam, P.lam)
    else:
        a = np.where(d > 0, P.lam, P.Lam)
    return a * d, a


def _pucci_policy(st: _Stencil, u: np.ndarray, P: PucciParams, sign: int, want_matrix: bool):
    g = st.grid
    I = g.interior
    n_i = I.size
    totals, coefs = [], []
    for fr in st.frames:
        tot = np.zeros(n_i)
        cf = []
        for off, h2 in zip(fr.offsets, fr.h2):
            d = _second_diff(u, I, off, h2, fr.valid)
            val, a = _scalar_pucci(d, P, sign)
            tot += val
            cf.append(a)
        bad = -np.inf if sign > 0 else np.inf
        totals.append(np.where(fr.valid, tot, bad))
        coefs.append(cf)
    T = np.vstack(totals)
    choice = np.argmax(T, axis=0) if sign > 0 else np.argmin(T, axis=0)
    value = T[choice, np.arange(n_i)]
    if not want_matrix:
        return value, None, choice
    rows, cols, vals = [], [], []
    r = np.arange(n_i)
    for f, fr in enumerate(st.frames):
        sel = choice == f
        if not sel.any():
            continue
        rs, Is = r[sel], I[sel]
        for j, (off, h2) in enumerate(zip(fr.offsets, fr.h2)):
            w = coefs[f][j][sel] / h2
            rows += [rs, rs, rs]
            cols += [Is + off, Is - off, Is]
            vals += [w, w, -2.0 * w]
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_i, g.size)
    )
    return value, A, choice


def _centered_ok(st: _Stencil, b_int: np.ndarray, P: PucciParams) -> np.ndarray:
    """Nodes where centered ``b|Du|`` keeps every neighbour coefficient nonnegative."""
    if not st.axis_only:
        return b_int == 0
    return b_int * max(st.grid.spacing) <= 2.0 * P.lam


def _grad_policy(grid: Grid, u: np.ndarray, sign: int, centered: np.ndarray, want_matrix: bool):
    """|Du| at interior nodes with its homogeneous linearization.

    ``centered`` marks nodes using centered differences; elsewhere the
    sign-dependent upwind choice is used: for ``sign=+1`` the approximation is
    nondecreasing in neighbour values, for ``sign=-1`` nonincreasing.
    """
    I = grid.interior
    n_i = I.size
    st, hs = grid.strides(), grid.spacing
    d = grid.dim
    comps = np.zeros((n_i, d))  # selected one-sided / centered values per axis
    wts = []  # per axis: (coef on I+s, coef on I-s, coef on I) for the selected functional
    gc = centered_gradient(grid, u)
    for a in range(d):
        s, h = st[a], hs[a]
        fwd = (u[I + s] - u[I]) / h
        bwd = (u[I] - u[I - s]) / h
        if sign > 0:
            cand = np.vstack([fwd, -bwd, np.zeros(n_i)])
            cw = [(1 / h, 0.0, -1 / h), (0.0, 1 / h, -1 / h), (0.0, 0.0, 0.0)]
        else:
            cand = np.vstack([-fwd, bwd, np.zeros(n_i)])
            cw = [(-1 / h, 0.0, 1 / h), (0.0, -1 / h, 1 / h), (0.0, 0.0, 0.0)]
        pick = np.argmax(cand, axis=0)
        up_val = cand[pick, np.arange(n_i)]
        comps[:, a] = np.where(centered, gc[:, a], up_val)
        cw = np.array(cw)
        plus = np.where(centered, 1 / (2 * h), cw[pick, 0])
        minus = np.where(centered, -1 / (2 * h), cw[pick, 1])
        mid = np.where(centered, 0.0, cw[pick, 2])
        wts.append((plus, minus, mid))
    norm = np.linalg.norm(comps, axis=1)
    if not want_matrix:
        return norm, None
    e = np.zeros_like(comps)
    nz = norm > 0
    e[nz] = comps[nz] / norm[nz, None]
    # zero gradient: first axis direction, which contributes value 0 anyway
    e[~nz, 0] = np.where(centered[~nz], 1.0, 0.0)
    rows, cols, vals = [], [], []
    r = np.arange(n_i)
    for a in range(d):
        plus, minus, mid = wts[a]
        rows += [r, r, r]
        cols += [I + st[a], I - st[a], I]
        vals += [e[:, a] * plus, e[:, a] * minus, e[:, a] * mid]
    G = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_i, grid.size)
    )
    return norm, G


def _quad_form_int(grid: Grid, u: np.ndarray, Mvals: np.ndarray):
    g = centered_gradient(grid, u)
    Mg = np.einsum("nij,nj->ni", Mvals, g)
    return np.einsum("ni,ni->n", g, Mg), g, Mg


def _interior_to_field(grid: Grid, vals: np.ndarray) -> ScalarField:
    full = np.zeros(grid.size)
    full[grid.interior] = vals
    return ScalarField(grid, full)


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# public discrete operators


def pucci_fd(u: ScalarField, P: PucciParams, sign: int, width: int = 1) -> ScalarField:
    """Monotone discrete extremal operator at interior nodes (zero on the boundary).

    1D applies the scalar operator to the centered second difference.  2D takes
    the max (``sign=+1``) or min over orthogonal stencil frames of the sum of
    scalar operators applied to directional second differences.
    """
    st = _stencil(u.grid, width, P.is_laplacian)
    val, _, _ = _pucci_policy(st, u.values, P, sign, want_matrix=False)
    return _interior_to_field(u.grid, val)


def grad_upwind_abs(u: ScalarField, direction_sign: int) -> ScalarField:
    """Upwind ``|Du|``: nondecreasing in neighbours for ``+1``, nonincreasing for ``-1``."""
    g = u.grid
    val, _ = _grad_policy(g, u.values, direction_sign, np.zeros(g.interior.size, dtype=bool), False)
    return _interior_to_field(g, val)


def grad_centered(u: ScalarField) -> np.ndarray:
    """Centered gradient, shape ``(n_nodes, dim)``; boundary rows are zero."""
    g = u.grid
    out = np.zeros((g.size, g.dim))
    out[g.interior] = centered_gradient(g, u.values)
    return out


def quad_form(u: ScalarField, M: MatrixField) -> ScalarField:
    """``<M(x) Du, Du>`` with centered gradients at interior nodes."""
    g = u.grid
    q, _, _ = _quad_form_int(g, u.values, M.values[g.interior])
    return _interior_to_field(g, q)


class DiscreteProblem:
    """Cached interior arrays and evaluators for one :class:`ProblemSpec`.

    Unknowns are the interior values; boundary values are pinned to the
    Dirichlet data.
    """

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        g = self.grid = spec.grid
        I = self.I = g.interior
        self.B = g.boundary
        self.st = _stencil(g, spec.stencil_width, spec.pucci.is_laplacian)
        self.b = spec.b.values[I]
        self.c = spec.c.values[I]
        self.h = spec.h.values[I]
        self.mu = spec.mu_values()[I]
        self.Mv = spec.M.values[I]
        self.centered = _centered_ok(self.st, self.b, spec.pucci)
        self.ub = spec.dirichlet.values[self.B]
        self.s = spec.sign
        self.lam = spec.lam
        n_i = I.size
        self._inject = sp.csr_matrix((np.ones(n_i), (np.arange(n_i), I)), shape=(n_i, g.size))

    # -- assembly helpers
    def full(self, u_int: np.ndarray) -> np.ndarray:
        u = np.empty(self.grid.size)
        u[self.I] = u_int
        u[self.B] = self.ub
        return u

    def split(self, A: sp.csr_matrix):
        """Columns of ``A`` restricted to interior and boundary nodes."""
        A = A.tocsc()
        return A[:, self.I].tocsr(), A[:, self.B].tocsr()

    def check_boundary(self, u: np.ndarray, tol: float = 1e-9):
        err = np.max(np.abs(u[self.B] - self.ub)) if self.B.size else 0.0
        if err > tol * (1.0 + np.max(np.abs(self.ub))):
            raise BoundaryMismatch(f"boundary values differ from Dirichlet data by {err:.3e}")

    def frozen_operator(self, u: np.ndarray, want_matrix: bool = True):
        """Value and policy matrix of ``M^s(D^2u) + s b|Du|`` (rows interior, columns all nodes)."""
        pv, A, _ = _pucci_policy(self.st, u, self.spec.pucci, self.s, want_matrix)
        gv, G = _grad_policy(self.grid, u, self.s, self.centered, want_matrix)
        val = pv + self.s * self.b * gv
        if want_matrix:
            A = A + sp.diags(self.s * self.b) @ G
        return val, A

    def gradient_term(self, u: np.ndarray):
        """``mu(x) beta(u) Q(u)^{m/2}`` at interior nodes, and ``Q``, ``Du``, ``M Du``."""
        q2, g, Mg = _quad_form_int(self.grid, u, self.Mv)
        m = self.spec.m_growth
        Q = q2 if m == 2 else np.power(q2, m / 2)
        ui = u[self.I]
        return self.mu * np.power(ui, self.spec.k) * Q, Q, q2, g, Mg

    def residual(self, u: np.ndarray) -> np.ndarray:
        L, _ = self.frozen_operator(u, want_matrix=False)
        T, _, _, _, _ = self.gradient_term(u)
        ui = u[self.I]
        return -(L + self.s * T + self.lam * self.c * ui) - self.h

    def jacobian(self, u: np.ndarray):
        """Residual, its semismooth Jacobian in the interior unknowns, and ``dR/dlam``."""
        spec = self.spec
        L, A = self.frozen_operator(u)
        T, Q, q2, g, Mg = self.gradient_term(u)
        ui = u[self.I]
        k, m = spec.k, spec.m_growth
        R = -(L + self.s * T + self.lam * self.c * ui) - self.h
        n_i = self.I.size
        r = np.arange(n_i)
        # d/du [mu beta(u) Q^{m/2}] = mu beta'(u) Q^{m/2} + mu beta(u) (m/2) q2^{m/2-1} 2 (M Du).D
        diag = self.mu * k * np.power(ui, k - 1) * Q
        if m == 2:
            fac = 2.0 * self.mu * np.power(ui, k)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(q2 > 0, self.mu * np.power(ui, k) * m * np.power(q2, m / 2 - 1), 0.0)
        rows, cols, vals = [r], [self.I], [diag]
        for a, (s_, h_) in enumerate(zip(self.grid.strides(), self.grid.spacing)):
            w = fac * Mg[:, a] / (2 * h_)
            rows += [r, r]
            cols += [self.I + s_, self.I - s_]
            vals += [w, -w]
        D = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_i, self.grid.size)
        )
        Jfull = -(A + self.s * D + sp.diags(self.lam * self.c, offsets=0, shape=(n_i, n_i)) @ self._inject)
        J, _ = self.split(Jfull)
        dlam = -self.c * ui
        return R, J, dlam


def residual(spec: ProblemSpec, u: ScalarField, tol: float = 1e-9) -> ScalarField:
    """Interior residual ``-(LHS) - h``; zero on boundary nodes.

    Raises :class:`BoundaryMismatch` when ``u`` does not match the Dirichlet
    data on the boundary.
    """
    if not u.grid.same_as(spec.grid):
        raise GridError("field and spec live on different grids")
    dp = DiscreteProblem(spec)
    dp.check_boundary(u.values, tol)
    return _interior_to_field(spec.grid, dp.residual(u.values))
