"""Integro-exponential changes of variables and their derived quantities.

For ``beta(s) = s**k`` (k odd) and ``B(s) = s**(k+1)/(k+1)``::

    psi(u) = int_0^u exp( m B(s)) ds      (odd, strictly increasing, onto R)
    Psi(u) = int_0^u exp(-m B(s)) ds      (odd, bounded by C_beta)

``v = psi(u)`` turns ``Lap u + m beta(u)|Du|^2`` into ``Lap v / psi'(u)``, and
``w = Psi(u)`` removes ``m beta(u)|Du|^2`` with the opposite sign.  Large
arguments are handled in log-space; quadrature uses QUADPACK through
:func:`scipy.integrate.quad`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .field import Grid, ScalarField, centered_gradient, hessian_fd
from .ops import pucci_exact_batch

_RTOL = 1e-12
_LOG_MAX = 700.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class SaturationError(ValueError):
    """Argument outside the bounded range ``(-C_beta, C_beta)`` of ``Psi``."""


def _quad(fn, a, b, points=None):
    with np.errstate(over="ignore", under="ignore"):
        val, err = integrate.quad(fn, a, b, epsabs=0.0, epsrel=_RTOL, limit=200, points=points)
    if not math.isfinite(val) or err > 1e-9 * abs(val) + 1e-300:
        raise QuadratureError(f"quadrature on [{a}, {b}] returned {val} +- {err}")
    return val


@dataclass(frozen=True)
class Transform:
    """Parameters of the pair ``psi``, ``Psi``.

    Parameters
    ----------
    m : float
        Exponential rate, ``m > 0``.
    k : int
        Odd exponent of ``beta(s) = s**k``; ignored when ``beta`` is given.
    beta : callable, optional
        General odd nondecreasing ``beta``.  Requires ``lipschitz`` and
        ``interval``: the caller's Lipschitz bound on the working interval,
        which cannot be verified from a black box.
    """

    m: float
    k: int = 1
    beta: Callable | None = None
    lipschitz: float | None = None
    interval: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if self.beta is None:
            if int(self.k) != self.k or self.k < 1 or self.k % 2 == 0:
                raise ValueError(f"k must be an odd natural number, got {self.k}")
        else:
            if self.lipschitz is None or self.interval is None:
                raise ValueError("a general beta needs a declared Lipschitz bound and interval")
            self._spot_check_beta()

    def _spot_check_beta(self):
        lo, hi = self.interval
        s = np.linspace(-max(abs(lo), abs(hi)), max(abs(lo), abs(hi)), 201)
        b = np.array([self.beta(x) for x in s])
        if np.any(np.diff(b) < -1e-12) or np.any(b * s < -1e-12):
            raise ValueError("beta must be nondecreasing with beta(s) s >= 0")
        if np.max(np.abs(b + b[::-1])) > 1e-10 * (1 + np.max(np.abs(b))):
            raise ValueError("beta must be odd")
        slope = np.max(np.abs(np.diff(b) / np.diff(s)))
        if slope > self.lipschitz * (1 + 1e-9):
            raise ValueError(f"sampled slope {slope:.3g} exceeds declared Lipschitz bound")

    # -- building blocks
    @property
    def is_power(self) -> bool:
        return self.beta is None

    def beta_of(self, s):
        if self.is_power:
            return np.power(s, self.k)
        return np.vectorize(self.beta, otypes=[float])(s) if np.ndim(s) else float(self.beta(s))

    def B(self, s: float) -> float:
        """Primitive of ``beta`` vanishing at 0 (even in ``s``)."""
        if self.is_power:
            return abs(s) ** (self.k + 1) / (self.k + 1)
        s = abs(s)
        return _quad(self.beta, 0.0, s) if s > 0 else 0.0

    def width(self, u: float) -> float:
        """Length scale of the exponential peak at ``u``."""
        b = abs(float(self.beta_of(abs(u))))
        return 1.0 / (self.m * b) if b > 0 else math.inf

    def dpsi(self, u: float) -> float:
        return math.exp(self.m * self.B(u))

    def dPsi(self, u: float) -> float:
        return math.exp(-self.m * self.B(u))

    @property
    def c_beta(self) -> float:
        if "cb" not in self._cache:
            if self.is_power:
                self._cache["cb"] = c_beta(self.m, self.k)
            else:
                self._cache["cb"] = _quad(lambda s: math.exp(-self.m * self.B(s)), 0.0, math.inf)
        return self._cache["cb"]


def c_beta(m: float, k: int) -> float:
    """``int_0^inf exp(-m t**(k+1)/(k+1)) dt`` in closed form via the Gamma function."""
    a = 1.0 / (k + 1)
    return math.gamma(a) * a * ((k + 1) / m) ** a


def c_beta_quadrature(m: float, k: int) -> float:
    """Direct quadrature of the integral defining :func:`c_beta`."""
    return _quad(lambda s: math.exp(-m * s ** (k + 1) / (k + 1)), 0.0, math.inf)


# ---------------------------------------------------------------------------
# psi and Psi


def log_psi(t: Transform, u: float) -> float:
    """``log psi(|u|)`` evaluated without overflow; ``-inf`` at 0."""
    u = abs(float(u))
    if u == 0:
        return -math.inf
    mBu = t.m * t.B(u)
    pts = None
    w = t.width(u)
    if w < u:
        pts = [max(0.0, u - 40 * w), max(0.0, u - 4 * w)]
    integral = _quad(lambda s: math.exp(t.m * t.B(s) - mBu), 0.0, u, points=pts)
    return mBu + math.log(integral)


def psi(t: Transform, u: float) -> float:
    """``psi(u)``; raises :class:`OverflowError` past double range (use :func:`log_psi`)."""
    if u == 0:
        return 0.0
    lp = log_psi(t, u)
    if lp > _LOG_MAX:
        raise OverflowError(f"psi({u}) exceeds double range; use log_psi")
    return math.copysign(math.exp(lp), u)


def log_Psi_tail(t: Transform, u: float) -> float:
    """``log int_u^inf exp(-m B(s)) ds`` for ``u >= 0``."""
    u = abs(float(u))
    mBu = t.m * t.B(u)
    w = min(t.width(u), 1.0) if u > 0 else 1.0
    head = _quad(lambda s: math.exp(mBu - t.m * t.B(s)), u, u + 40 * w)
    tail = _quad(lambda s: math.exp(mBu - t.m * t.B(s)), u + 40 * w, math.inf)
    return -mBu + math.log(head + tail)


def Psi(t: Transform, u: float) -> float:
    """``Psi(u)``, odd and bounded by ``C_beta`` in absolute value."""
    a = abs(float(u))
    if a == 0:
        return 0.0
    if a <= 1.0 or t.m * t.B(a) < 1.0:
        val = _quad(lambda s: math.exp(-t.m * t.B(s)), 0.0, a)
    else:
        val = t.c_beta - math.exp(log_Psi_tail(t, a))
    return math.copysign(min(val, t.c_beta), u)


def _bracket(fn, target, x0=1.0):
    hi = x0
    while fn(hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("no bracket found")
    return hi


def psi_inv(t: Transform, v: float) -> float:
    """Inverse of ``psi`` by bracketed root finding plus a Newton polish."""
    if v == 0:
        return 0.0
    return math.copysign(_psi_inv_log(t, math.log(abs(v))), v)


def _psi_inv_log(t: Transform, logv: float) -> float:
    # solve log psi(e^s) = logv for s = log u; the map has slope >= 1 and psi(u) >= u
    f = lambda s: log_psi(t, math.exp(s)) - logv
    hi = logv if logv <= 0 else math.log(_bracket(lambda u: log_psi(t, u), logv))
    lo = hi - 1.0
    while f(lo) > 0:
        lo = hi - 2.0 * (hi - lo)
    s = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    for _ in range(2):
        u = math.exp(s)
        lp = log_psi(t, u)
        step = (lp - logv) / math.exp(s + t.m * t.B(u) - lp)
        if not math.isfinite(step) or abs(step) > 1e-6:
            break
        s -= step
    return math.exp(s)


def psi_inv_log(t: Transform, logv: float) -> float:
    """``psi^{-1}(exp(logv))`` for arguments beyond double range."""
    return _psi_inv_log(t, logv)


def Psi_inv(t: Transform, w: float) -> float:
    """Inverse of ``Psi`` on ``(-C_beta, C_beta)``.

    Raises :class:`SaturationError` when ``|w| >= C_beta``.
    """
    if w == 0:
        return 0.0
    cb = t.c_beta
    a = abs(float(w))
    if a >= cb:
        raise SaturationError(f"|w| = {a!r} is not below C_beta = {cb!r}")
    s = (cb - a) / cb
    if s < 1e-3:
        return math.copysign(Psi_inv_tail(t, s), w)
    hi = _bracket(lambda u: Psi(t, u), a)
    u = optimize.brentq(lambda u: Psi(t, u) - a, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    r = Psi(t, u) - a
    u -= r / t.dPsi(u)
    return math.copysign(u, w)


def Psi_inv_tail(t: Transform, s: float) -> float:
    """``Psi^{-1}((1 - s) C_beta)`` for ``0 < s < 1`` via the log of the tail."""
    if not 0 < s < 1:
        raise SaturationError(f"s must lie in (0, 1), got {s}")
    target = math.log(s * t.c_beta)
    f = lambda u: log_Psi_tail(t, u) - target
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
    return optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


# ---------------------------------------------------------------------------
# derived functions


def g(t: Transform, v: float) -> float:
    """``psi'(psi^{-1}(v)) - 1``; even, convex, ``g(0) = 0``."""
    return math.expm1(t.m * t.B(psi_inv(t, v)))


def g_quadrature(t: Transform, v: float) -> float:
    """``m int_0^|v| beta(psi^{-1}(tau)) dtau``, the integral form of :func:`g`."""
    a = abs(float(v))
    if a == 0:
        return 0.0
    return t.m * _quad(lambda tau: float(t.beta_of(psi_inv(t, tau))), 0.0, a)


def G(t: Transform, w: float) -> float:
    """``1 - Psi'(Psi^{-1}(w))``; even, nondecreasing on ``[0, C_beta)``."""
    return -math.expm1(-t.m * t.B(Psi_inv(t, w)))


def G_quadrature(t: Transform, w: float) -> float:
    """``m int_0^|w| beta(Psi^{-1}(tau)) dtau``, the integral form of :func:`G`."""
    a = abs(float(w))
    if a == 0:
        return 0.0
    return t.m * _quad(lambda tau: float(t.beta_of(Psi_inv(t, tau))), 0.0, a)


@dataclass(frozen=True)
class TwoWayResult:
    composed: float
    integrated: float

    @property
    def gap(self) -> float:
        return abs(self.composed - self.integrated)


def g_two_way(t: Transform, v: float) -> TwoWayResult:
    return TwoWayResult(g(t, v), g_quadrature(t, v))


def G_two_way(t: Transform, w: float) -> TwoWayResult:
    return TwoWayResult(G(t, w), G_quadrature(t, w))


def g_linear_constant(t: Transform, vs=None) -> float:
    """Sampled ``min_{v>0} psi'(psi^{-1}(v)) / v``, the working constant in ``g(v) >= C v - 1``."""
    if vs is None:
        vs = np.logspace(-3, 3, 61)
    return min((g(t, v) + 1.0) / v for v in vs)


# ---------------------------------------------------------------------------
# vectorised evaluation on fields


class TransformTable:
    """Piecewise Gauss-Legendre table of ``psi`` and ``Psi`` on ``[-umax, umax]``.

    Cumulative integrals are stored at ``n_cells + 1`` knots; evaluation adds
    a Gauss-Legendre integral from the nearest knot, so accuracy is that of
    the quadrature rule rather than of interpolation.  Inversion uses an
    interpolated start and Newton steps with the exact derivative.
    """

    def __init__(self, t: Transform, umax: float = 4.0, n_cells: int = 256, order: int = 20, tol: float = 1e-12):
        if not t.is_power:
            raise ValueError("tables are built for power nonlinearities")
        if t.m * t.B(umax) > _LOG_MAX:
            raise OverflowError("table range exceeds double range of psi")
        self.t, self.umax, self.tol = t, float(umax), tol
        self.knots = np.linspace(0.0, umax, n_cells + 1)
        self._x, self._w = np.polynomial.legendre.leggauss(order)
        self.psi_knots = np.concatenate([[0.0], np.cumsum(self._gl(self.knots[:-1], self.knots[1:], +1))])
        self.Psi_knots = np.concatenate([[0.0], np.cumsum(self._gl(self.knots[:-1], self.knots[1:], -1))])
        if np.any(np.diff(self.psi_knots) <= 0) or np.any(np.diff(self.Psi_knots) <= 0):
            raise ArithmeticError("table samples are not strictly monotone")

    def _expB(self, s, sign):
        k, m = self.t.k, self.t.m
        return np.exp(sign * m * np.abs(s) ** (k + 1) / (k + 1))

    def _gl(self, a, b, sign):
        a, b = np.asarray(a, float), np.asarray(b, float)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        s = mid[..., None] + half[..., None] * self._x
        return half * (self._expB(s, sign) @ self._w)

    def _eval(self, u, sign):
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        if np.any(a > self.umax * (1 + 1e-12)):
            raise ValueError("argument outside table range")
        j = np.clip(np.rint(a / (self.knots[1] - self.knots[0])).astype(int), 0, self.knots.size - 1)
        base = self.psi_knots if sign > 0 else self.Psi_knots
        return np.sign(u) * (base[j] + self._gl(self.knots[j], a, sign))

    def psi(self, u):
        return self._eval(u, +1)

    def Psi(self, u):
        return self._eval(u, -1)

    def dpsi(self, u):
        return self._expB(np.asarray(u, float), +1)

    def dPsi(self, u):
        return self._expB(np.asarray(u, float), -1)

    def _invert(self, y, sign):
        y = np.asarray(y, dtype=float)
        base = self.psi_knots if sign > 0 else self.Psi_knots
        a = np.abs(y)
        if np.any(a > base[-1]):
            raise ValueError("value outside table range")
        u = np.interp(a, base, self.knots)
        for _ in range(50):
            r = self._eval(u, sign) - a
            u = np.clip(u - r / self._expB(u, sign), 0.0, self.umax)
            if np.max(np.abs(r), initial=0.0) <= self.tol * (1 + np.max(a, initial=0.0)):
                break
        return np.sign(y) * u

    def psi_inv(self, v):
        return self._invert(v, +1)

    def Psi_inv(self, w):
        return self._invert(w, -1)


# ---------------------------------------------------------------------------
# identities on grids


def _lap_h(grid: Grid, u: np.ndarray) -> np.ndarray:
    return np.trace(hessian_fd(grid, u), axis1=1, axis2=2)


def _laplacian_defect_nodes(u: ScalarField, t: Transform) -> np.ndarray:
    grid = u.grid
    tab = TransformTable(t, umax=max(1e-3, 1.01 * np.max(np.abs(u.values))))
    v = tab.psi(u.values)
    ui = u.values[grid.interior]
    du = centered_gradient(grid, u.values)
    lhs = _lap_h(grid, v) / tab.dpsi(ui)
    rhs = _lap_h(grid, u.values) + t.m * t.beta_of(ui) * np.sum(du * du, axis=1)
    return np.abs(lhs - rhs)


def laplacian_identity_defect(u: ScalarField, t: Transform) -> float:
    """``max |Lap_h v / psi'(u) - (Lap_h u + m beta(u)|D u|^2)|`` over interior nodes, ``v = psi(u)``."""
    return float(np.max(_laplacian_defect_nodes(u, t)))


@dataclass(frozen=True)
class RefinementReport:
    """Defects over a refinement sequence with observed orders ``log2(d_i / d_{i+1})``."""

    spacings: tuple
    defects: tuple
    orders: tuple
    min_order: float
    passed: bool
    violations: tuple = ()

    def as_dict(self) -> dict:
        return {
            "spacings": list(self.spacings),
            "defects": list(self.defects),
            "orders": list(self.orders),
            "min_order": self.min_order,
            "passed": self.passed,
            "violations": list(self.violations),
        }


_ROUNDOFF = 1e-9


def _orders(defects, spacings):
    out = []
    for (d0, h0), (d1, h1) in zip(zip(defects, spacings), zip(defects[1:], spacings[1:])):
        if d0 < _ROUNDOFF and d1 < _ROUNDOFF:
            out.append(math.inf)
        else:
            out.append(math.log(max(d0, 1e-300) / max(d1, 1e-300)) / math.log(h0 / h1))
    return tuple(out)


def _grids(grid: Grid, levels: int):
    gs = [grid]
    for _ in range(levels - 1):
        gs.append(gs[-1].refine())
    return gs


def _coarse_nodes(coarse: Grid, fine: Grid, level: int) -> np.ndarray:
    """Positions in ``fine.interior`` of the interior nodes of ``coarse``."""
    f = 2**level
    idx = np.unravel_index(coarse.interior, coarse.shape)
    flat = np.ravel_multi_index(tuple(i * f for i in idx), fine.shape)
    return np.searchsorted(fine.interior, flat)


def _study(u, grid: Grid, levels: int, nodewise):
    """Defects of ``nodewise`` on a refinement sequence, taken at the coarse-grid nodes.

    Comparing at nodes shared by all levels keeps the location of the
    maximum fixed; the maximum over all nodes drifts towards the boundary as
    the mesh is refined, which adds an odd-order term to the observed rate.
    """
    gs = _grids(grid, levels)
    defects, extra = [], []
    for lvl, gr in enumerate(gs):
        d, info = nodewise(ScalarField.from_function(gr, u))
        defects.append(float(np.max(d[_coarse_nodes(grid, gr, lvl)])))
        extra.append(info)
    return gs, tuple(defects), extra


def verify_laplacian_identity(u, t: Transform, grid: Grid | None = None, levels: int = 3, min_order: float = 1.8):
    """Check the change-of-variables identity on a refinement sequence.

    ``u`` is either a callable of the coordinates (requires ``grid``, the
    coarsest level) or a :class:`ScalarField`, in which case only its defect
    is reported and no order is measured.  Defects of a refinement study are
    maxima over the nodes of the coarsest grid.
    """
    if isinstance(u, ScalarField):
        d = laplacian_identity_defect(u, t)
        return RefinementReport((u.grid.h,), (d,), (), min_order, True)
    gs, defects, _ = _study(u, grid, levels, lambda f: (_laplacian_defect_nodes(f, t), None))
    orders = _orders(defects, [gr.h for gr in gs])
    return RefinementReport(tuple(gr.h for gr in gs), defects, orders, min_order, all(o >= min_order for o in orders))


def _eig(H: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(H)


def sandwich_defects(u: ScalarField, t: Transform, P) -> dict:
    """Nodewise data for the Pucci sandwich of both transforms.

    Returns the Hessian consistency defects and the chain violations beyond
    the slack induced by those defects.
    """
    grid = u.grid
    d = grid.dim
    tab = TransformTable(t, umax=max(1e-3, 1.01 * np.max(np.abs(u.values))))
    I = grid.interior
    ui = u.values[I]
    du = centered_gradient(grid, u.values)
    g2 = np.sum(du * du, axis=1)
    outer = du[:, :, None] * du[:, None, :]
    mb = t.m * t.beta_of(ui)
    Hu = hessian_fd(grid, u.values)
    out = {"defect": 0.0, "violations": 0, "worst_excess": 0.0, "nodes": np.zeros(I.size)}
    for which, sgn, T, dT in (("psi", 1.0, tab.psi, tab.dpsi), ("Psi", -1.0, tab.Psi, tab.dPsi)):
        Hv = hessian_fd(grid, T(u.values)) / dT(ui)[:, None, None]
        target = Hu + sgn * mb[:, None, None] * outer
        node_defect = np.max(np.abs(Hv - target), axis=(1, 2))
        out["nodes"] = np.maximum(out["nodes"], node_defect)
        defect = float(np.max(node_defect))
        out["defect"] = max(out["defect"], defect)
        slack = d * P.Lam * d * defect + 1e-12
        eu, ev = _eig(Hu), _eig(Hv)
        a1, a2 = sgn * mb * P.lam * g2, sgn * mb * P.Lam * g2
        lo, hi = np.minimum(a1, a2), np.maximum(a1, a2)
        for sign in (1, -1):
            base = pucci_exact_batch(eu, P, sign)
            mid = pucci_exact_batch(ev, P, sign)
            excess = np.maximum(base + lo - mid, mid - base - hi)
            out["violations"] += int(np.sum(excess > slack))
            out["worst_excess"] = max(out["worst_excess"], float(np.max(excess - slack, initial=-np.inf)))
    return out


def verify_sandwich(u, t: Transform, P, grid: Grid | None = None, levels: int = 3, min_order: float = 1.8):
    """Check the Pucci sandwich for ``v = psi(u)`` and ``w = Psi(u)`` on a refinement sequence.

    For ``u >= 0`` the chains read::

        M(D^2u) + m beta(u) lam |Du|^2 <= M(D^2 v)/psi'(u) <= M(D^2u) + m beta(u) Lam |Du|^2
        M(D^2u) - m beta(u) Lam |Du|^2 <= M(D^2 w)/Psi'(u) <= M(D^2u) - m beta(u) lam |Du|^2

    for both extremal operators; where ``u < 0`` the bounds swap.  Each chain
    is checked nodewise on finite-difference Hessians with slack
    proportional to the Hessian consistency defect, whose convergence order
    is also measured at the nodes of the coarsest grid.
    """
    if isinstance(u, ScalarField):
        r = sandwich_defects(u, t, P)
        return RefinementReport((u.grid.h,), (r["defect"],), (), min_order, r["violations"] == 0)
    def nodewise(f):
        r = sandwich_defects(f, t, P)
        return r["nodes"], r

    gs, defects, results = _study(u, grid, levels, nodewise)
    orders = _orders(defects, [gr.h for gr in gs])
    viol = tuple(r["violations"] for r in results)
    ok = all(o >= min_order for o in orders) and not any(viol)
    return RefinementReport(tuple(gr.h for gr in gs), defects, orders, min_order, ok, viol)


# ---------------------------------------------------------------------------
# asymptotics


def a_ratio_log(t: Transform, logv: float) -> float:
    """``log a(v)`` with ``a(v) = psi'(psi^{-1}(v)) psi^{-1}(v) / v``."""
    w = psi_inv_log(t, logv)
    return t.m * t.B(w) + math.log(w) - logv


def limits(t: Transform) -> dict:
    """Sharp limits of the normalised asymptotic ratios for power ``beta``."""
    k, m = t.k, t.m
    return {
        "a_over_m_log": (k + 1) / m,
        "psi_inv_over_log_root": ((k + 1) / m) ** (1 / (k + 1)),
        "b_over_m_log_power": ((k + 1) / m) ** (k / (k + 1)),
        "psi_tail_ratio": 1.0,
        "smp_rate": 1.0,
    }


@dataclass(frozen=True)
class AsymptoticsReport:
    v: tuple
    a_over_m_log: tuple
    psi_inv_over_log_root: tuple
    b_over_m_log_power: tuple
    w: tuple
    psi_tail_ratio: tuple
    a_near_zero: float
    limits: dict
    band: float
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self) -> dict:
        return {
            "v": list(self.v),
            "a_over_m_log": list(self.a_over_m_log),
            "psi_inv_over_log_root": list(self.psi_inv_over_log_root),
            "b_over_m_log_power": list(self.b_over_m_log_power),
            "w": list(self.w),
            "psi_tail_ratio": list(self.psi_tail_ratio),
            "a_near_zero": self.a_near_zero,
            "limits": self.limits,
            "band": self.band,
            "checks": self.checks,
            "passed": self.passed,
        }


def _monotone_toward(seq, limit) -> bool:
    gaps = [abs(x - limit) for x in seq]
    return all(b <= a * (1 + 1e-9) for a, b in zip(gaps, gaps[1:]))


def asymptotics_report(t: Transform, exps=range(2, 13), ws=(2.0, 4.0, 6.0, 8.0, 10.0), band: float = 0.05) -> AsymptoticsReport:
    """Normalised growth ratios on ``v = 10**e`` and their distance to the sharp limits.

    Ratios are ``a(v)/(m ln v)``, ``psi^{-1}(v)/(ln v)^{1/(k+1)}``,
    ``b(v)/(m (ln v)^{k/(k+1)})`` with ``b(v) = (psi'(psi^{-1}(v)) - 1)/v`` and
    ``psi(w) m w^k / psi'(w)``.  All are evaluated in log-space.  Each check
    requires monotone approach and a relative gap below ``band`` at the
    largest sample.
    """
    if not t.is_power:
        raise ValueError("asymptotic laws are stated for power nonlinearities")
    m, k = t.m, t.k
    lim = limits(t)
    vs, A, Pi, Bq = [], [], [], []
    for e in exps:
        logv = e * math.log(10.0)
        w = psi_inv_log(t, logv)
        mB = m * t.B(w)
        vs.append(10.0**e)
        A.append(math.exp(mB + math.log(w) - logv) / (m * logv))
        Pi.append(w / logv ** (1 / (k + 1)))
        b = math.exp(mB - logv) - math.exp(-logv)
        Bq.append(b / (m * logv ** (k / (k + 1))))
    tail = [math.exp(log_psi(t, w) + math.log(m * w**k) - m * t.B(w)) for w in ws]
    eps = 1e-6
    a0 = psi_inv(t, eps) * t.dpsi(psi_inv(t, eps)) / eps

    def ok(seq, limit):
        # the approach is only eventually monotone, so test the upper half of the samples
        return _monotone_toward(seq[len(seq) // 2 :], limit) and abs(seq[-1] / limit - 1) <= band

    checks = {
        "a_over_m_log": ok(A, lim["a_over_m_log"]),
        "psi_inv_over_log_root": ok(Pi, lim["psi_inv_over_log_root"]),
        "b_over_m_log_power": ok(Bq, lim["b_over_m_log_power"]),
        "psi_tail_ratio": ok(tail, 1.0),
        "a_near_zero": abs(a0 - 1.0) <= 1e-4,
    }
    return AsymptoticsReport(tuple(vs), tuple(A), tuple(Pi), tuple(Bq), tuple(ws), tuple(tail), a0, lim, band, checks)


@dataclass(frozen=True)
class SMPReport:
    s: tuple
    f: tuple
    quotient: tuple
    rate_ratio: tuple
    band: float
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self) -> dict:
        return {
            "s": list(self.s),
            "f": list(self.f),
            "quotient": list(self.quotient),
            "rate_ratio": list(self.rate_ratio),
            "band": self.band,
            "checks": self.checks,
            "passed": self.passed,
        }


def smp_f(t: Transform, s: float) -> float:
    """``f(s) = Psi'(z) z`` with ``z = Psi^{-1}((1 - s) C_beta)``."""
    if s >= 1:
        return 0.0
    z = Psi_inv_tail(t, s) if s < 1e-3 else Psi_inv(t, (1 - s) * t.c_beta)
    return math.exp(-t.m * t.B(z) + math.log(z)) if z > 0 else 0.0


def smp_hypothesis_check(t: Transform, exps=range(1, 9), band: float = 0.05) -> SMPReport:
    """Decay of ``f(s)`` and ``f(s)/(s ln^2 s)`` as ``s -> 0+``.

    The quotient is compared with its leading-order rate
    ``C_beta (k+1)/|ln s|``; ``rate_ratio`` is the quotient divided by that
    rate and tends to 1.
    """
    if not t.is_power:
        raise ValueError("the rate law is stated for power nonlinearities")
    ss, fs, qs, rr = [], [], [], []
    for e in exps:
        s = 10.0 ** (-e)
        f = smp_f(t, s)
        q = f / (s * math.log(s) ** 2)
        ss.append(s)
        fs.append(f)
        qs.append(q)
        rr.append(q / (t.c_beta * (t.k + 1) / abs(math.log(s))))
    checks = {
        "f_decreasing": all(b < a for a, b in zip(fs, fs[1:])),
        "quotient_decreasing": all(b < a for a, b in zip(qs, qs[1:])),
        "rate_monotone": _monotone_toward(rr, 1.0),
        "rate_within_band": abs(rr[-1] - 1.0) <= band,
        "f_at_zero_preimage": smp_f(t, 1.0) == 0.0,
    }
    return SMPReport(tuple(ss), tuple(fs), tuple(qs), tuple(rr), band, checks)
