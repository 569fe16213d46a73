"""Principal eigenpair of ``-Lap phi = gamma c phi`` and the strong order it induces."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import Grid, ScalarField


class EigenError(RuntimeError):
    """Inverse iteration failed or the weight is inadmissible."""


@dataclass(frozen=True)
class EigenPair:
    gamma1: float
    phi1: ScalarField
    residual: float
    iterations: int = 0

    def as_dict(self) -> dict:
        return {"gamma1": self.gamma1, "residual": self.residual, "iterations": self.iterations}


def dirichlet_laplacian(grid: Grid) -> sp.csr_matrix:
    """Five-point (three-point in 1D) ``-Lap_h`` on interior unknowns with zero boundary values."""
    mats = []
    for n, h in zip(grid.counts, grid.spacing):
        m = n - 2
        mats.append(sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / h**2)
    if grid.dim == 1:
        return mats[0].tocsr()
    Ix, Iy = sp.identity(grid.counts[0] - 2), sp.identity(grid.counts[1] - 2)
    return (sp.kron(mats[0], Iy) + sp.kron(Ix, mats[1])).tocsr()


def principal_eigenpair(grid: Grid, c: ScalarField, tol: float = 1e-12, max_iter: int = 1000) -> EigenPair:
    """Inverse power iteration for the smallest ``gamma`` with a positive eigenfunction.

    The eigenvalue is the Rayleigh quotient ``<A phi, phi> / <C phi, phi>``.
    ``phi1`` is normalised to sup-norm 1 and positive at its interior maximum.
    """
    if not c.grid.same_as(grid):
        raise EigenError("weight lives on a different grid")
    ci = c.values[grid.interior]
    if np.any(ci < 0):
        raise EigenError("weight must be nonnegative")
    if not np.any(ci > 0):
        raise EigenError("weight vanishes identically; no eigenproblem")
    A = dirichlet_laplacian(grid)
    lu = spla.splu(A.tocsc())
    phi = ci / np.max(ci)
    gamma = math.inf
    for it in range(1, max_iter + 1):
        nxt = lu.solve(ci * phi)
        nxt /= np.max(np.abs(nxt))
        g_new = float(nxt @ (A @ nxt)) / float(nxt @ (ci * nxt))
        res = float(np.max(np.abs(A @ nxt - g_new * ci * nxt)))
        done = abs(g_new - gamma) <= tol * g_new and res <= 100 * tol * g_new
        phi, gamma = nxt, g_new
        if done:
            break
    else:
        raise EigenError(f"inverse iteration stalled after {max_iter} steps")
    j = int(np.argmax(np.abs(phi)))
    phi = phi * np.sign(phi[j])
    if np.any(phi <= 0):
        raise EigenError("principal eigenvector is not positive on the interior")
    full = np.zeros(grid.size)
    full[grid.interior] = phi
    res = float(np.max(np.abs(A @ phi - gamma * ci * phi)))
    return EigenPair(gamma, ScalarField(grid, full), res, it)


@dataclass(frozen=True)
class StrictOrder:
    holds: bool
    epsilon: float

    def as_dict(self) -> dict:
        return {"holds": self.holds, "epsilon": self.epsilon}


def strictly_below(u: ScalarField, v: ScalarField, pair: EigenPair, tol: float = 1e-10, boundary_tol: float = 1e-9) -> StrictOrder:
    """``epsilon = min (v - u) / phi1`` over interior nodes; strict iff ``epsilon > tol``."""
    g = pair.phi1.grid
    if not (u.grid.same_as(g) and v.grid.same_as(g)):
        raise ValueError("fields live on a different grid")
    B = g.boundary
    if np.max(np.abs(u.values[B] - v.values[B]), initial=0.0) > boundary_tol:
        raise ValueError("boundary values differ")
    I = g.interior
    eps = float(np.min((v.values[I] - u.values[I]) / pair.phi1.values[I]))
    return StrictOrder(eps > tol, eps)
