"""Structured grids, nodal fields and the discrete norms used throughout.

Grids are uniform tensor meshes on an interval (1D) or an axis-aligned
rectangle (2D).  Nodes are stored flat in C order (``ij`` indexing), so in
2D the node ``(i, j)`` has flat index ``i * ny + j``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class GridError(ValueError):
    """Raised for malformed grids or mismatched fields."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node-centred mesh.

    Attributes
    ----------
    dim : int
        1 or 2.
    counts : tuple of int
        Nodes per axis, boundary included.
    extents : tuple of (float, float)
        ``(lo, hi)`` per axis.
    """

    dim: int
    counts: tuple
    extents: tuple
    spacing: tuple = field(init=False)
    interior: np.ndarray = field(init=False, repr=False)
    boundary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.counts) != self.dim or len(self.extents) != self.dim:
            raise GridError("counts/extents length must equal dim")
        for n in self.counts:
            if int(n) != n or n < 3:
                raise GridError(f"node count per axis must be >= 3, got {n}")
        for lo, hi in self.extents:
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
                raise GridError(f"degenerate extent ({lo}, {hi})")
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))
        object.__setattr__(self, "extents", tuple((float(a), float(b)) for a, b in self.extents))
        object.__setattr__(
            self, "spacing", tuple((b - a) / (n - 1) for (a, b), n in zip(self.extents, self.counts))
        )
        mask = np.ones(self.counts, dtype=bool)
        if self.dim == 1:
            mask[[0, -1]] = False
        else:
            mask[[0, -1], :] = False
            mask[:, [0, -1]] = False
        flat = mask.ravel()
        inner = np.flatnonzero(flat)
        outer = np.flatnonzero(~flat)
        inner.setflags(write=False)
        outer.setflags(write=False)
        object.__setattr__(self, "interior", inner)
        object.__setattr__(self, "boundary", outer)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))

    @property
    def h(self) -> float:
        """Largest spacing; the refinement parameter."""
        return max(self.spacing)

    def axes(self) -> list:
        return [np.linspace(a, b, n) for (a, b), n in zip(self.extents, self.counts)]

    def coords(self) -> tuple:
        """Flat coordinate arrays, one per axis."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return tuple(m.ravel() for m in mesh)

    def strides(self) -> tuple:
        if self.dim == 1:
            return (1,)
        return (self.counts[1], 1)

    def is_interior_mask(self) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        m[self.interior] = True
        return m

    def same_as(self, other: "Grid") -> bool:
        return (
            self.dim == other.dim
            and self.counts == other.counts
            and np.allclose(np.ravel(self.extents), np.ravel(other.extents), rtol=0, atol=1e-14)
        )

    def refine(self) -> "Grid":
        """Halve the spacing on every axis."""
        return Grid(self.dim, tuple(2 * n - 1 for n in self.counts), self.extents)


def make_grid(dim: int, counts: Sequence[int], extents: Sequence) -> Grid:
    """Build a :class:`Grid`.

    ``extents`` may be given as ``[lo, hi]`` in 1D or as a list of pairs.

    >>> g = make_grid(1, [5], [0, 1])
    >>> g.spacing, len(g.interior)
    ((0.25,), 3)
    """
    ext = list(extents)
    if dim == 1 and len(ext) == 2 and np.isscalar(ext[0]):
        ext = [tuple(ext)]
    try:
        ext = tuple(tuple(e) for e in ext)
    except TypeError:
        raise GridError(f"extents must be (lo, hi) pairs, got {extents!r}") from None
    return Grid(int(dim), tuple(counts), ext)


class ScalarField:
    """One finite real value per grid node (read-only)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        vals = np.broadcast_to(np.asarray(values, dtype=float), (grid.size,)) if np.ndim(values) == 0 \
            else np.asarray(values, dtype=float).ravel()
        if vals.shape != (grid.size,):
            raise GridError(f"expected {grid.size} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise GridError("field values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", _frozen(vals))

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "ScalarField":
        """Sample ``fn(x)`` (1D) or ``fn(x, y)`` (2D) at every node."""
        vals = np.broadcast_to(np.asarray(fn(*grid.coords()), dtype=float), (grid.size,))
        return cls(grid, vals)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.size, float(value)))

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior]

    def boundary_values(self) -> np.ndarray:
        return self.values[self.grid.boundary]

    def reshape(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if not other.grid.same_as(self.grid):
                raise GridError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __repr__(self):
        return f"ScalarField(n={self.grid.size}, min={self.values.min():.6g}, max={self.values.max():.6g})"


class MatrixField:
    """Symmetric matrix per node with uniform ellipticity bounds.

    In 1D each "matrix" is a positive scalar.  ``mu1``/``mu2`` default to the
    extreme eigenvalues over the grid; explicitly supplied bounds are checked.
    """

    __slots__ = ("grid", "values", "mu1", "mu2")

    def __init__(self, grid: Grid, values, mu1: float | None = None, mu2: float | None = None):
        d = grid.dim
        vals = np.asarray(values, dtype=float)
        if vals.shape == (d, d) or (d == 1 and vals.ndim == 0):
            vals = np.broadcast_to(vals.reshape(d, d), (grid.size, d, d))
        vals = vals.reshape(grid.size, d, d)
        if not np.allclose(vals, np.swapaxes(vals, 1, 2), atol=1e-12):
            raise GridError("matrix field must be symmetric")
        eig = np.linalg.eigvalsh(vals)
        lo, hi = float(eig.min()), float(eig.max())
        mu1 = lo if mu1 is None else float(mu1)
        mu2 = hi if mu2 is None else float(mu2)
        if not (0 < mu1 <= mu2):
            raise GridError(f"need 0 < mu1 <= mu2, got {mu1}, {mu2}")
        if lo < mu1 * (1 - 1e-12) or hi > mu2 * (1 + 1e-12):
            raise GridError(f"eigenvalues [{lo}, {hi}] outside [{mu1}, {mu2}]")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)

    def __setattr__(self, name, value):
        raise AttributeError("MatrixField is immutable")

    @classmethod
    def identity(cls, grid: Grid, scale: float = 1.0) -> "MatrixField":
        return cls(grid, scale * np.eye(grid.dim), scale, scale)

    def __repr__(self):
        return f"MatrixField(n={self.grid.size}, mu1={self.mu1:.6g}, mu2={self.mu2:.6g})"


def _vals(f) -> np.ndarray:
    return f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)


def sup_norm(f: ScalarField) -> float:
    v = _vals(f)
    return float(np.max(np.abs(v))) if v.size else 0.0


def lp_norm(f: ScalarField, p: float) -> float:
    """Riemann-sum ``L^p`` norm over all nodes; ``p = inf`` gives the sup norm."""
    if p == np.inf:
        return sup_norm(f)
    if not p >= 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    v = np.abs(_vals(f))
    if not v.any():
        return 0.0
    # scale first so large p cannot overflow
    top = v.max()
    return float(top * (f.grid.cell_volume * np.sum((v / top) ** p)) ** (1.0 / p))


def boundary_max(f: ScalarField) -> float:
    return float(np.max(f.values[f.grid.boundary]))


def interior_max(f: ScalarField) -> float:
    return float(np.max(f.values[f.grid.interior]))


def centered_gradient(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Centered differences at interior nodes, shape ``(n_interior, dim)``."""
    idx = grid.interior
    out = np.empty((idx.size, grid.dim))
    for a, (s, h) in enumerate(zip(grid.strides(), grid.spacing)):
        out[:, a] = (u[idx + s] - u[idx - s]) / (2 * h)
    return out


def hessian_fd(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Centered finite-difference Hessian at interior nodes, shape ``(n, dim, dim)``."""
    idx = grid.interior
    d = grid.dim
    H = np.empty((idx.size, d, d))
    st, hs = grid.strides(), grid.spacing
    for a in range(d):
        H[:, a, a] = (u[idx + st[a]] - 2 * u[idx] + u[idx - st[a]]) / hs[a] ** 2
    if d == 2:
        sx, sy = st
        hx, hy = hs
        uxy = (u[idx + sx + sy] - u[idx + sx - sy] - u[idx - sx + sy] + u[idx - sx - sy]) / (4 * hx * hy)
        H[:, 0, 1] = H[:, 1, 0] = uxy
    return H


def _interior_field(grid: Grid, vals: np.ndarray) -> ScalarField:
    full = np.zeros(grid.size)
    full[grid.interior] = vals
    return ScalarField(grid, full)


def w1r_norm(f: ScalarField, r: float) -> float:
    """Discrete ``W^{1,r}`` surrogate: ``|f|_r + ||Df||_r`` with centered gradients."""
    g = f.grid
    grad = np.linalg.norm(centered_gradient(g, f.values), axis=1)
    return lp_norm(f, r) + lp_norm(_interior_field(g, grad), r)


def w2p_norm(f: ScalarField, p: float) -> float:
    """Discrete ``W^{2,p}`` surrogate: ``L^p`` norms of the field, its gradient and Hessian."""
    g = f.grid
    grad = np.linalg.norm(centered_gradient(g, f.values), axis=1)
    hess = np.sqrt(np.sum(hessian_fd(g, f.values) ** 2, axis=(1, 2)))
    return lp_norm(f, p) + lp_norm(_interior_field(g, grad), p) + lp_norm(_interior_field(g, hess), p)


def field_to_csv(f: ScalarField) -> str:
    """Serialise as CSV with columns ``x[,y],value`` and 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = ["x", "y"][: f.grid.dim]
    w.writerow(names + ["value"])
    cols = f.grid.coords()
    for i in range(f.grid.size):
        w.writerow([f"{c[i]:.17g}" for c in cols] + [f"{f.values[i]:.17g}"])
    return buf.getvalue()


def field_from_csv(text: str, grid: Grid | None = None) -> ScalarField:
    """Parse CSV written by :func:`field_to_csv`.

    Without ``grid`` the mesh is reconstructed from the distinct coordinates.
    """
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    data = np.array([[float(x) for x in r] for r in body])
    dim = len(header) - 1
    if grid is None:
        axes = [np.unique(data[:, a]) for a in range(dim)]
        grid = make_grid(dim, [len(a) for a in axes], [(a[0], a[-1]) for a in axes])
    if data.shape[0] != grid.size:
        raise GridError(f"CSV has {data.shape[0]} rows, grid has {grid.size} nodes")
    coords = np.column_stack(grid.coords())
    if not np.allclose(coords, data[:, :dim], atol=1e-9 * max(1.0, np.abs(coords).max())):
        raise GridError("CSV node coordinates do not match the grid")
    return ScalarField(grid, data[:, dim])
