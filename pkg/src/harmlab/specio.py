"""JSON problem specs.

A spec file is a JSON object::

    {
      "grid": {"dim": 1, "counts": [65], "extents": [[0, 1]]},
      "sign": 1,                   # +1 for M+, -1 for M-
      "pucci": [1.0, 2.0],         # ellipticity constants lam <= Lam
      "b": "1 + x",                # coefficient fields: number, expression or {"csv": path}
      "c": 1, "h": -2, "dirichlet": 0,
      "mu": 0.1, "mu_field": null, "k": 1, "beta_growth_C": 1.0,
      "M": null,                   # null, a number (multiple of I) or a d x d array of fields
      "m_growth": 2, "p": null, "q": null, "q1": null,
      "lam": 1.0, "stencil_width": 1,
      "exact": "x*(1-x)*exp(x)"    # optional exact solution
    }

Only ``grid`` is required.  When ``exact`` is given and ``h`` is omitted, the
forcing is manufactured from the exact solution; when ``dirichlet`` is omitted
it defaults to the exact solution on the boundary (else 0).  CSV paths are
relative to the spec file.  Every validation error names the offending key.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .expr import Expression, ExprError
from .field import Grid, GridError, MatrixField, ScalarField, field_from_csv, make_grid
from .ops import ExponentError, ProblemSpec, PucciParams, make_spec, manufactured_forcing

FIELD_KEYS = ("b", "c", "h", "dirichlet", "mu_field")
SCALAR_KEYS = ("mu", "beta_growth_C", "m_growth", "p", "q", "q1", "lam")
INT_KEYS = ("sign", "k", "stencil_width")
KNOWN = set(FIELD_KEYS + SCALAR_KEYS + INT_KEYS + ("grid", "pucci", "M", "exact", "name", "notes"))


class SpecError(ValueError):
    """Invalid spec; ``key`` is a dotted path to the offending entry."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class LoadedSpec:
    spec: ProblemSpec
    exact: Expression | None
    document: dict
    refine: int = 0

    def exact_field(self) -> ScalarField | None:
        if self.exact is None:
            return None
        g = self.spec.grid
        return ScalarField(g, self.exact(*_xy(g)))


def _xy(g: Grid):
    X = g.coords()
    return X if g.dim == 2 else (X[0], 0.0)


def _number(doc, key, allow_none=False, integer=False):
    v = doc.get(key)
    if v is None:
        if allow_none:
            return None
        raise SpecError(key, "missing value")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SpecError(key, f"expected a number, got {type(v).__name__}")
    if integer:
        if int(v) != v:
            raise SpecError(key, f"expected an integer, got {v}")
        return int(v)
    if not math.isfinite(v):
        raise SpecError(key, "must be finite")
    return float(v)


def _grid(doc, refine: int) -> Grid:
    gd = doc.get("grid")
    if not isinstance(gd, dict):
        raise SpecError("grid", "required object with dim, counts, extents")
    for k in ("dim", "counts", "extents"):
        if k not in gd:
            raise SpecError(f"grid.{k}", "missing")
    dim = gd["dim"]
    if dim not in (1, 2) or isinstance(dim, bool):
        raise SpecError("grid.dim", f"must be 1 or 2, got {dim!r}")
    counts, ext = gd["counts"], gd["extents"]
    if not isinstance(counts, list) or len(counts) != dim:
        raise SpecError("grid.counts", f"expected a list of {dim} integers")
    for i, c in enumerate(counts):
        if isinstance(c, bool) or not isinstance(c, int) or c < 3:
            raise SpecError(f"grid.counts[{i}]", f"expected an integer >= 3, got {c!r}")
    if not isinstance(ext, list) or len(ext) != dim:
        raise SpecError("grid.extents", f"expected a list of {dim} [lo, hi] pairs")
    for i, e in enumerate(ext):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in e)):
            raise SpecError(f"grid.extents[{i}]", f"expected [lo, hi], got {e!r}")
    try:
        g = make_grid(dim, counts, ext)
    except GridError as err:
        raise SpecError("grid", str(err)) from None
    for _ in range(refine):
        g = g.refine()
    return g


def _field(doc, key, g: Grid, base_dir: str, refine: int):
    v = doc.get(key)
    if v is None:
        return None
    if isinstance(v, bool):
        raise SpecError(key, "expected a number, expression or {\"csv\": path}")
    if isinstance(v, (int, float)):
        return ScalarField.constant(g, float(v))
    if isinstance(v, str):
        try:
            e = Expression(v)
        except ExprError as err:
            raise SpecError(key, str(err)) from None
        vals = e(*_xy(g))
        if not np.all(np.isfinite(vals)):
            raise SpecError(key, "expression is not finite on the grid")
        return ScalarField(g, vals)
    if isinstance(v, dict) and set(v) == {"csv"}:
        if refine:
            raise SpecError(key, "CSV fields cannot be refined; use an expression")
        path = os.path.join(base_dir, v["csv"])
        try:
            with open(path) as fh:
                return field_from_csv(fh.read(), g)
        except (OSError, ValueError) as err:
            raise SpecError(f"{key}.csv", str(err)) from None
    raise SpecError(key, "expected a number, expression or {\"csv\": path}")


def _matrix(doc, g: Grid, base_dir: str, refine: int):
    v = doc.get("M")
    if v is None:
        return None
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        if v <= 0:
            raise SpecError("M", "multiple of the identity must be positive")
        return MatrixField.identity(g, float(v))
    d = g.dim
    if not (isinstance(v, list) and len(v) == d and all(isinstance(r, list) and len(r) == d for r in v)):
        raise SpecError("M", f"expected a number or a {d} x {d} array")
    vals = np.empty((g.size, d, d))
    for i in range(d):
        for j in range(d):
            f = _field({f"M[{i}][{j}]": v[i][j]}, f"M[{i}][{j}]", g, base_dir, refine)
            if f is None:
                raise SpecError(f"M[{i}][{j}]", "missing entry")
            vals[:, i, j] = f.values
    if not np.allclose(vals, np.swapaxes(vals, 1, 2)):
        raise SpecError("M", "matrix field must be symmetric")
    try:
        return MatrixField(g, vals)
    except ValueError as err:
        raise SpecError("M", str(err)) from None


def _derivatives(e: Expression, d: int):
    names = ("x", "y")[:d]
    d1 = [e.derivative(a) for a in names]
    d2 = [[d1[i].derivative(b) for b in names] for i in range(d)]

    def args(X):
        return X if d == 2 else (X[0], 0.0)

    def u(*X):
        return e(*args(X))

    def grad(*X):
        return np.stack([f(*args(X)) for f in d1], axis=-1)

    def hess(*X):
        return np.stack([np.stack([f(*args(X)) for f in row], axis=-1) for row in d2], axis=-2)

    return u, grad, hess


def build_spec(doc: dict, base_dir: str = ".", refine: int = 0) -> LoadedSpec:
    """Validate ``doc`` and build the :class:`ProblemSpec` on the grid refined ``refine`` times."""
    if not isinstance(doc, dict):
        raise SpecError("<root>", "spec must be a JSON object")
    unknown = sorted(set(doc) - KNOWN)
    if unknown:
        raise SpecError(unknown[0], "unknown key")
    g = _grid(doc, refine)
    kw: dict = {}
    for key in INT_KEYS:
        if key in doc:
            kw[key] = _number(doc, key, integer=True)
    for key in SCALAR_KEYS:
        if doc.get(key) is not None:
            kw[key] = _number(doc, key)
    if "pucci" in doc:
        pv = doc["pucci"]
        if not (isinstance(pv, list) and len(pv) == 2):
            raise SpecError("pucci", "expected [lam, Lam]")
        for i in range(2):
            _number({f"pucci[{i}]": pv[i]}, f"pucci[{i}]")
        try:
            kw["pucci"] = PucciParams(float(pv[0]), float(pv[1]))
        except ValueError as err:
            raise SpecError("pucci", str(err)) from None
    for key in FIELD_KEYS:
        f = _field(doc, key, g, base_dir, refine)
        if f is not None:
            kw[key] = f
    M = _matrix(doc, g, base_dir, refine)
    if M is not None:
        kw["M"] = M
    exact = None
    if doc.get("exact") is not None:
        try:
            exact = Expression(doc["exact"])
        except ExprError as err:
            raise SpecError("exact", str(err)) from None
        if "dirichlet" not in kw:
            kw["dirichlet"] = ScalarField(g, exact(*_xy(g)))
    try:
        spec = make_spec(g, **kw)
    except (ValueError, ExponentError) as err:
        raise SpecError(_guess_key(str(err)), str(err)) from None
    if exact is not None and "h" not in kw:
        spec = spec.with_(h=manufactured_forcing(spec, *_derivatives(exact, g.dim)))
    return LoadedSpec(spec, exact, doc, refine)


def _guess_key(msg: str) -> str:
    # constructor messages start with the field name ("mu must ...")
    first = msg.split(" ", 1)[0]
    if first in KNOWN:
        return first
    if "p <= q" in msg:
        return "p"
    return "<root>"


def load_spec(path: str, refine: int = 0) -> LoadedSpec:
    """Read and validate a spec file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise SpecError("<file>", str(err)) from None
    except json.JSONDecodeError as err:
        raise SpecError("<json>", f"line {err.lineno} column {err.colno}: {err.msg}") from None
    return build_spec(doc, os.path.dirname(os.path.abspath(path)), refine)
