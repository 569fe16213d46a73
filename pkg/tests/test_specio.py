import glob
import json
import os

import numpy as np
import pytest

from harmlab.field import ScalarField, field_to_csv, make_grid, sup_norm
from harmlab.fixpoint import newton_solve
from harmlab.specio import SpecError, build_spec, load_spec

GRID = {"dim": 1, "counts": [17], "extents": [[0, 1]]}


def test_bundled_specs_load(specs_dir):
    paths = sorted(glob.glob(os.path.join(specs_dir, "*.json")))
    assert len(paths) >= 6
    for p in paths:
        assert load_spec(p).spec.grid.size > 0


def test_manufactured_spec_converges_at_second_order(specs_dir):
    errs = []
    for r in range(3):
        loaded = load_spec(os.path.join(specs_dir, "manufactured.json"), refine=r)
        u = newton_solve(loaded.spec).solution
        errs.append(sup_norm(u - loaded.exact_field()))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8), orders


def test_fields_from_numbers_expressions_and_csv(tmp_path):
    g = make_grid(1, [17], [0, 1])
    (tmp_path / "b.csv").write_text(field_to_csv(ScalarField.from_function(g, lambda x: 1 + x * x)))
    doc = {"grid": GRID, "b": {"csv": "b.csv"}, "c": "2 + sin(pi * x)", "h": 3, "mu": 0.2, "pucci": [1, 2], "M": 1.5}
    (tmp_path / "s.json").write_text(json.dumps(doc))
    spec = load_spec(str(tmp_path / "s.json")).spec
    x = g.coords()[0]
    np.testing.assert_allclose(spec.b.values, 1 + x * x, rtol=1e-15)
    np.testing.assert_allclose(spec.c.values, 2 + np.sin(np.pi * x))
    assert np.all(spec.h.values == 3.0)
    assert spec.M.mu2 == 1.5
    with pytest.raises(SpecError) as err:
        load_spec(str(tmp_path / "s.json"), refine=1)
    assert err.value.key == "b"


def test_matrix_of_expressions():
    doc = {"grid": {"dim": 2, "counts": [5, 5], "extents": [[0, 1], [0, 1]]}, "M": [["2 + x", 0.5], [0.5, 1]]}
    M = build_spec(doc).spec.M
    assert M.values.shape == (25, 2, 2)
    assert M.values[-1, 0, 0] == 3.0


def test_dirichlet_defaults_to_exact_solution():
    loaded = build_spec({"grid": GRID, "exact": "1 + x^2"})
    b = loaded.spec.grid.boundary
    np.testing.assert_allclose(loaded.spec.dirichlet.values[b], [1.0, 2.0])
    # -u'' = h with u = 1 + x^2 gives h = -2
    np.testing.assert_allclose(loaded.spec.h.values, -2.0)


def test_refine_doubles_resolution():
    loaded = build_spec({"grid": GRID, "h": "x"}, refine=2)
    assert loaded.spec.grid.counts == (65,)
    assert loaded.refine == 2


@pytest.mark.parametrize(
    "doc, key",
    [
        ({"grid": GRID, "bogus": 1}, "bogus"),
        ({}, "grid"),
        ({"grid": {"dim": 1, "counts": [17]}}, "grid.extents"),
        ({"grid": {"dim": 3, "counts": [17], "extents": [[0, 1]]}}, "grid.dim"),
        ({"grid": {"dim": 1, "counts": [2], "extents": [[0, 1]]}}, "grid.counts[0]"),
        ({"grid": {"dim": 1, "counts": [17], "extents": [[1, 0]]}}, "grid"),
        ({"grid": {"dim": 1, "counts": [17], "extents": [0, 1]}}, "grid.extents"),
        ({"grid": {"dim": 1, "counts": [17], "extents": [[0, "a"]]}}, "grid.extents[0]"),
        ({"grid": GRID, "b": "1 + "}, "b"),
        ({"grid": GRID, "c": True}, "c"),
        ({"grid": GRID, "h": "1 / (x - x)"}, "h"),
        ({"grid": GRID, "mu": "big"}, "mu"),
        ({"grid": GRID, "mu": -1}, "mu"),
        ({"grid": GRID, "k": 2}, "k"),
        ({"grid": GRID, "k": 1.5}, "k"),
        ({"grid": GRID, "b": -1}, "b"),
        ({"grid": GRID, "pucci": [2, 1]}, "pucci"),
        ({"grid": GRID, "pucci": [1, "x"]}, "pucci[1]"),
        ({"grid": GRID, "p": 3, "q": 2}, "p"),
        ({"grid": GRID, "M": -1}, "M"),
        ({"grid": {"dim": 2, "counts": [5, 5], "extents": [[0, 1], [0, 1]]}, "M": [[1, 0.5], [0, 1]]}, "M"),
        ({"grid": GRID, "exact": "sin(x"}, "exact"),
        ({"grid": GRID, "b": {"csv": "missing.csv"}}, "b.csv"),
        ([], "<root>"),
    ],
)
def test_errors_name_the_key(doc, key):
    with pytest.raises(SpecError) as err:
        build_spec(doc)
    assert err.value.key == key
    assert str(err.value).startswith(f"{key}:")


def test_file_level_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": ')
    with pytest.raises(SpecError) as err:
        load_spec(str(bad))
    assert err.value.key == "<json>"
    with pytest.raises(SpecError) as err:
        load_spec(str(tmp_path / "nope.json"))
    assert err.value.key == "<file>"
