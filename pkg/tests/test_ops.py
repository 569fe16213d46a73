import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from harmlab.field import GridError, MatrixField, ScalarField, make_grid
from harmlab.ops import (
    BoundaryMismatch,
    DiscreteProblem,
    ExponentError,
    PucciParams,
    make_spec,
    manufactured_forcing,
    pucci_exact,
    pucci_exact_batch,
    pucci_fd,
    quad_form,
    residual,
    resolve_exponents,
)

sym2 = arrays(float, (2, 2), elements=st.floats(-10, 10)).map(lambda a: a + a.T)


def _brute_pucci(X, P, sign, n=4000, seed=0):
    # sup / inf of tr(AX) over random A with spectrum in [lam, Lam]
    rng = np.random.default_rng(seed)
    d = X.shape[0]
    best = -np.inf if sign > 0 else np.inf
    for _ in range(n):
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        a = rng.choice([P.lam, P.Lam], size=d)
        v = np.trace(Q @ np.diag(a) @ Q.T @ X)
        best = max(best, v) if sign > 0 else min(best, v)
    return best


@pytest.mark.parametrize("sign", [1, -1])
def test_pucci_exact_is_extremal_trace(sign):
    P = PucciParams(0.5, 2.0)
    X = np.array([[1.0, 2.0], [2.0, -3.0]])
    exact = pucci_exact(np.linalg.eigvalsh(X), P, sign)
    brute = _brute_pucci(X, P, sign)
    if sign > 0:
        assert brute <= exact + 1e-12
    else:
        assert brute >= exact - 1e-12
    assert abs(brute - exact) < 1e-2 * abs(exact)


@settings(max_examples=50)
@given(sym2, st.floats(0.1, 2.0), st.floats(1.0, 4.0))
def test_pucci_properties(X, lam, ratio):
    P = PucciParams(lam, lam * ratio)
    e = np.linalg.eigvalsh(X)
    mp, mm = pucci_exact(e, P, 1), pucci_exact(e, P, -1)
    assert mm <= mp + 1e-12
    assert mm == pytest.approx(-pucci_exact(-e, P, 1), abs=1e-12)
    assert P.lam * e.sum() - 1e-9 <= mp or e.sum() < 0
    np.testing.assert_allclose(pucci_exact_batch(e[None, :], P, 1), [mp])


def test_pucci_laplacian_case_is_trace():
    P = PucciParams(1.0, 1.0)
    assert P.is_laplacian
    assert pucci_exact([3.0, -5.0], P, 1) == -2.0
    with pytest.raises(ValueError):
        PucciParams(2.0, 1.0)


def test_pucci_fd_exact_on_axis_aligned_quadratics():
    P = PucciParams(1.0, 2.0)
    g1 = make_grid(1, [9], [0, 1])
    u = ScalarField.from_function(g1, lambda x: -x * x)
    I = g1.interior
    np.testing.assert_allclose(pucci_fd(u, P, 1).values[I], -2.0)
    np.testing.assert_allclose(pucci_fd(u, P, -1).values[I], -4.0)
    g2 = make_grid(2, [9, 9], [(0, 1), (0, 1)])
    v = ScalarField.from_function(g2, lambda x, y: x * x - 0.5 * y * y)
    # eigenvalues 2 and -1
    for width in (1, 2):
        np.testing.assert_allclose(pucci_fd(v, P, 1, width).values[g2.interior], 2 * 2 - 1 * 1, atol=1e-9)
        np.testing.assert_allclose(pucci_fd(v, P, -1, width).values[g2.interior], 1 * 2 - 2 * 1, atol=1e-9)


def test_quad_form_matches_centered_gradient():
    g = make_grid(2, [7, 7], [(0, 1), (0, 1)])
    u = ScalarField.from_function(g, lambda x, y: 2 * x + 3 * y)
    M = MatrixField(g, [[2.0, 0.5], [0.5, 1.0]])
    Du = np.array([2.0, 3.0])
    np.testing.assert_allclose(quad_form(u, M).values[g.interior], Du @ np.array([[2.0, 0.5], [0.5, 1.0]]) @ Du)


@pytest.mark.parametrize(
    "p, q, q1, m, n, case, r",
    [
        (2.0, math.inf, math.inf, 2.0, 1, "i", 4.0),
        (2.0, 3.0, math.inf, 2.0, 1, "ii", 6.0),
        (2.0, 2.0, math.inf, 2.0, 1, "ii", math.inf),
        (2.0, 4.0, math.inf, 2.0, 1, "iii", 4.0),
        (3.0, 4.0, math.inf, 3.0, 2, "ii", 12.0),
        (3.0, 5.0, math.inf, 3.0, 2, "iii", 9.0),
    ],
)
def test_exponent_cases(p, q, q1, m, n, case, r):
    plan = resolve_exponents(p, q, q1, m, n)
    assert plan.case == case
    assert plan.r == r


@pytest.mark.parametrize("args", [(1.0, 2.0, 5.0, 2.0, 1), (2.0, 1.5, 5.0, 2.0, 1), (3.0, 4.0, 2.0, 2.0, 1), (2.0, 3.0, 5.0, 1.0, 1)])
def test_exponent_errors(args):
    with pytest.raises(ExponentError):
        resolve_exponents(*args)


def test_spec_validation():
    g = make_grid(1, [9], [0, 1])
    with pytest.raises(ValueError, match="k must be"):
        make_spec(g, k=2)
    with pytest.raises(ValueError, match="mu must"):
        make_spec(g, mu=-1.0)
    with pytest.raises(ValueError, match="b must"):
        make_spec(g, b=-1.0)
    with pytest.raises(ValueError, match="sign"):
        make_spec(g, sign=0)
    with pytest.raises(GridError):
        make_spec(g, c=ScalarField.constant(g.refine(), 1.0))
    spec = make_spec(g, pucci=(1, 2), b=lambda x: x)
    assert spec.p == 2.0
    assert spec.pucci.Lam == 2.0


def test_residual_sign_convention_and_boundary_check():
    g = make_grid(1, [17], [0, 1])
    spec = make_spec(g, h=2.0)  # -u'' = 2 has solution x(1 - x)
    u = ScalarField.from_function(g, lambda x: x * (1 - x))
    np.testing.assert_allclose(residual(spec, u).values, 0.0, atol=1e-10)
    below = ScalarField.from_function(g, lambda x: 0.5 * x * (1 - x))
    assert np.all(residual(spec, below).values[g.interior] < 0)
    with pytest.raises(BoundaryMismatch):
        residual(spec, u + 1.0)


def test_manufactured_forcing_closed_form():
    g = make_grid(1, [9], [0, 1])
    spec = make_spec(g, pucci=(1.0, 2.0), b=1.0, mu=0.5, c=1.0, lam=3.0)
    x = g.coords()[0]
    u = x * (1 - x)
    h = manufactured_forcing(spec, lambda x: x * (1 - x), lambda x: (1 - 2 * x)[:, None], lambda x: np.full((x.size, 1, 1), -2.0))
    expected = -(-2.0 * 1.0 + np.abs(1 - 2 * x) + 0.5 * u * (1 - 2 * x) ** 2 + 3.0 * u)
    np.testing.assert_allclose(h.values, expected, rtol=1e-14)


def test_scheme_is_monotone_without_gradient_nonlinearity():
    # off-diagonal Jacobian entries <= 0 means the residual is nonincreasing in neighbours
    g = make_grid(2, [9, 9], [(0, 1), (0, 1)])
    rng = np.random.default_rng(3)
    u = ScalarField(g, rng.normal(size=g.size))
    for width in (1, 2):
        spec = make_spec(g, pucci=(1.0, 3.0), b=2.0, c=1.0, lam=1.0, dirichlet=u, stencil_width=width)
        _, J, _ = DiscreteProblem(spec).jacobian(u.values)
        off = J - np.diag(J.diagonal())
        assert off.max() <= 1e-12


def test_jacobian_matches_finite_differences():
    g = make_grid(1, [17], [0, 1])
    spec = make_spec(g, pucci=(1.0, 2.0), b=0.5, c=1.0, mu=0.7, k=3, lam=2.0, h=1.0)
    dp = DiscreteProblem(spec)
    x = g.coords()[0]
    u = np.sin(np.pi * x) * 0.8
    _, J, dlam = dp.jacobian(u)
    J = J.toarray()
    eps = 1e-7
    for j in (2, 7, 11):
        du = np.zeros(g.size)
        du[g.interior[j]] = eps
        col = (dp.residual(u + du) - dp.residual(u - du)) / (2 * eps)
        np.testing.assert_allclose(J[:, j], col, atol=1e-5)
    np.testing.assert_allclose(dlam, -u[g.interior])
