import math

import numpy as np
import pytest

from harmlab.field import ScalarField, make_grid, sup_norm
from harmlab.fixpoint import (
    EmbeddingConstants,
    SolverConfig,
    data_norm,
    estimate_constants,
    newton_solve,
    picard_solve,
    smallness_check,
    solve_frozen,
)
from harmlab.ops import PucciParams, make_spec, residual


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(theta=1.5)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)


def test_frozen_pucci_solve_recovers_quadratic():
    # M+(u'') = -2 with lam = 1 is solved by x(1 - x)
    g = make_grid(1, [17], [0, 1])
    spec = make_spec(g, pucci=(1.0, 2.0))
    u = solve_frozen(spec, -2.0)
    np.testing.assert_allclose(u.values, g.coords()[0] * (1 - g.coords()[0]), atol=1e-13)
    # convex data activate Lam instead
    v = solve_frozen(spec, 4.0)
    np.testing.assert_allclose(v.values, -g.coords()[0] * (1 - g.coords()[0]), atol=1e-13)


def test_frozen_solve_2d_axis_aligned_quadratic():
    g = make_grid(2, [9, 9], [(0, 1), (0, 1)])
    exact = ScalarField.from_function(g, lambda x, y: x * x - 0.5 * y * y + x * 0.3)
    spec = make_spec(g, pucci=(1.0, 2.0), dirichlet=exact)
    u = solve_frozen(spec, 3.0)  # M+ = 2 * 2 - 1 * 1
    np.testing.assert_allclose(u.values, exact.values, atol=1e-12)


@pytest.mark.parametrize("sign", [1, -1])
def test_linear_problem_solved_exactly(sign):
    # lam = 0, mu = 0 and a quadratic exact solution: the scheme is exact
    g = make_grid(1, [21], [0, 2])
    x = g.coords()[0]
    exact = ScalarField(g, 1 + x - 0.75 * x * x)
    spec = make_spec(g, sign=sign, pucci=(0.5, 2.0), h=0.75 if sign > 0 else 3.0, dirichlet=exact)
    for rep in (newton_solve(spec), picard_solve(spec)):
        assert rep.converged
        np.testing.assert_allclose(rep.solution.values, exact.values, atol=1e-11)


def _nonlinear_spec(n=33):
    g = make_grid(1, [n], [0, 1])
    return make_spec(g, pucci=(1.0, 2.0), b=lambda x: 1 + x, c=1.0, mu=0.1, k=1, lam=1.0, h=lambda x: 2 + np.sin(3 * x))


def test_picard_and_newton_agree():
    spec = _nonlinear_spec()
    cfg = SolverConfig(tol=1e-10)
    a, b = picard_solve(spec, cfg), newton_solve(spec, None, cfg)
    assert a.converged and b.converged
    assert a.final_residual <= cfg.tol and b.final_residual <= cfg.tol
    assert sup_norm(a.solution - b.solution) <= 2 * cfg.tol
    assert b.iterations < a.iterations
    assert np.max(np.abs(residual(spec, b.solution).values)) <= cfg.tol
    assert set(a.nagumo) == {"sup_norm", "second_difference_lp", "h_lp", "ratio"}


def test_newton_converges_quadratically():
    spec = _nonlinear_spec(65)
    rep = newton_solve(spec, None, SolverConfig(tol=1e-11))
    h = [r for r in rep.residual_history if r > 1e-11]
    assert rep.converged
    assert h[-1] < h[-2] ** 1.5


def test_picard_reports_divergence_instead_of_raising():
    g = make_grid(1, [33], [0, 1])
    spec = make_spec(g, c=1.0, mu=5.0, lam=0.0, h=30.0)
    rep = picard_solve(spec, SolverConfig(max_iter=40), radius=1.0)
    assert not rep.converged
    assert rep.reason
    assert rep.nagumo == {}


def test_report_dict():
    rep = newton_solve(_nonlinear_spec(17))
    d = rep.as_dict()
    assert d["method"] == "newton" and d["converged"]
    assert d["sup_norm"] == pytest.approx(rep.sup_norm)
    assert len(d["residual_history"]) == rep.iterations + 1


def test_embedding_constants_grow_with_probe_family():
    g = make_grid(1, [33], [0, 1])
    small = estimate_constants(g, PucciParams(1.0, 2.0), 0.5, n_random=2)
    large = estimate_constants(g, PucciParams(1.0, 2.0), 0.5, n_random=8)
    assert large.probes > small.probes
    for name in ("C1", "C_tilde", "D"):
        assert getattr(large, name) >= getattr(small, name) > 0
    assert large.as_dict()["surrogate"] is True


def test_smallness_check_scaling():
    g = make_grid(1, [33], [0, 1])
    consts = EmbeddingConstants(C1=1.0, C_tilde=1.0, D=1.0)
    spec = make_spec(g, c=0.01, mu=1e-4, h=1.0)
    rep = smallness_check(spec, consts)
    eps1 = 3.0 ** -3
    assert rep.eps1 == pytest.approx(eps1)
    # ||c||_inf-type bound with q = inf: ||c||_q < eps1^(1/3) / |Omega|^(1/p)
    assert rep.c_bound == pytest.approx(eps1 ** (1 / 3))
    assert rep.mu_lhs == pytest.approx(1e-4 * data_norm(spec) ** 2)
    assert rep.passed
    big = smallness_check(spec.with_(mu=10.0), consts)
    assert not big.mu_ok and big.c_ok and not big.passed
    assert rep.as_dict()["passed"] is True


def test_data_norm_components():
    g = make_grid(1, [33], [0, 1])
    spec = make_spec(g, h=2.0)
    assert data_norm(spec) == pytest.approx(2.0 * (33 / 32) ** 0.5)
    assert math.isfinite(data_norm(spec.with_(dirichlet=ScalarField.constant(g, 1.0))))
