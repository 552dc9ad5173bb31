import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricflow import divergence, functional, parse_integrand
from metricflow.certify import brute_force_resolvent
from metricflow.corpus import random_graph
from metricflow.energies import fenchel_gap
from metricflow.resolvent import (
    ConvergenceError,
    ResolventProblem,
    dual_value,
    operator_norm,
    primal_dual_gap,
    primal_value,
    resolvent,
    solve_resolvent,
)
from metricflow.space import differential

from conftest import ALL_SPECS


def test_heat_closed_form(pair):
    sol = resolvent(pair, parse_integrand("p:2"), [0.0, 2.0], 1.0, tol=1e-12)
    np.testing.assert_allclose(sol.u, [2 / 3, 4 / 3], atol=1e-10)
    np.testing.assert_allclose(sol.X, [2 / 3], atol=1e-10)
    assert sol.converged and sol.max_residual <= 1e-10


@pytest.mark.parametrize("spec", ALL_SPECS)
@pytest.mark.parametrize("tau", [0.1, 1.0, 7.0])
def test_constant_datum_is_fixed(spec, tau, graphs):
    for space in graphs:
        g = np.full(space.n, -0.3)
        sol = resolvent(space, parse_integrand(spec), g, tau)
        np.testing.assert_array_equal(sol.u, g)
        assert sol.iterations == 0
        assert sol.max_residual == 0.0


def test_one_p_closed_form(pair):
    sol = resolvent(pair, parse_integrand("1p:2"), [0.0, 2.0], 1.0, tol=1e-12)
    np.testing.assert_allclose(sol.u, [1.0, 1.0], atol=1e-10)
    np.testing.assert_allclose(sol.X, [1.0], atol=1e-10)
    np.testing.assert_allclose(sol.X1, [0.0], atol=1e-9)
    np.testing.assert_allclose(sol.X2, [1.0], atol=1e-9)


def test_primal_dual_gap_examples(pair):
    I = parse_integrand("p:2")
    g = np.array([0.0, 2.0])
    assert primal_dual_gap(pair, I, [2 / 3, 4 / 3], [2 / 3], g, 1.0) <= 1e-10
    # u = g, X = 0: the gap is E(dg)
    assert primal_dual_gap(pair, I, g, [0.0], g, 1.0) == pytest.approx(functional(pair, I, g).value)
    assert primal_dual_gap(pair, I, [1.0, 1.0], [0.0], [1.0, 1.0], 1.0) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(ALL_SPECS), st.sampled_from([0.1, 1.0, 3.0]))
def test_gap_decomposition(seed, spec, tau):
    """P(u) - D(X) = sum_e m FY-gap + |u - g - tau div X|^2 / (2 tau) >= 0."""
    rng = np.random.default_rng(seed)
    space = random_graph(int(rng.integers(2, 7)), seed % 997)
    I = parse_integrand(spec)
    u, g = rng.normal(size=(2, space.n))
    X = rng.normal(size=space.n_edges)
    r = u - g - tau * divergence(space, X)
    expected = float(np.dot(space.m, fenchel_gap(I, differential(space, u), X))) + float(np.dot(space.nu, r * r)) / (2 * tau)
    gap = primal_dual_gap(space, I, u, X, g, tau)
    assert gap == pytest.approx(expected, rel=1e-9, abs=1e-11)
    assert gap >= -1e-12
    assert dual_value(space, I, X, g, tau) <= primal_value(space, I, u, g, tau) + 1e-12


@pytest.mark.parametrize("spec", ALL_SPECS)
@pytest.mark.parametrize("tau", [0.1, 1.0])
def test_oracle_equivalence(spec, tau, rng):
    I = parse_integrand(spec)
    for n, seed in [(3, 1), (5, 2)]:
        space = random_graph(n, seed)
        g = rng.uniform(-1, 1, n)
        sol = resolvent(space, I, g, tau)
        assert np.abs(sol.u - brute_force_resolvent(space, I, g, tau)).max() <= 1e-6


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_certificate_and_invariants(spec, rng, graphs):
    I = parse_integrand(spec)
    for space in graphs:
        g = rng.uniform(-1, 1, space.n)
        tau = 0.5
        sol = resolvent(space, I, g, tau)
        assert sol.converged
        assert np.abs(divergence(space, sol.X) - (sol.u - g) / tau).max() <= 1e-9
        assert fenchel_gap(I, differential(space, sol.u), sol.X).max() <= 1e-9
        assert abs(np.dot(space.nu, sol.u) - np.dot(space.nu, g)) <= 1e-10
        pv = primal_value(space, I, sol.u, g, tau)
        assert pv <= functional(space, I, g).value + 1e-12
        assert functional(space, I, sol.u).value <= functional(space, I, g).value + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(ALL_SPECS), st.sampled_from([0.1, 1.0]))
def test_l2_contraction_and_order(seed, spec, tau):
    rng = np.random.default_rng(seed)
    space = random_graph(int(rng.integers(2, 7)), seed % 991)
    I = parse_integrand(spec)
    g1 = rng.uniform(-1, 1, space.n)
    g2 = g1 + rng.uniform(0, 0.5, space.n)
    u1 = resolvent(space, I, g1, tau).u
    u2 = resolvent(space, I, g2, tau).u
    dn = lambda w: float(np.sqrt(np.dot(space.nu, w * w)))
    assert dn(u1 - u2) <= dn(g1 - g2) + 1e-10
    assert (u1 <= u2 + 1e-10).all()


def test_operator_norm_bounds(graphs):
    for space in graphs:
        L = np.zeros((space.n, space.n))
        for i in range(space.n):
            e = np.zeros(space.n)
            e[i] = 1.0
            L[:, i] = -divergence(space, differential(space, e))
        exact = np.sqrt(np.max(np.linalg.eigvals(L).real))
        est = operator_norm(space)
        assert exact <= est <= 1.05 * exact


def test_convergence_failure_reports_best_iterate(rng):
    space = random_graph(6, 4)
    g = rng.uniform(-1, 1, space.n)
    problem = ResolventProblem(space, parse_integrand("p:1.5"), g, 1.0, tol=1e-9, max_iter=5)
    with pytest.raises(ConvergenceError) as info:
        solve_resolvent(problem)
    sol = info.value.solution
    assert not sol.converged and sol.iterations == 5
    assert sol.max_residual > 1e-9
    sol2 = solve_resolvent(problem, raise_on_failure=False)
    np.testing.assert_array_equal(sol.u, sol2.u)


@pytest.mark.parametrize("bad", [dict(tau=0.0), dict(tau=-1.0), dict(tol=0.0), dict(max_iter=0)])
def test_problem_validation(pair, bad):
    kw = dict(tau=1.0, tol=1e-9, max_iter=10) | bad
    with pytest.raises(ValueError):
        ResolventProblem(pair, parse_integrand("p:2"), [0.0, 1.0], **kw)


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_backends_agree(spec, rng):
    pytest.importorskip("metricflow._ckernel")
    space = random_graph(5, 12)
    g = rng.uniform(-1, 1, space.n)
    I = parse_integrand(spec)
    a = resolvent(space, I, g, 1.0, backend="cython")
    b = resolvent(space, I, g, 1.0, backend="python")
    assert a.iterations == b.iterations
    np.testing.assert_allclose(a.u, b.u, atol=1e-11)
    np.testing.assert_allclose(a.X, b.X, atol=1e-11)


def test_deterministic(rng):
    space = random_graph(6, 21)
    g = rng.uniform(-1, 1, space.n)
    I = parse_integrand("qp:1.5,3")
    a = resolvent(space, I, g, 0.3)
    b = resolvent(space, I, g, 0.3)
    np.testing.assert_array_equal(a.u, b.u)
    np.testing.assert_array_equal(a.X, b.X)


def test_edgeless_space():
    from metricflow import build_space

    space = build_space([("a", 1.0), ("b", 2.0)], [])
    sol = resolvent(space, parse_integrand("p:2"), [1.0, -1.0], 1.0)
    np.testing.assert_array_equal(sol.u, [1.0, -1.0])
    assert sol.converged
