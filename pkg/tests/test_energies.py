import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from metricflow import (
    Integrand,
    IntegrandError,
    coercivity_check,
    conjugate,
    energy,
    functional,
    parse_integrand,
    split_certificate,
    subdifferential_residual,
)
from metricflow.corpus import random_graph
from metricflow.energies import fenchel_gap
from metricflow.kernel import get_backend

from conftest import ALL_SPECS


def sup_oracle(f, lo, hi):
    """sup of a concave scalar function: dense grid, then bounded Brent refinement."""
    grid = np.linspace(lo, hi, 20001)
    vals = f(grid)
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda x: -f(np.array(x)), bounds=(a, b), method="bounded", options={"xatol": 1e-13})
    return max(float(vals[i]), -float(res.fun))


def numeric_conjugate(I, t):
    return sup_oracle(lambda s: s * t - I.phi(s), -100.0, 100.0)


def test_parse_integrand():
    assert parse_integrand("p:2") == Integrand("p", 2.0)
    I = parse_integrand("qp:1.5,3")
    assert (I.kind, I.q, I.p) == ("qp", 1.5, 3.0)
    assert parse_integrand("1p:2") == Integrand("1p", 2.0)
    assert parse_integrand("qp:1,2") == Integrand("1p", 2.0)
    assert str(parse_integrand(" QP:1.5,3 ")) == "qp:1.5,3"


@pytest.mark.parametrize("spec", ["p:0.5", "p:1", "qp:3,2", "qp:0.5,2", "qp:2", "x:2", "p", "p:abc", "1p:1,2"])
def test_parse_integrand_rejects(spec):
    with pytest.raises(IntegrandError):
        parse_integrand(spec)


def test_p_requirement_message():
    with pytest.raises(IntegrandError, match="p > 1"):
        parse_integrand("p:0.5")


def test_energy_examples(pair):
    for spec in ALL_SPECS:
        assert energy(pair, parse_integrand(spec), [0.0]).value == 0.0
    assert energy(pair, parse_integrand("p:2"), [1.0]).value == 0.5
    rep = energy(pair, parse_integrand("qp:1,2"), [1.0])
    assert rep.value == 1.5
    np.testing.assert_array_equal(rep.per_edge, [1.5])


def test_functional_examples(pair):
    for spec in ALL_SPECS:
        assert functional(pair, parse_integrand(spec), [4.0, 4.0]).value == 0.0
    for p in (1.5, 2.0, 3.0):
        assert functional(pair, Integrand("p", p), [0.0, 1.0]).value == pytest.approx(1 / p)
    assert functional(pair, parse_integrand("1p:2"), [0.0, 2.0]).value == 4.0


def test_energy_report_sums(rng):
    space = random_graph(6, 3)
    v = rng.normal(size=space.n_edges)
    for spec in ALL_SPECS:
        rep = energy(space, parse_integrand(spec), v)
        assert rep.value == pytest.approx(rep.per_edge.sum())
        assert (rep.per_edge >= 0).all()


def test_conjugate_examples():
    assert conjugate(parse_integrand("p:2"), 3.0) == pytest.approx(4.5)
    for spec in ALL_SPECS:
        assert conjugate(parse_integrand(spec), 0.0) == 0.0
    assert conjugate(parse_integrand("1p:2"), 3.0) == pytest.approx(2.0)
    # the scalar maximisation oracle agrees with the closed form
    assert numeric_conjugate(parse_integrand("1p:2"), 3.0) == pytest.approx(2.0, abs=1e-10)


@pytest.mark.parametrize("spec", ALL_SPECS + ["qp:1.2,4", "qp:1.9,2.1", "1p:3"])
@pytest.mark.parametrize("t", [-4.0, -1.3, -0.2, 0.05, 0.9, 1.0, 2.5, 7.0])
def test_conjugate_matches_numeric_sup(spec, t):
    I = parse_integrand(spec)
    assert conjugate(I, t) == pytest.approx(numeric_conjugate(I, t), abs=1e-9, rel=1e-10)


@pytest.mark.parametrize("spec", ALL_SPECS + ["qp:1.2,4"])
def test_fenchel_young_on_grid(spec):
    I = parse_integrand(spec)
    s, t = np.meshgrid(np.linspace(-10, 10, 201), np.linspace(-10, 10, 201))
    assert (I.phi(s) + I.conjugate(t) - s * t).min() >= -1e-14 * (1 + np.abs(s * t)).max()


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_biconjugate(spec):
    I = parse_integrand(spec)
    for s in np.linspace(-3, 3, 13):
        hi = abs(float(I.gradient(s))) + 2.0
        bic = sup_oracle(lambda t: s * t - I.conjugate(t), -hi, hi)
        assert bic == pytest.approx(float(I.phi(s)), abs=1e-8)


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_conjugate_convex(spec):
    I = parse_integrand(spec)
    t = np.linspace(-5, 5, 1001)
    c = I.conjugate(t)
    assert (c[:-2] + c[2:] - 2 * c[1:-1]).min() >= -1e-12


def test_coercivity_examples(pair):
    for p in (1.5, 2.0, 3.0):
        assert coercivity_check(pair, Integrand("p", p), [1.7], 1 / p)
    assert coercivity_check(pair, parse_integrand("qp:1,2"), [1.0], 0.5)
    assert not coercivity_check(pair, parse_integrand("p:2"), [1.0], 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(ALL_SPECS))
def test_coercivity_property(seed, spec):
    space = random_graph(5, seed % 1000)
    I = parse_integrand(spec)
    v = np.random.default_rng(seed).normal(size=space.n_edges) * 4
    assert coercivity_check(space, I, v, 1 / I.p)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(ALL_SPECS), st.floats(0, 1))
def test_energy_convex(seed, spec, lam):
    space = random_graph(5, seed % 1000)
    I = parse_integrand(spec)
    a, b = np.random.default_rng(seed).normal(size=(2, space.n_edges)) * 3
    mid = energy(space, I, lam * a + (1 - lam) * b).value
    assert mid <= lam * energy(space, I, a).value + (1 - lam) * energy(space, I, b).value + 1e-12


def test_subdifferential_residual_examples(pair):
    I2 = parse_integrand("p:2")
    assert subdifferential_residual(pair, I2, [2.0], [2.0])[0] == 0.0
    assert subdifferential_residual(pair, I2, [2.0], [1.0])[0] == pytest.approx(0.5)
    assert subdifferential_residual(pair, parse_integrand("1p:2"), [0.0], [0.7])[0] == 0.0


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_gradient_has_zero_gap(spec, rng):
    I = parse_integrand(spec)
    v = rng.normal(size=200) * 3
    assert fenchel_gap(I, v, I.gradient(v)).max() <= 1e-12 * (1 + np.abs(v) ** I.p).max()


def test_split_examples(pair):
    I = parse_integrand("1p:2")
    s = split_certificate(pair, I, [1.0], [2.0])
    np.testing.assert_allclose(s.X1, [1.0])
    np.testing.assert_allclose(s.X2, [1.0])
    assert s.valid and s.max_residual == 0.0

    s = split_certificate(pair, I, [0.0], [0.5])
    np.testing.assert_array_equal(s.X1, [0.0])
    np.testing.assert_array_equal(s.X2, [0.5])
    assert s.valid

    s = split_certificate(pair, I, [1.0], [3.0])
    np.testing.assert_allclose(s.X2, [2.0])
    assert not s.valid
    assert list(s.failing_edges()) == [0]


def test_split_qp(rng):
    I = parse_integrand("qp:1.5,3")
    space = random_graph(5, 9)
    v = rng.normal(size=space.n_edges)
    s = split_certificate(space, I, v, I.gradient(v))
    assert s.max_residual <= 1e-12
    np.testing.assert_allclose(s.X2, np.sign(v) * np.abs(v) ** 0.5, atol=1e-14)
    bad = split_certificate(space, I, v, I.gradient(v) + 1e-3)
    assert not bad.valid


@pytest.mark.parametrize("spec", ALL_SPECS + ["qp:1.2,4", "p:1.2"])
def test_prox_optimality(spec, rng):
    I = parse_integrand(spec)
    w = rng.normal(size=300) * 4
    lam = rng.uniform(0.01, 10, size=300)
    s = I.prox(w, lam)
    # 0 in s - w + lam * dphi(s): the residual (w - s) / lam must be a subgradient at s
    np.testing.assert_allclose(fenchel_gap(I, s, (w - s) / lam), 0.0, atol=1e-10)


@pytest.mark.parametrize("spec", ALL_SPECS + ["qp:1.2,4"])
def test_compiled_prox_matches_numpy(spec, rng):
    pytest.importorskip("metricflow._ckernel")
    I = parse_integrand(spec)
    _, cprox = get_backend("cython")
    _, pyprox = get_backend("python")
    for w, lam in zip(rng.normal(size=100) * 5, rng.uniform(0.01, 10, 100)):
        a = cprox(float(w), float(lam), I.code, I.p, I.q)
        b = pyprox(w, lam, I.code, I.p, I.q)
        assert a == pytest.approx(b, abs=1e-13, rel=1e-12)


@pytest.mark.parametrize("backend", ["cython", "python"])
@pytest.mark.parametrize("spec", ALL_SPECS + ["qp:1.2,4"])
def test_prox_warm_start_is_neutral(spec, backend, rng):
    # any starting guess, good, bad or out of bracket, lands on the same root
    if backend == "cython":
        pytest.importorskip("metricflow._ckernel")
    I = parse_integrand(spec)
    _, prox = get_backend(backend)
    for w, lam in zip(rng.normal(size=60) * 5, rng.uniform(0.01, 10, 60)):
        cold = prox(float(w), float(lam), I.code, I.p, I.q)
        for guess in (abs(cold) * (1 + 1e-6), abs(cold) * 0.3, 1e-300, 1e6, -1.0):
            warm = prox(float(w), float(lam), I.code, I.p, I.q, guess)
            assert warm == pytest.approx(cold, abs=1e-13, rel=1e-12)


@pytest.mark.parametrize("spec", ALL_SPECS)
def test_prox_conjugate_moreau(spec, rng):
    I = parse_integrand(spec)
    z = rng.normal(size=50) * 3
    sigma = 0.7
    y = I.prox_conjugate(z, sigma)
    # y minimises sigma*phi*(y) + (y - z)^2/2: (z - y)/sigma is in dphi*(y), i.e. y in dphi((z - y)/sigma)
    np.testing.assert_allclose(fenchel_gap(I, (z - y) / sigma, y), 0.0, atol=1e-10)
