import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricflow import SpaceError, build_space, differential, divergence, load_space, lp_norm, pairing
from metricflow.corpus import random_graph
from metricflow.space import flip_edges, vertex_norm


def test_smallest_space(pair):
    assert pair.n == 2
    assert pair.n_edges == 1
    assert pair.vertex_ids == ("a", "b")


@pytest.mark.parametrize(
    "verts, edges, match",
    [
        ([("a", 1)], [("a", "a", 1)], "self-loop"),
        ([("a", 0), ("b", 1)], [("a", "b", 1)], "non-positive"),
        ([("a", 1), ("b", 1)], [("a", "b", -2)], "non-positive"),
        ([("a", 1), ("a", 2)], [], "duplicate"),
        ([("a", 1)], [("a", "z", 1)], "unknown endpoint"),
        ([("a", float("nan"))], [], "non-positive"),
    ],
)
def test_build_space_rejects(verts, edges, match):
    with pytest.raises(SpaceError, match=match):
        build_space(verts, edges)


def test_parallel_edges_allowed():
    s = build_space([("a", 1), ("b", 1)], [("a", "b", 1), ("a", "b", 2), ("b", "a", 3)])
    assert s.n_edges == 3
    np.testing.assert_allclose(divergence(s, [1, 1, 1]), [1 + 2 - 3, -1 - 2 + 3])


def test_space_is_immutable(pair):
    with pytest.raises(ValueError):
        pair.nu[0] = 5.0


def test_differential_examples(pair, triangle):
    np.testing.assert_array_equal(differential(pair, [0, 1]), [1])
    np.testing.assert_array_equal(differential(pair, [3.5, 3.5]), [0])
    np.testing.assert_array_equal(differential(triangle, [0, 1, 3]), [1, 2, -3])


def test_differential_accepts_id_map(triangle):
    np.testing.assert_array_equal(differential(triangle, {"a": 0, "b": 1, "c": 3}), [1, 2, -3])
    with pytest.raises(SpaceError):
        differential(triangle, {"a": 0, "b": 1})
    with pytest.raises(SpaceError):
        differential(triangle, [0, np.inf, 1])


def test_divergence_examples(pair):
    np.testing.assert_array_equal(divergence(pair, [1.0]), [1.0, -1.0])
    np.testing.assert_array_equal(divergence(pair, [0.0]), [0.0, 0.0])


def test_divergence_with_measures():
    s = build_space([("a", 2.0), ("b", 0.5)], [("a", "b", 3.0)])
    # div X(a) = m X / nu(a), div X(b) = -m X / nu(b)
    np.testing.assert_allclose(divergence(s, [1.0]), [1.5, -6.0])


def test_pairing_examples(pair):
    assert pairing(pair, [2.0], [3.0]) == 6.0
    assert pairing(pair, [0.0], [3.0]) == 0.0
    assert pairing(pair, [2.0], [0.0]) == 0.0


def test_lp_norm_examples(pair):
    assert lp_norm(pair, [2.0], 2) == pytest.approx(2.0)
    assert lp_norm(pair, [2.0], np.inf) == 2.0
    s = build_space([("a", 1), ("b", 1), ("c", 1)], [("a", "b", 1.0), ("b", "c", 3.0)])
    assert lp_norm(s, [1.0, 1.0], 1) == pytest.approx(4.0)
    # the sup norm ignores weights
    assert lp_norm(s, [1.0, -2.0], np.inf) == 2.0
    with pytest.raises(ValueError):
        lp_norm(pair, [1.0], 0.5)


def test_vertex_norm(pair):
    assert vertex_norm(pair, [3.0, -4.0], 2) == pytest.approx(5.0)
    assert vertex_norm(pair, [3.0, -4.0], np.inf) == 4.0


graph_params = st.tuples(st.integers(2, 8), st.integers(0, 10_000))


@settings(max_examples=100, deadline=None)
@given(graph_params, st.integers(0, 2**32 - 1))
def test_gauss_green(gp, seed):
    space = random_graph(*gp)
    rng = np.random.default_rng(seed)
    u = rng.normal(size=space.n)
    X = rng.normal(size=space.n_edges)
    lhs = pairing(space, differential(space, u), X)
    rhs = -float(np.dot(space.nu, u * divergence(space, X)))
    scale = 1 + float(np.dot(space.m, np.abs(differential(space, u) * X)))
    assert abs(lhs - rhs) <= 1e-12 * scale


@settings(max_examples=100, deadline=None)
@given(graph_params, st.integers(0, 2**32 - 1))
def test_global_conservation(gp, seed):
    space = random_graph(*gp)
    X = np.random.default_rng(seed).normal(size=space.n_edges) * 10
    total = float(np.dot(space.nu, divergence(space, X)))
    assert abs(total) <= 1e-12 * max(lp_norm(space, X, 1), 1e-300)


@settings(max_examples=50, deadline=None)
@given(graph_params, st.integers(0, 2**32 - 1))
def test_linearity(gp, seed):
    space = random_graph(*gp)
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=2)
    u, w = rng.normal(size=(2, space.n))
    X, Y = rng.normal(size=(2, space.n_edges))
    np.testing.assert_allclose(
        differential(space, a * u + b * w), a * differential(space, u) + b * differential(space, w), atol=1e-12
    )
    np.testing.assert_allclose(
        divergence(space, a * X + b * Y), a * divergence(space, X) + b * divergence(space, Y), atol=1e-12
    )


@settings(max_examples=100, deadline=None)
@given(graph_params, st.integers(0, 2**32 - 1), st.sampled_from([(1.0, 2.0), (1.5, 3.0), (1.2, 1.7)]))
def test_embedding_inequality(gp, seed, qp):
    q, p = qp
    space = random_graph(*gp)
    v = np.random.default_rng(seed).normal(size=space.n_edges) * 3
    bound = space.total_edge_measure ** (1 / q - 1 / p) * lp_norm(space, v, p)
    assert lp_norm(space, v, q) <= bound * (1 + 1e-12)


def test_kernel_is_componentwise_constants():
    s = build_space([(c, 1) for c in "abcde"], [("a", "b", 1), ("b", "c", 2), ("d", "e", 1)])
    np.testing.assert_array_equal(s.components(), [0, 0, 0, 1, 1])
    u = np.array([2.0, 2.0, 2.0, -1.0, -1.0])
    assert not differential(s, u).any()
    u[4] = 0.0
    assert differential(s, u).any()
    np.testing.assert_allclose(s.component_means(np.array([1.0, 2, 3, 4, 6])), [2, 2, 2, 5, 5])


def test_orientation_covariance(rng):
    space = random_graph(6, 11)
    mask = rng.random(space.n_edges) < 0.5
    flipped = flip_edges(space, mask)
    sign = np.where(mask, -1.0, 1.0)
    u = rng.normal(size=space.n)
    X = rng.normal(size=space.n_edges)
    np.testing.assert_allclose(differential(flipped, u), sign * differential(space, u))
    np.testing.assert_allclose(divergence(flipped, sign * X), divergence(space, X))


def test_load_space_json(tmp_path, triangle):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(triangle.to_dict()))
    s = load_space(path)
    assert s.vertex_ids == triangle.vertex_ids
    np.testing.assert_array_equal(s.tail, triangle.tail)
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": [{"id": "a"}], "edges": []}')
    with pytest.raises(SpaceError):
        load_space(bad)
