"""Finite weighted graphs as discrete metric measure spaces.

Vertex functions, cotangent fields and vector fields are plain float64
arrays indexed by the insertion order of vertices and edges.  Cotangent and
tangent fibers are one-dimensional, so the pointwise norm of a field is the
absolute value of its entry on each edge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class SpaceError(ValueError):
    """Raised for invalid graph descriptions."""


@dataclass(frozen=True)
class Space:
    """A finite graph with vertex measure ``nu`` and edge measure ``m``.

    Edges are oriented ``tail -> head``; orientation only fixes the sign
    convention of the differential and of vector fields.
    """

    vertex_ids: tuple[str, ...]
    nu: np.ndarray
    tail: np.ndarray
    head: np.ndarray
    m: np.ndarray
    edge_ids: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        for name in ("nu", "m"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("tail", "head"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.intp)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.edge_ids:
            ids = tuple(
                f"{self.vertex_ids[t]}->{self.vertex_ids[h]}#{k}"
                for k, (t, h) in enumerate(zip(self.tail, self.head))
            )
            object.__setattr__(self, "edge_ids", ids)

    @property
    def n(self) -> int:
        return len(self.vertex_ids)

    @property
    def n_edges(self) -> int:
        return len(self.tail)

    @property
    def total_measure(self) -> float:
        return float(self.nu.sum())

    @property
    def total_edge_measure(self) -> float:
        return float(self.m.sum())

    def vertex_index(self, vid: str) -> int:
        try:
            return self.vertex_ids.index(vid)
        except ValueError:
            raise SpaceError(f"unknown vertex id {vid!r}") from None

    def components(self) -> np.ndarray:
        """Label of the connected component of every vertex."""
        parent = list(range(self.n))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for t, h in zip(self.tail, self.head):
            rt, rh = find(int(t)), find(int(h))
            if rt != rh:
                parent[max(rt, rh)] = min(rt, rh)
        roots = [find(i) for i in range(self.n)]
        relabel = {r: k for k, r in enumerate(dict.fromkeys(roots))}
        return np.array([relabel[r] for r in roots], dtype=np.intp)

    def component_means(self, u: np.ndarray) -> np.ndarray:
        """nu-weighted average of ``u`` on each component, broadcast back to vertices."""
        labels = self.components()
        k = labels.max() + 1 if self.n else 0
        mass = np.bincount(labels, weights=self.nu * u, minlength=k)
        vol = np.bincount(labels, weights=self.nu, minlength=k)
        return (mass / vol)[labels]

    def to_dict(self) -> dict:
        return {
            "vertices": [{"id": v, "nu": float(w)} for v, w in zip(self.vertex_ids, self.nu)],
            "edges": [
                {"tail": self.vertex_ids[t], "head": self.vertex_ids[h], "m": float(w)}
                for t, h, w in zip(self.tail, self.head, self.m)
            ],
        }


def build_space(
    vertex_list: Iterable[tuple[str, float]],
    edge_list: Iterable[tuple[str, str, float]],
) -> Space:
    """Build a :class:`Space` from ``(id, nu)`` pairs and ``(tail, head, m)`` triples.

    Index order follows insertion order.  Parallel edges are allowed; self
    loops, duplicate vertex ids, unknown endpoints and non-positive (or
    non-finite) measures are rejected with :class:`SpaceError`.
    """
    ids: list[str] = []
    nu: list[float] = []
    index: dict[str, int] = {}
    for vid, measure in vertex_list:
        vid = str(vid)
        if vid in index:
            raise SpaceError(f"duplicate vertex id {vid!r}")
        measure = float(measure)
        if not (math.isfinite(measure) and measure > 0):
            raise SpaceError(f"non-positive measure {measure!r} on vertex {vid!r}")
        index[vid] = len(ids)
        ids.append(vid)
        nu.append(measure)

    tail: list[int] = []
    head: list[int] = []
    m: list[float] = []
    for k, (a, b, measure) in enumerate(edge_list):
        a, b = str(a), str(b)
        for end in (a, b):
            if end not in index:
                raise SpaceError(f"edge {k} has unknown endpoint {end!r}")
        if a == b:
            raise SpaceError(f"edge {k} is a self-loop at {a!r}")
        measure = float(measure)
        if not (math.isfinite(measure) and measure > 0):
            raise SpaceError(f"non-positive measure {measure!r} on edge {k} ({a!r}, {b!r})")
        tail.append(index[a])
        head.append(index[b])
        m.append(measure)

    return Space(
        vertex_ids=tuple(ids),
        nu=np.array(nu, dtype=np.float64),
        tail=np.array(tail, dtype=np.intp),
        head=np.array(head, dtype=np.intp),
        m=np.array(m, dtype=np.float64),
    )


def space_from_dict(data: Mapping) -> Space:
    try:
        vertices = [(v["id"], v["nu"]) for v in data["vertices"]]
        edges = [(e["tail"], e["head"], e["m"]) for e in data["edges"]]
    except (KeyError, TypeError) as exc:
        raise SpaceError(f"malformed graph description: {exc}") from exc
    return build_space(vertices, edges)


def load_space(path: str | Path) -> Space:
    """Read a graph JSON file ``{"vertices": [...], "edges": [...]}``."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpaceError(f"{path}: invalid JSON ({exc})") from exc
    return space_from_dict(data)


def as_vertex_function(space: Space, u: Sequence[float] | Mapping[str, float] | np.ndarray) -> np.ndarray:
    """Coerce ``u`` (array or ``{id: value}`` map) to a finite float array on the vertices."""
    if isinstance(u, Mapping):
        missing = [v for v in space.vertex_ids if v not in u]
        if missing:
            raise SpaceError(f"vertex function missing values for {missing}")
        extra = set(u) - set(space.vertex_ids)
        if extra:
            raise SpaceError(f"vertex function has unknown ids {sorted(extra)}")
        arr = np.array([float(u[v]) for v in space.vertex_ids])
    else:
        arr = np.asarray(u, dtype=np.float64)
    if arr.shape != (space.n,):
        raise SpaceError(f"vertex function has shape {arr.shape}, expected ({space.n},)")
    if not np.all(np.isfinite(arr)):
        raise SpaceError("vertex function has non-finite entries")
    return arr


def _as_edge_field(space: Space, X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.shape != (space.n_edges,):
        raise SpaceError(f"edge field has shape {arr.shape}, expected ({space.n_edges},)")
    if not np.all(np.isfinite(arr)):
        raise SpaceError("edge field has non-finite entries")
    return arr


def differential(space: Space, u) -> np.ndarray:
    """Edge increments ``du(e) = u(head) - u(tail)``."""
    u = as_vertex_function(space, u)
    return u[space.head] - u[space.tail]


def divergence(space: Space, X) -> np.ndarray:
    """Negative nu-adjoint of :func:`differential`.

    ``div X(x) = (sum_{tail(e)=x} m X - sum_{head(e)=x} m X) / nu(x)``, so
    that ``sum_x nu g divX = -sum_e m dg X`` for every vertex function g.
    """
    X = _as_edge_field(space, X)
    flux = space.m * X
    out = np.bincount(space.tail, weights=flux, minlength=space.n)
    out -= np.bincount(space.head, weights=flux, minlength=space.n)
    return out / space.nu


def pairing(space: Space, v, X) -> float:
    """Duality pairing ``sum_e m(e) v(e) X(e)``."""
    return float(np.dot(space.m, _as_edge_field(space, v) * _as_edge_field(space, X)))


def lp_norm(space: Space, values, r: float) -> float:
    """m-weighted r-norm of an edge field; ``r = inf`` is the unweighted max."""
    r = float(r)
    if not r >= 1:
        raise ValueError(f"norm exponent must be >= 1, got {r}")
    a = np.abs(_as_edge_field(space, values))
    if a.size == 0:
        return 0.0
    if math.isinf(r):
        return float(a.max())
    return float(np.dot(space.m, a**r) ** (1.0 / r))


def vertex_norm(space: Space, u, r: float) -> float:
    """nu-weighted r-norm of a vertex function; ``r = inf`` is the max."""
    r = float(r)
    if not r >= 1:
        raise ValueError(f"norm exponent must be >= 1, got {r}")
    a = np.abs(as_vertex_function(space, u))
    if math.isinf(r):
        return float(a.max()) if a.size else 0.0
    return float(np.dot(space.nu, a**r) ** (1.0 / r))


def flip_edges(space: Space, mask) -> Space:
    """Copy of ``space`` with the edges selected by ``mask`` reversed."""
    mask = np.asarray(mask, dtype=bool)
    tail = np.where(mask, space.head, space.tail)
    head = np.where(mask, space.tail, space.head)
    return Space(space.vertex_ids, space.nu, tail, head, space.m)
