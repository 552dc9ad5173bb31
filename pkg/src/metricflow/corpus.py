"""Reproducible corpora of small random instances for verification runs.

A corpus definition is a JSON list of entries
``{"n": int, "graph_seed": int, "integrand": str, "tau": float, "data_seed": int}``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .energies import Integrand, parse_integrand
from .space import Space, build_space

CORPUS_INTEGRANDS = ("p:1.5", "p:2", "p:3", "qp:1.5,3", "1p:2")
CORPUS_TAUS = (0.1, 1.0)


def random_graph(n: int, seed: int, *, density: float = 0.4, connected: bool = True) -> Space:
    """Random graph on ``n`` vertices with measures in ``[0.5, 2]`` and random orientations.

    With ``connected=True`` a random spanning path is always included.
    """
    rng = np.random.default_rng(seed)
    ids = [f"v{i}" for i in range(n)]
    verts = [(v, float(rng.uniform(0.5, 2.0))) for v in ids]
    pairs = set()
    if connected:
        order = rng.permutation(n)
        pairs |= {tuple(sorted((int(order[i]), int(order[i + 1])))) for i in range(n - 1)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                pairs.add((i, j))
    edges = []
    for i, j in sorted(pairs):
        if rng.random() < 0.5:
            i, j = j, i
        edges.append((ids[i], ids[j], float(rng.uniform(0.5, 2.0))))
    return build_space(verts, edges)


@dataclass(frozen=True)
class CorpusEntry:
    n: int
    graph_seed: int
    integrand: str
    tau: float
    data_seed: int

    def space(self) -> Space:
        return random_graph(self.n, self.graph_seed)

    def parsed_integrand(self) -> Integrand:
        return parse_integrand(self.integrand)

    def data(self, amplitude: float = 1.0) -> np.ndarray:
        return np.random.default_rng(self.data_seed).uniform(-amplitude, amplitude, self.n)


def default_corpus(size: int = 60, seed: int = 2024) -> list[CorpusEntry]:
    """``size`` instances cycling through 2-6 vertices, the five corpus integrands and both step sizes."""
    rng = np.random.default_rng(seed)
    combos = [(spec, tau) for spec in CORPUS_INTEGRANDS for tau in CORPUS_TAUS]
    out = []
    for i in range(size):
        spec, tau = combos[i % len(combos)]
        n = 2 + (i // len(combos) + i) % 5
        out.append(CorpusEntry(n, int(rng.integers(2**31)), spec, tau, int(rng.integers(2**31))))
    return out


def save_corpus(path: str | Path, entries: list[CorpusEntry]) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(e) for e in entries], fh, indent=1)


def load_corpus(path: str | Path) -> list[CorpusEntry]:
    with open(path) as fh:
        return [CorpusEntry(**e) for e in json.load(fh)]
