"""File formats: graph JSON, vertex-function maps/CSV, trajectory and certificate CSV."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .energies import Integrand, parse_integrand
from .space import Space, SpaceError, as_vertex_function, build_space, load_space, space_from_dict

TRAJECTORY_FILE = "trajectory.csv"
CERTIFICATE_FILE = "certificates.csv"
REPORT_FILE = "report.json"


def fmt(x: float) -> str:
    """17 significant digits: exact round trip for float64."""
    return format(float(x), ".17g")


# graphs ---------------------------------------------------------------------


def preset_space(name: str) -> Space:
    """Named graphs: ``pair``, ``triangle``, ``path:N``, ``cycle:N``, ``complete:N`` (unit measures)."""
    kind, _, arg = name.partition(":")
    if kind == "pair":
        return build_space([("a", 1.0), ("b", 1.0)], [("a", "b", 1.0)])
    if kind == "triangle":
        return build_space([("a", 1.0), ("b", 1.0), ("c", 1.0)], [("a", "b", 1.0), ("b", "c", 1.0), ("c", "a", 1.0)])
    try:
        n = int(arg)
    except ValueError:
        raise SpaceError(f"unknown graph preset {name!r}") from None
    if n < 2:
        raise SpaceError(f"graph preset {name!r} needs at least 2 vertices")
    ids = [f"v{i}" for i in range(n)]
    verts = [(v, 1.0) for v in ids]
    if kind == "path":
        return build_space(verts, [(ids[i], ids[i + 1], 1.0) for i in range(n - 1)])
    if kind == "cycle":
        return build_space(verts, [(ids[i], ids[(i + 1) % n], 1.0) for i in range(n)])
    if kind == "complete":
        return build_space(verts, [(ids[i], ids[j], 1.0) for i in range(n) for j in range(i + 1, n)])
    raise SpaceError(f"unknown graph preset {name!r}")


def read_graph(source: str) -> Space:
    """A graph JSON path or ``preset:<name>``."""
    if source.startswith("preset:"):
        return preset_space(source[len("preset:"):])
    return load_space(source)


# vertex functions ------------------------------------------------------------


def read_vertex_function(space: Space, path: str | Path) -> np.ndarray:
    """``{"id": value}`` JSON, or CSV with ``id,value`` rows or a header row of vertex ids."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            return as_vertex_function(space, json.load(fh))
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise SpaceError(f"{path}: empty vertex function file")
    header = [h.strip() for h in rows[0]]
    if set(space.vertex_ids) <= set(header) and len(rows) >= 2:
        last = rows[-1]
        return as_vertex_function(space, {h: float(last[i]) for i, h in enumerate(header) if h in space.vertex_ids})
    body = rows[1:] if header and header[0].lower() in ("id", "vertex") else rows
    try:
        return as_vertex_function(space, {r[0].strip(): float(r[1]) for r in body})
    except (IndexError, ValueError) as exc:
        raise SpaceError(f"{path}: cannot parse vertex function ({exc})") from exc


def initial_data(space: Space, source: str, seed: int | None = None) -> np.ndarray:
    """``indicator:a,b``, ``random[:seed]``, ``constant:c``, ``values:x1,x2,...`` or a file path."""
    kind, sep, arg = source.partition(":")
    if kind == "indicator" and sep:
        u = np.zeros(space.n)
        for vid in filter(None, (s.strip() for s in arg.split(","))):
            u[space.vertex_index(vid)] = 1.0
        return u
    if kind == "random":
        s = int(arg) if arg else (0 if seed is None else seed)
        return np.random.default_rng(s).uniform(-1.0, 1.0, space.n)
    if kind == "constant" and sep:
        return np.full(space.n, float(arg))
    if kind == "values" and sep:
        try:
            vals = [float(x) for x in arg.split(",")]
        except ValueError:
            raise SpaceError(f"non-numeric entry in {source!r}") from None
        return as_vertex_function(space, vals)
    if not Path(source).exists():
        raise SpaceError(f"initial data {source!r} is neither a preset nor an existing file")
    return read_vertex_function(space, source)


# trajectories ------------------------------------------------------------------


def write_trajectory_csv(path: str | Path, space: Space, times, states) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t", *space.vertex_ids])
        for k, (t, u) in enumerate(zip(times, states)):
            w.writerow([k, fmt(t), *(fmt(x) for x in u)])


def write_certificates_csv(path: str | Path, space: Space, X, X1, X2, gaps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "edge", "X", "X1", "X2", "gap"])
        for k in range(len(X)):
            for e, eid in enumerate(space.edge_ids):
                w.writerow([k + 1, eid, fmt(X[k][e]), fmt(X1[k][e]), fmt(X2[k][e]), fmt(gaps[k][e])])


@dataclass
class StoredTrajectory:
    """A trajectory read back from disk; duck-types :class:`metricflow.flow.Trajectory` for audits."""

    space: Space
    integrand: Integrand
    times: np.ndarray
    states: np.ndarray
    X: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    gaps: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.times) - 1


class FormatError(ValueError):
    pass


def read_trajectory_csv(path: str | Path, space: Space) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][:2] != ["step", "t"]:
        raise FormatError(f"{path}: expected header 'step,t,<vertex ids>'")
    ids = rows[0][2:]
    if tuple(ids) != space.vertex_ids:
        raise FormatError(f"{path}: vertex columns {ids} do not match the graph {list(space.vertex_ids)}")
    try:
        steps = [int(r[0]) for r in rows[1:]]
        data = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != space.n + 1 or steps != list(range(len(steps))):
        raise FormatError(f"{path}: malformed trajectory rows")
    return data[:, 0], data[:, 1:]


def read_certificates_csv(path: str | Path, space: Space, steps: int) -> tuple[np.ndarray, ...]:
    shape = (steps, space.n_edges)
    out = [np.full(shape, np.nan) for _ in range(4)]
    edge_index = {eid: i for i, eid in enumerate(space.edge_ids)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["step", "edge", "X", "X1", "X2", "gap"]:
            raise FormatError(f"{path}: expected header 'step,edge,X,X1,X2,gap'")
        for row in reader:
            if not row:
                continue
            try:
                k = int(row[0]) - 1
                e = edge_index[row[1]]
                vals = [float(x) for x in row[2:6]]
            except (ValueError, KeyError, IndexError) as exc:
                raise FormatError(f"{path}: bad row {row} ({exc})") from exc
            if not 0 <= k < steps:
                raise FormatError(f"{path}: step {k + 1} outside 1..{steps}")
            for arr, val in zip(out, vals):
                arr[k, e] = val
    if any(np.isnan(a).any() for a in out):
        raise FormatError(f"{path}: missing certificate entries")
    return tuple(out)


def write_report(path: str | Path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_run(directory: str | Path, space: Space | None = None, integrand: Integrand | None = None) -> StoredTrajectory:
    """Read ``trajectory.csv``, ``certificates.csv`` and (for defaults) ``report.json`` from a run directory."""
    directory = Path(directory)
    report_path = directory / REPORT_FILE
    report = {}
    if report_path.exists():
        with open(report_path) as fh:
            try:
                report = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{report_path}: {exc}") from exc
    if space is None:
        if "graph" not in report:
            raise FormatError("no graph given and report.json carries none")
        space = space_from_dict(report["graph"])
    if integrand is None:
        if "integrand" not in report:
            raise FormatError("no integrand given and report.json carries none")
        integrand = parse_integrand(report["integrand"])
    times, states = read_trajectory_csv(directory / TRAJECTORY_FILE, space)
    X, X1, X2, gaps = read_certificates_csv(directory / CERTIFICATE_FILE, space, len(times) - 1)
    return StoredTrajectory(space, integrand, times, states, X, X1, X2, gaps)
