"""Independent verification of resolvent solutions and certified trajectories.

Nothing here calls into :mod:`metricflow.resolvent`.  The brute-force
oracle evaluates its own objective and minimises it by subgradient steps
followed by a golden-section polish along indicator directions of vertex
subsets.  For objectives of the form "edge terms in du + separable
quadratic", some subset direction is a descent direction at every
non-optimal point (level sets of the steepest direction), so the polish
terminates only at the minimiser.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .energies import Integrand, fenchel_gap, functional, split_certificate
from .space import Space, as_vertex_function, differential, divergence

MAX_ORACLE_VERTICES = 8
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class OracleError(ValueError):
    pass


class AuditError(ValueError):
    """Raised when the input to an audit is malformed (missing certificates, grid mismatch)."""


class UncertifiedPairError(ValueError):
    pass


# --------------------------------------------------------------------------
# brute-force resolvent


def _oracle_objective(space: Space, integrand: Integrand, g: np.ndarray, tau: float) -> Callable[[np.ndarray], float]:
    tail, head, m, nu = space.tail, space.head, space.m, space.nu
    kind, p, q = integrand.kind, integrand.p, integrand.q

    def obj(u: np.ndarray) -> float:
        a = np.abs(u[head] - u[tail])
        dens = a**p / p
        if kind == "qp":
            dens += a**q / q
        elif kind == "1p":
            dens += a
        r = u - g
        return float(np.dot(m, dens)) + float(np.dot(nu, r * r)) / (2.0 * tau)

    return obj


def _oracle_subgradient(space: Space, integrand: Integrand, g: np.ndarray, tau: float, u: np.ndarray) -> np.ndarray:
    du = u[space.head] - u[space.tail]
    a = np.abs(du)
    slope = a ** (integrand.p - 1)
    if integrand.kind == "qp":
        slope += a ** (integrand.q - 1)
    elif integrand.kind == "1p":
        slope += 1.0
    flux = space.m * np.sign(du) * slope
    grad = np.bincount(space.head, weights=flux, minlength=space.n) - np.bincount(space.tail, weights=flux, minlength=space.n)
    return grad + space.nu * (u - g) / tau


def _golden_line(f: Callable[[float], float], h: float, xtol: float) -> tuple[float, float]:
    """Minimise a convex 1-D function on ``[-h, h]`` (expanding while the edge is best)."""
    f0 = f(0.0)
    while True:
        a, b = -h, h
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc, fd = f(c), f(d)
        while b - a > xtol:
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = f(d)
        x = 0.5 * (a + b)
        fx = f(x)
        if abs(x) < 0.9 * h or h > 1e6:
            break
        h *= 4.0
    if fx < f0:
        return x, fx
    return 0.0, f0


def brute_force_resolvent(
    space: Space,
    integrand: Integrand,
    g,
    tau: float,
    precision: float = 1e-7,
    *,
    subgradient_iters: int = 2000,
    max_sweeps: int = 2000,
) -> np.ndarray:
    """Slow reference minimiser of ``E(du) + |u - g|^2_nu / (2 tau)``.

    Projected subgradient descent (onto the mass level ``sum nu u = sum nu g``,
    which contains the minimiser) with diminishing steps, then golden-section
    sweeps along ``1_S`` for every nonempty vertex subset ``S`` until a full
    sweep lowers the objective by less than ``precision**2``.
    Only for graphs with at most 8 vertices.
    """
    if space.n > MAX_ORACLE_VERTICES:
        raise OracleError(f"brute-force oracle limited to {MAX_ORACLE_VERTICES} vertices, got {space.n}")
    g = as_vertex_function(space, g).astype(np.float64)
    tau = float(tau)
    obj = _oracle_objective(space, integrand, g, tau)
    nu = space.nu
    mass = float(np.dot(nu, g))
    nu2 = float(np.dot(nu, nu))

    u = g.copy()
    best_u, best_f = u.copy(), obj(u)
    scale = max(1.0, float(np.max(np.abs(g))) if g.size else 1.0)
    for k in range(subgradient_iters):
        s = _oracle_subgradient(space, integrand, g, tau, u)
        ns = float(np.linalg.norm(s))
        if ns == 0.0:
            break
        u = u - (0.5 * scale / math.sqrt(k + 1.0)) * s / ns
        u -= nu * (float(np.dot(nu, u)) - mass) / nu2
        fu = obj(u)
        if fu < best_f:
            best_u, best_f = u.copy(), fu
    u, fu = best_u, best_f

    directions = []
    for size in range(1, space.n + 1):
        for subset in itertools.combinations(range(space.n), size):
            d = np.zeros(space.n)
            d[list(subset)] = 1.0
            directions.append(d)
    xtol = 1e-3 * precision
    h = np.full(len(directions), 0.1 * scale)
    for _ in range(max_sweeps):
        start = fu
        for j, d in enumerate(directions):
            step, fnew = _golden_line(lambda t: obj(u + t * d), h[j], xtol)
            if fnew < fu:
                u = u + step * d
                fu = fnew
            h[j] = max(4.0 * abs(step), 10 * xtol)
        if start - fu < precision**2:
            break
    return u


# --------------------------------------------------------------------------
# audit reports


@dataclass(frozen=True)
class AuditCheck:
    name: str
    residual: float
    tolerance: float
    location: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "location": self.location,
        }


@dataclass
class AuditReport:
    checks: list[AuditCheck] = field(default_factory=list)

    def add(self, name: str, residual: float, tolerance: float, location: str = "") -> None:
        self.checks.append(AuditCheck(name, float(residual), float(tolerance), location))

    def extend(self, other: "AuditReport") -> None:
        self.checks.extend(other.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[AuditCheck]:
        return [c for c in self.checks if not c.passed]

    def max_residual(self, prefix: str = "") -> float:
        vals = [c.residual for c in self.checks if c.name.startswith(prefix)]
        return max(vals) if vals else 0.0

    def notes(self) -> list[str]:
        out = []
        if any(c.name == "accretivity" for c in self.failures):
            # the discrete test rests on scalar monotonicity, not on a chain rule for d
            out.append(
                "accretivity failures refute the discrete monotonicity analogue on this graph; "
                "the per-step certificate checks are reported separately"
            )
        return out

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks], "notes": self.notes()}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def summary(self) -> str:
        lines = [f"audit {'PASSED' if self.passed else 'FAILED'}: {len(self.checks)} checks, {len(self.failures)} failures"]
        for c in self.failures[:20]:
            lines.append(f"  {c.name} at {c.location}: residual {c.residual:.3e} > {c.tolerance:.1e}")
        lines.extend(f"note: {n}" for n in self.notes())
        return "\n".join(lines)


def _argmax_loc(values: np.ndarray, ids: Sequence[str]) -> tuple[float, str]:
    if values.size == 0:
        return 0.0, ""
    i = int(np.argmax(values))
    return float(values[i]), ids[i]


def audit_weak_solution(space: Space, integrand: Integrand, trajectory, tol: float = 1e-8) -> AuditReport:
    """Re-verify every step of a certified trajectory from its raw arrays.

    Per step ``k``: the divergence equation ``(u_k - u_{k-1}) / tau_k = div X_k``
    on every vertex, the per-edge Fenchel-Young gap of ``X_k`` at ``du_k``, the
    pointwise equalities of the p-part (and the q-part, or the unit-ball
    constraint for the ``1p`` family), consistency of stored splits (for every kind)
    ``X1 + X2 = X`` and of stored gaps.  Each check names the worst vertex or
    edge.
    """
    X = getattr(trajectory, "X", None)
    if X is None or len(X) != trajectory.steps:
        raise AuditError("trajectory carries no certificates for its steps")
    report = AuditReport()
    states, times = np.asarray(trajectory.states), np.asarray(trajectory.times)
    X1s = getattr(trajectory, "X1", None)
    X2s = getattr(trajectory, "X2", None)
    gap_s = getattr(trajectory, "gaps", None)
    for k in range(1, len(times)):
        tau = times[k] - times[k - 1]
        if not tau > 0:
            raise AuditError(f"non-increasing times at step {k}")
        u_prev, u = states[k - 1], states[k]
        Xk = np.asarray(X[k - 1], dtype=np.float64)
        res = np.abs((u - u_prev) / tau - divergence(space, Xk))
        r, loc = _argmax_loc(res, space.vertex_ids)
        report.add("divergence", r, tol, f"step {k}, vertex {loc}")

        du = differential(space, u)
        gaps = fenchel_gap(integrand, du, Xk)
        r, loc = _argmax_loc(gaps, space.edge_ids)
        report.add("fenchel_gap", r, tol, f"step {k}, edge {loc}")

        split = split_certificate(space, integrand, du, Xk, tol)
        r, loc = _argmax_loc(split.residual_p, space.edge_ids)
        report.add("p_part", r, tol, f"step {k}, edge {loc}")
        if integrand.has_split:
            r, loc = _argmax_loc(split.residual_q, space.edge_ids)
            name = "q_part" if integrand.kind == "qp" else "unit_ball"
            report.add(name, r, tol, f"step {k}, edge {loc}")
        if X1s is not None and X2s is not None and len(X1s) == trajectory.steps:
            # for the pure power family the stored split must be X1 = X, X2 = 0
            x1, x2 = np.asarray(X1s[k - 1]), np.asarray(X2s[k - 1])
            cons = np.maximum(np.abs(x1 + x2 - Xk), np.abs(x1 - (split.X1 if integrand.has_split else Xk)))
            r, loc = _argmax_loc(cons, space.edge_ids)
            report.add("split_consistency", r, tol, f"step {k}, edge {loc}")
        if gap_s is not None and len(gap_s) == trajectory.steps:
            r, loc = _argmax_loc(np.abs(np.asarray(gap_s[k - 1]) - gaps), space.edge_ids)
            report.add("reported_gap", r, tol, f"step {k}, edge {loc}")
    return report


# --------------------------------------------------------------------------
# variational inequality


def variational_inequality_check(
    space: Space,
    integrand: Integrand,
    trajectory,
    v_states,
    tol: float = 1e-8,
    *,
    name: str = "variational",
) -> AuditReport:
    """Check the integral inequality that makes a weak solution variational.

    With ``w = v - u`` on the trajectory's grid, backward differences for
    ``d/dt v`` and the right-endpoint rule on each step (the point where the
    implicit-Euler certificate lives)::

        sum_k tau_k [<(v_k - v_{k-1})/tau_k, w_k>_nu + F(v_k) - F(u_k)]
            >= |w_K|^2_nu / 2 - |v_0 - u_0|^2_nu / 2

    Passes when ``LHS - RHS >= -tol * scale`` with
    ``scale = 1 + |LHS| + |RHS|``; the reported residual is
    ``max(0, RHS - LHS) / scale``.
    """
    v = np.asarray(v_states, dtype=np.float64)
    u = np.asarray(trajectory.states, dtype=np.float64)
    if v.shape != u.shape:
        raise AuditError(f"test trajectory has shape {v.shape}, expected {u.shape}")
    times = np.asarray(trajectory.times)
    nu = space.nu
    lhs = 0.0
    for k in range(1, len(times)):
        tau = times[k] - times[k - 1]
        dv = (v[k] - v[k - 1]) / tau
        lhs += tau * (
            float(np.dot(nu, dv * (v[k] - u[k])))
            + functional(space, integrand, v[k]).value
            - functional(space, integrand, u[k]).value
        )
    w_end = v[-1] - u[-1]
    w0 = v[0] - u[0]
    rhs = 0.5 * float(np.dot(nu, w_end * w_end)) - 0.5 * float(np.dot(nu, w0 * w0))
    scale = 1.0 + abs(lhs) + abs(rhs)
    report = AuditReport()
    report.add(name, max(0.0, rhs - lhs) / scale, tol, f"LHS-RHS={lhs - rhs:.6e}")
    return report


def random_test_trajectory(trajectory, rng: np.random.Generator, knots: int = 3, amplitude: float | None = None) -> np.ndarray:
    """A random function of (t, x), piecewise linear in time, sampled on the trajectory's grid."""
    times = np.asarray(trajectory.times)
    u = np.asarray(trajectory.states)
    if amplitude is None:
        amplitude = max(1.0, float(np.max(np.abs(u))))
    t_knots = np.linspace(times[0], times[-1], knots)
    values = rng.uniform(-amplitude, amplitude, size=(knots, u.shape[1]))
    return np.stack([np.interp(times, t_knots, values[:, i]) for i in range(u.shape[1])], axis=1)


# --------------------------------------------------------------------------
# complete accretivity


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def _smooth_step_slope(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0) & (x < 1)
    xi = np.where(inside, x, 0.5)
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    da = a / xi**2
    db = -b / (1.0 - xi) ** 2
    slope = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return np.where(inside, slope, 0.0)


# max slope of the step on [0, 1], attained at 1/2
_STEP_MAX_SLOPE = float(_smooth_step_slope(np.array(0.5)))


@dataclass(frozen=True)
class AccretivityTestFn:
    """Smooth nondecreasing ramp ``T`` whose derivative lives in ``[a, b]`` (``0 < a < b``).

    ``T(s) = (b - a) S((s - a) / (b - a)) / max S'`` with ``S`` a C-infinity
    step, so ``0 <= T' <= 1`` and ``T(0) = 0``.  ``reflected=True`` gives
    ``s -> -T(-s)``, supported on ``[-b, -a]``.
    """

    a: float
    b: float
    reflected: bool = False

    def __post_init__(self) -> None:
        if not (0 < self.a < self.b):
            raise ValueError(f"ramp needs 0 < a < b, got a={self.a}, b={self.b}")

    @property
    def name(self) -> str:
        side = "-" if self.reflected else "+"
        return f"ramp{side}[{self.a:g},{self.b:g}]"

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if self.reflected:
            s = -s
        width = self.b - self.a
        val = width * _smooth_step((s - self.a) / width) / _STEP_MAX_SLOPE
        return -val if self.reflected else val

    def derivative(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if self.reflected:
            s = -s
        width = self.b - self.a
        return _smooth_step_slope((s - self.a) / width) / _STEP_MAX_SLOPE

    @classmethod
    def sample(cls, rng: np.random.Generator, scale: float = 1.0) -> "AccretivityTestFn":
        a, b = np.sort(rng.uniform(0.0, scale, size=2))
        a = max(a, 1e-6 * scale)
        if b <= a:
            b = a + 1e-3 * scale
        return cls(float(a), float(b), bool(rng.integers(2)))


@dataclass(frozen=True)
class OperatorPair:
    """A point ``(u, v)`` of the graph of ``dF`` with its certificate ``v = -div X``."""

    u: np.ndarray
    v: np.ndarray
    X: np.ndarray

    @classmethod
    def from_resolvent(cls, u, X, g, tau: float) -> "OperatorPair":
        u = np.asarray(u, dtype=np.float64)
        return cls(u, (np.asarray(g, dtype=np.float64) - u) / tau, np.asarray(X, dtype=np.float64))

    def certificate_residual(self, space: Space, integrand: Integrand) -> float:
        div_res = np.abs(self.v + divergence(space, self.X))
        gaps = fenchel_gap(integrand, differential(space, self.u), self.X)
        return float(max(div_res.max(initial=0.0), gaps.max(initial=0.0)))


def accretivity_test(
    space: Space,
    integrand: Integrand,
    pair1,
    pair2,
    T: AccretivityTestFn,
    *,
    certificate_tol: float = 1e-8,
) -> float:
    """``sum_x nu(x) T(u1 - u2)(x) (v1 - v2)(x)`` for two certified pairs of ``dF``.

    Pairs are :class:`OperatorPair` or ``(u, v, X)`` tuples; a pair whose
    certificate (``v = -div X``, ``X`` in ``dE(du)``) misses
    ``certificate_tol`` raises :class:`UncertifiedPairError`.
    """
    pairs = []
    for pr in (pair1, pair2):
        if not isinstance(pr, OperatorPair):
            if len(pr) != 3:
                raise UncertifiedPairError("pairs need a certificate: pass (u, v, X) or an OperatorPair")
            pr = OperatorPair(*(np.asarray(x, dtype=np.float64) for x in pr))
        res = pr.certificate_residual(space, integrand)
        if res > certificate_tol:
            raise UncertifiedPairError(f"pair certificate residual {res:.3e} exceeds {certificate_tol:g}")
        pairs.append(pr)
    p1, p2 = pairs
    return float(np.dot(space.nu, T(p1.u - p2.u) * (p1.v - p2.v)))


# --------------------------------------------------------------------------
# combined audit of a stored or in-memory trajectory


def trajectory_pairs(trajectory) -> list[OperatorPair]:
    """Operator pairs ``(u_k, (u_{k-1} - u_k) / tau_k, X_k)`` of every step."""
    times = np.asarray(trajectory.times)
    states = np.asarray(trajectory.states)
    out = []
    for k in range(1, len(times)):
        tau = times[k] - times[k - 1]
        out.append(OperatorPair(states[k], (states[k - 1] - states[k]) / tau, np.asarray(trajectory.X[k - 1])))
    return out


def full_audit(
    trajectory,
    tol: float = 1e-8,
    *,
    variational_samples: int = 20,
    accretivity_trials: int = 0,
    seed: int = 0,
    workers: int = 1,
) -> AuditReport:
    """Weak-solution audit, plus sampled variational-inequality and accretivity checks.

    Sample counts of zero skip the corresponding section.  Accretivity
    values must be ``>= -1e-10 * scale``.
    """
    space, integrand = trajectory.space, trajectory.integrand
    report = audit_weak_solution(space, integrand, trajectory, tol)
    rng = np.random.default_rng(seed)

    tests = [random_test_trajectory(trajectory, rng, knots=int(rng.integers(2, 5))) for _ in range(variational_samples)]
    if tests:
        def one(v):
            return variational_inequality_check(space, integrand, trajectory, v, tol)

        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(one, tests))
        else:
            parts = [one(v) for v in tests]
        for i, part in enumerate(parts):
            for c in part.checks:
                report.add(c.name, c.residual, c.tolerance, f"sample {i}: {c.location}")

    pairs = trajectory_pairs(trajectory)
    if accretivity_trials and len(pairs) >= 1:
        spread = float(np.ptp(np.asarray(trajectory.states))) or 1.0
        for i in range(accretivity_trials):
            a, b = rng.integers(len(pairs), size=2)
            T = AccretivityTestFn.sample(rng, spread)
            p1, p2 = pairs[a], pairs[b]
            val = accretivity_test(space, integrand, p1, p2, T, certificate_tol=tol)
            scale = 1.0 + float(np.dot(space.nu, np.abs(T(p1.u - p2.u)) * np.abs(p1.v - p2.v)))
            report.add("accretivity", max(0.0, -val) / scale, 1e-10, f"trial {i}: steps {a + 1},{b + 1}, {T.name}")
    return report
