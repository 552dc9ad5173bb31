"""Implicit-Euler (minimizing movement) trajectories with per-step certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energies import Integrand, energy, fenchel_gap
from .resolvent import DEFAULT_MAX_ITER, DEFAULT_TOL, ConvergenceError, ResolventProblem, solve_resolvent
from .space import Space, as_vertex_function, differential


class FlowError(RuntimeError):
    """A resolvent step failed; ``step`` is the 1-based index of the failing step."""

    def __init__(self, message: str, step: int, partial: "Trajectory | None" = None):
        super().__init__(message)
        self.step = step
        self.partial = partial


@dataclass(frozen=True)
class FlowConfig:
    """Uniform step ``tau`` for ``steps`` steps, or an explicit ``schedule`` of step sizes."""

    tau: float = 1.0
    steps: int = 1
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    schedule: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.schedule is not None:
            sched = tuple(float(t) for t in self.schedule)
            object.__setattr__(self, "schedule", sched)
            object.__setattr__(self, "steps", len(sched))
        if int(self.steps) < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not all(t > 0 and math.isfinite(t) for t in self.step_sizes()):
            raise ValueError("all step sizes must be positive and finite")

    def step_sizes(self) -> tuple[float, ...]:
        if self.schedule is not None:
            return self.schedule
        return (float(self.tau),) * int(self.steps)


@dataclass
class Trajectory:
    """States ``u_0..u_K`` with certificates ``X_1..X_K``.

    Arrays are stacked along the first axis: ``states`` has shape
    ``(K+1, n)``; ``X``, ``X1``, ``X2`` and ``gaps`` have shape ``(K, E)``.
    ``residuals`` rows hold (divergence, edge gap, split) per step.
    """

    space: Space
    integrand: Integrand
    times: np.ndarray
    states: np.ndarray
    X: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    gaps: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def energies(self) -> np.ndarray:
        return np.array([energy(self.space, self.integrand, differential(self.space, u)).value for u in self.states])

    @property
    def masses(self) -> np.ndarray:
        return self.states @ self.space.nu

    @property
    def step_norms(self) -> np.ndarray:
        du = np.diff(self.states, axis=0)
        return np.sqrt((du * du) @ self.space.nu)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def diagnostics(self) -> dict:
        return {
            "integrand": self.integrand.spec(),
            "times": self.times.tolist(),
            "energy": self.energies.tolist(),
            "mass": self.masses.tolist(),
            "step_norm": [0.0] + self.step_norms.tolist(),
            "divergence_residual": [0.0] + self.residuals[:, 0].tolist(),
            "edge_gap": [0.0] + self.residuals[:, 1].tolist(),
            "split_residual": [0.0] + self.residuals[:, 2].tolist(),
            "iterations": [0] + [int(i) for i in self.iterations],
        }


def run_flow(
    space: Space,
    integrand: Integrand,
    u0,
    config: FlowConfig,
    *,
    backend: str | None = None,
) -> Trajectory:
    """Iterate ``u_{k+1} = argmin E(du) + |u - u_k|^2 / (2 tau_k)`` and collect certificates.

    Each step carries ``X_{k+1}`` with ``(u_{k+1} - u_k) / tau_k = div X_{k+1}``
    and ``X_{k+1}`` in ``dE(du_{k+1})`` to the configured tolerance.
    A failing step raises :class:`FlowError` with the step index and the
    trajectory computed so far.
    """
    u = as_vertex_function(space, u0).copy()
    taus = config.step_sizes()
    K, E = len(taus), space.n_edges
    states = np.empty((K + 1, space.n))
    states[0] = u
    X = np.zeros((K, E))
    X1 = np.zeros((K, E))
    X2 = np.zeros((K, E))
    gaps = np.zeros((K, E))
    residuals = np.zeros((K, 3))
    iterations = np.zeros(K, dtype=int)
    times = np.concatenate([[0.0], np.cumsum(taus)])

    def partial(k: int) -> Trajectory:
        return Trajectory(space, integrand, times[: k + 1], states[: k + 1], X[:k], X1[:k], X2[:k], gaps[:k],
                          residuals[:k], iterations[:k])

    for k, tau in enumerate(taus):
        problem = ResolventProblem(space, integrand, u, tau, tol=config.tol, max_iter=config.max_iter)
        try:
            sol = solve_resolvent(problem, backend=backend)
        except ConvergenceError as exc:
            raise FlowError(f"step {k + 1}: {exc}", k + 1, partial(k)) from exc
        u = sol.u
        states[k + 1] = u
        X[k], X1[k], X2[k] = sol.X, sol.X1, sol.X2
        gaps[k] = fenchel_gap(integrand, differential(space, u), sol.X)
        residuals[k] = (sol.divergence_residual, sol.edge_gap, sol.split_residual)
        iterations[k] = sol.iterations
    return Trajectory(space, integrand, times, states, X, X1, X2, gaps, residuals, iterations)


def dissipation_report(trajectory: Trajectory) -> np.ndarray:
    """Per step ``(F(u_{k+1}) - F(u_k), |u_{k+1} - u_k|^2_nu / tau_k)``.

    Implicit Euler guarantees ``dF <= -|du|^2 / tau`` at every step.
    """
    if trajectory.steps < 1:
        raise ValueError("dissipation report needs at least two states")
    dF = np.diff(trajectory.energies)
    return np.column_stack([dF, trajectory.step_norms**2 / trajectory.taus])


def _weighted_norm(nu: np.ndarray, w: np.ndarray, r: float) -> float:
    if math.isinf(r):
        return float(np.max(np.abs(w))) if w.size else 0.0
    return float(np.dot(nu, np.abs(w) ** r) ** (1.0 / r))


def contraction_check(
    traj1: Trajectory,
    traj2: Trajectory,
    r: float = 2,
    *,
    positive_part: bool = True,
    atol: float = 1e-10,
) -> np.ndarray:
    """Per step, whether ``|(u1_k - u2_k)^+|_{r,nu}`` did not increase (within ``atol``).

    With ``positive_part=False`` the full difference norm is used instead.
    Both trajectories must share the space, integrand and time grid.
    """
    if traj1.space is not traj2.space and traj1.space.to_dict() != traj2.space.to_dict():
        raise ValueError("trajectories live on different spaces")
    if traj1.integrand != traj2.integrand:
        raise ValueError("trajectories use different integrands")
    if traj1.times.shape != traj2.times.shape or not np.allclose(traj1.times, traj2.times, rtol=0, atol=1e-14):
        raise ValueError("trajectories have mismatched time grids")
    diff = traj1.states - traj2.states
    if positive_part:
        diff = np.maximum(diff, 0.0)
    norms = np.array([_weighted_norm(traj1.space.nu, w, float(r)) for w in diff])
    return norms[1:] <= norms[:-1] + atol


def refinement_diagnostic(space: Space, integrand: Integrand, u0, config: FlowConfig, *, norm: float = 2) -> np.ndarray:
    """``|u^tau(t_k) - u^{tau/2}(t_k)|_{nu}`` at the coarse grid times.

    A self-consistency indicator only; no convergence rate is implied.
    """
    coarse = run_flow(space, integrand, u0, config)
    fine_sched: list[float] = []
    for t in config.step_sizes():
        fine_sched += [t / 2, t / 2]
    fine = run_flow(space, integrand, u0, FlowConfig(schedule=tuple(fine_sched), tol=config.tol, max_iter=config.max_iter))
    return np.array([_weighted_norm(space.nu, a - b, norm) for a, b in zip(coarse.states, fine.states[::2])])


def steady_state(space: Space, u0) -> np.ndarray:
    """Limit of every flow from ``u0``: the nu-weighted mean on each connected component."""
    return space.component_means(as_vertex_function(space, u0))
