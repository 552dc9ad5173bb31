"""Command-line front end.

    metricflow flow      --graph G --energy SPEC --u0 SRC --tau F --steps N --out DIR
    metricflow resolvent --graph G --energy SPEC --u0 SRC --tau F --out DIR
    metricflow audit     --out DIR [--variational N] [--accretivity N]

Exit codes: 0 success, 1 input error, 2 solver non-convergence, 3 audit failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .certify import full_audit
from .energies import IntegrandError, fenchel_gap, parse_integrand
from .flow import FlowConfig, FlowError, Trajectory, run_flow
from .io import (
    CERTIFICATE_FILE,
    REPORT_FILE,
    TRAJECTORY_FILE,
    FormatError,
    initial_data,
    load_run,
    read_graph,
    write_certificates_csv,
    write_report,
    write_trajectory_csv,
)
from .resolvent import ConvergenceError, ResolventProblem, primal_dual_gap, solve_resolvent
from .space import SpaceError, differential

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_AUDIT = 0, 1, 2, 3

log = logging.getLogger("metricflow")


@dataclass
class RunConfig:
    graph: str
    energy: str
    u0: str
    tau: float
    steps: int
    tol: float
    out: Path
    audit: str = "none"
    seed: int = 0
    max_iter: int = 200_000
    audit_tol: float = 1e-8
    variational: int = 20
    accretivity: int = 0

    def validate(self) -> None:
        for name in ("tau", "tol", "audit_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"--{name.replace('_', '-')} must be positive")
        for name in ("steps", "max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"--{name.replace('_', '-')} must be >= 1")
        if self.variational < 0 or self.accretivity < 0:
            raise ValueError("sample counts must be >= 0")


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("METRICFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _add_run_args(p: argparse.ArgumentParser, steps: bool) -> None:
    p.add_argument("--graph", required=True, help="graph JSON file or preset:pair|triangle|path:N|cycle:N|complete:N")
    p.add_argument("--energy", required=True, help='integrand spec, e.g. "p:2", "qp:1.5,3", "1p:2"')
    p.add_argument("--u0", required=True, help="indicator:<ids>, random[:seed], constant:c, values:x1,..., or a file")
    p.add_argument("--tau", type=float, default=1.0)
    if steps:
        p.add_argument("--steps", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-9, help="resolvent certificate tolerance")
    p.add_argument("--max-iter", type=int, default=200_000)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--audit", choices=("none", "full"), default="none")
    p.add_argument("--audit-tol", type=float, default=1e-8)
    p.add_argument("--variational", type=int, default=20, help="variational-inequality samples (full audit)")
    p.add_argument("--accretivity", type=int, default=0, help="accretivity trials (full audit)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metricflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("flow", help="run an implicit-Euler flow"), steps=True)
    _add_run_args(sub.add_parser("resolvent", help="solve a single resolvent step"), steps=False)
    a = sub.add_parser("audit", help="audit a stored run directory")
    a.add_argument("--out", "--dir", dest="out", required=True, type=Path, help="directory written by flow/resolvent")
    a.add_argument("--graph", default=None, help="override the graph stored in report.json")
    a.add_argument("--energy", default=None, help="override the integrand stored in report.json")
    a.add_argument("--tol", type=float, default=1e-8)
    a.add_argument("--variational", type=int, default=20)
    a.add_argument("--accretivity", type=int, default=0)
    a.add_argument("--seed", type=int, default=0)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(
        graph=args.graph,
        energy=args.energy,
        u0=args.u0,
        tau=args.tau,
        steps=getattr(args, "steps", 1),
        tol=args.tol,
        out=args.out,
        audit=args.audit,
        seed=args.seed,
        max_iter=args.max_iter,
        audit_tol=args.audit_tol,
        variational=args.variational,
        accretivity=args.accretivity,
    )
    cfg.validate()
    return cfg


def _write_run(cfg: RunConfig, traj, extra: dict) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    space = traj.space
    write_trajectory_csv(cfg.out / TRAJECTORY_FILE, space, traj.times, traj.states)
    write_certificates_csv(cfg.out / CERTIFICATE_FILE, space, traj.X, traj.X1, traj.X2, traj.gaps)
    tol_ok = bool(np.all(traj.residuals <= cfg.tol)) if traj.steps else True
    report = {
        "graph": space.to_dict(),
        "integrand": traj.integrand.spec(),
        "tau": cfg.tau,
        "steps": traj.steps,
        "tol": cfg.tol,
        "seed": cfg.seed,
        "u0": cfg.u0,
        "diagnostics": traj.diagnostics(),
        "certificates_passed": tol_ok,
        **extra,
    }
    code = EXIT_OK if tol_ok else EXIT_SOLVER
    if cfg.audit == "full":
        audit = full_audit(
            traj,
            cfg.audit_tol,
            variational_samples=cfg.variational,
            accretivity_trials=cfg.accretivity,
            seed=cfg.seed,
            workers=_workers(),
        )
        report["audit"] = audit.to_dict()
        if not audit.passed:
            print(audit.summary(), file=sys.stderr)
            code = EXIT_AUDIT if code == EXIT_OK else code
    write_report(cfg.out / REPORT_FILE, report)
    return code


def cmd_flow(cfg: RunConfig) -> int:
    space = read_graph(cfg.graph)
    integrand = parse_integrand(cfg.energy)
    u0 = initial_data(space, cfg.u0, cfg.seed)
    try:
        traj = run_flow(space, integrand, u0, FlowConfig(tau=cfg.tau, steps=cfg.steps, tol=cfg.tol, max_iter=cfg.max_iter))
    except FlowError as exc:
        print(f"error: solver did not converge at step {exc.step}: {exc}", file=sys.stderr)
        if exc.partial is not None and exc.partial.steps:
            _write_run(cfg, exc.partial, {"failed_step": exc.step})
        return EXIT_SOLVER
    return _write_run(cfg, traj, {})


def cmd_resolvent(cfg: RunConfig) -> int:
    space = read_graph(cfg.graph)
    integrand = parse_integrand(cfg.energy)
    g = initial_data(space, cfg.u0, cfg.seed)
    try:
        sol = solve_resolvent(ResolventProblem(space, integrand, g, cfg.tau, tol=cfg.tol, max_iter=cfg.max_iter))
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    cfg.steps = 1
    du = differential(space, sol.u)
    traj = Trajectory(
        space,
        integrand,
        times=np.array([0.0, cfg.tau]),
        states=np.stack([g, sol.u]),
        X=sol.X[None, :],
        X1=sol.X1[None, :],
        X2=sol.X2[None, :],
        gaps=fenchel_gap(integrand, du, sol.X)[None, :],
        residuals=np.array([[sol.divergence_residual, sol.edge_gap, sol.split_residual]]),
        iterations=np.array([sol.iterations]),
    )
    return _write_run(cfg, traj, {"primal_dual_gap": primal_dual_gap(space, integrand, sol.u, sol.X, g, cfg.tau),
                                  "iterations": sol.iterations})


def cmd_audit(args: argparse.Namespace) -> int:
    space = read_graph(args.graph) if args.graph else None
    integrand = parse_integrand(args.energy) if args.energy else None
    traj = load_run(args.out, space, integrand)
    report = full_audit(
        traj,
        args.tol,
        variational_samples=args.variational,
        accretivity_trials=args.accretivity,
        seed=args.seed,
        workers=_workers(),
    )
    write_report(Path(args.out) / "audit.json", report.to_dict())
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_AUDIT


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "audit":
            return cmd_audit(args)
        cfg = _config(args)
        return cmd_flow(cfg) if args.command == "flow" else cmd_resolvent(cfg)
    except (SpaceError, IntegrandError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
