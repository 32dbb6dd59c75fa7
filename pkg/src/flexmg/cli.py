"""Command-line driver mirroring hypre's ``struct`` test runs at desk scale.

    flexmg --n 80 --solver fpcg --pre 1 --post 0 --out fpcg.csv
    flexmg --n 10 --solver cg --precond none
    flexmg --solver lobpcg --n 10 --P 4 2 2 --post 0
    flexmg --sweep 10 20 30 40 --solver psd --post 0 --out table.csv

Exit codes: 0 converged, 1 invalid flags, 2 iteration cap reached,
3 breakdown.  A sweep returns the worst code over its rows.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import analysis
from .grid import GridSpec, StencilOperator
from .krylov import solve
from .lobpcg import EigenConfig, lobpcg_solve
from .multigrid import COARSENINGS, MgConfig, MgPreconditioner, build_hierarchy, materialize_preconditioner
from .smoothing import SMOOTHER_KINDS, SmootherConfig

__all__ = ["RunConfig", "RunResult", "run", "sweep", "main", "SWEEP_COLUMNS"]

SOLVERS = ("cg", "psd", "pcg", "fpcg", "lobpcg")
_VARIANT = {"cg": "standard", "pcg": "standard", "fpcg": "flexible", "psd": "psd"}
EXIT_CODES = {"converged": 0, "max-iterations": 2, "breakdown": 3}
SWEEP_COLUMNS = ("n", "unknowns", "solver", "precond", "pre", "post", "smoother",
                 "iterations", "outcome", "final_residual", "work_units", "seconds", "error")


@dataclass(frozen=True)
class RunConfig:
    n: int = 10
    P: tuple[int, int, int] = (1, 1, 1)
    solver: str = "fpcg"
    precond: str = "mg"
    pre: int = 1
    post: int = 1
    smoother: str = "weighted-jacobi"
    omega: float = 0.8
    coarsening: str = "full"
    coarsest_size: int = 1000
    tol: float = 1e-6
    maxit: int = 100
    seed: int = 42
    m: int = 1
    out: str | None = None
    threads: int | None = None
    verify: bool = False

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.precond not in ("none", "mg"):
            raise ValueError(f"unknown preconditioner {self.precond!r}")
        if self.solver == "cg" and self.precond != "none":
            raise ValueError("--solver cg is unpreconditioned; use pcg/fpcg with --precond mg")

    @property
    def spec(self) -> GridSpec:
        return GridSpec.cube(self.n, self.P)

    def mg_config(self) -> MgConfig:
        return MgConfig(self.pre, self.post, self.coarsening,
                        SmootherConfig(self.smoother, self.omega), self.coarsest_size)


@dataclass
class RunResult:
    exit_code: int
    report: object
    summary: str
    csv: str
    verification: str | None = None


def _preconditioner(cfg: RunConfig, A):
    if cfg.precond == "none" or cfg.solver == "cg":
        return None
    return MgPreconditioner.build(A, cfg.mg_config())


def _verify(cfg: RunConfig) -> str:
    """Dense analysis on the largest cube that fits the dense cap."""
    px, py, pz = cfg.P
    nv = min(cfg.n, int(math.floor((analysis.DENSE_CAP / (px * py * pz)) ** (1 / 3) + 1e-9)))
    if nv < 1:
        return "verify: brick factors leave no grid within the dense cap\n"
    A = StencilOperator(GridSpec.cube(nv, cfg.P))
    Ad = A.to_dense()
    lines = [f"verify: dense analysis on {'x'.join(map(str, A.spec.dims))} ({A.size} unknowns)"]
    if cfg.precond == "none" or cfg.solver == "cg":
        T = np.eye(A.size)
        label = "identity"
    else:
        mgc = cfg.mg_config()
        if mgc.coarsest_size >= A.size:
            mgc = replace(mgc, coarsest_size=1)
            lines.append("verify: coarsest size lowered to 1 so the small grid keeps several levels")
        T = materialize_preconditioner(build_hierarchy(A, mgc))
        label = f"mg({cfg.pre},{cfg.post})"
    rep = analysis.compute_delta(Ad, T, label=label)
    lines.append(analysis.reports_to_markdown([rep]).rstrip())
    traj = solve(A, np.ones(A.size), lambda r: T @ r, "psd", tol=1e-300, maxit=10,
                 seed=cfg.seed, record_vectors=True).residuals
    sc = analysis.verify_sine_identity(Ad, T, traj)
    lines.append(f"sine identity: max deviation {sc.max_deviation:.3e}, "
                 f"error form {sc.max_error_form_deviation:.3e} over {sc.steps_checked} PSD steps")
    if rep.symmetric:
        t2 = analysis.verify_theorem2(Ad, T)
        lines.append(f"norm equivalence: ||I-AT||_(A^-1) = {t2.lhs:.10f}, ||I-TA||_(T^-1) = {t2.rhs:.10f}, "
                     f"max|1-lambda| = {t2.spectral:.10f}")
        Ts, _ = analysis.prescale(T, Ad)
        traj_s = solve(A, np.ones(A.size), lambda r: Ts @ r, "psd", tol=1e-300, maxit=10,
                       seed=cfg.seed, record_vectors=True).residuals
        worst = analysis.contraction_ratios(Ad, traj_s).max()
        lines.append(f"contraction: worst PSD step ratio {worst:.6f} vs delta {rep.delta:.6f}")
    else:
        lines.append("norm equivalence: skipped (T is not symmetric)")
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig) -> RunResult:
    A = StencilOperator(cfg.spec)
    T = _preconditioner(cfg, A)
    if cfg.solver == "lobpcg":
        report = lobpcg_solve(A, T, EigenConfig(cfg.m, cfg.tol, cfg.maxit, cfg.seed))
    else:
        report = solve(A, np.ones(A.size), T, _VARIANT[cfg.solver], cfg.tol, cfg.maxit, seed=cfg.seed)
    text = report.to_csv(cfg.out)
    verification = _verify(cfg) if cfg.verify else None
    return RunResult(EXIT_CODES[report.outcome], report, report.summary(), text, verification)


def sweep(template: RunConfig, ns) -> list[dict]:
    """One run per grid size; failures are recorded per row and the sweep continues."""
    rows = []
    for n in ns:
        cfg = replace(template, n=int(n), out=None, verify=False)
        row = dict(n=cfg.n, unknowns=None, solver=cfg.solver, precond=cfg.precond,
                   pre=cfg.pre, post=cfg.post, smoother=cfg.smoother, iterations=None,
                   outcome="error", final_residual=None, work_units=None, seconds=None, error="")
        t0 = time.perf_counter()
        try:
            res = run(cfg)
            rep = res.report
            row.update(unknowns=cfg.spec.size, iterations=rep.iterations, outcome=rep.outcome)
            if cfg.solver == "lobpcg":
                row.update(final_residual=float(max(rep.residuals[-1])), work_units=rep.work_units[-1])
            else:
                row.update(final_residual=rep.final_r2rel, work_units=rep.work_units)
        except Exception as exc:  # noqa: BLE001 - recorded per row by design
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["seconds"] = round(time.perf_counter() - t0, 6)
        rows.append(row)
    return rows


def sweep_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flexmg", description="Multigrid-preconditioned PSD / PCG / flexible PCG / "
                "LOBPCG on the 7-point Laplacian in a brick.")
    d = RunConfig()
    p.add_argument("--n", type=int, default=d.n, help="nodes per direction per brick (default %(default)s)")
    p.add_argument("--P", type=int, nargs=3, default=list(d.P), metavar=("PX", "PY", "PZ"),
                   help="brick factors; the grid is PX*n x PY*n x PZ*n")
    p.add_argument("--solver", choices=SOLVERS, default=d.solver)
    p.add_argument("--precond", choices=("none", "mg"), default=d.precond)
    p.add_argument("--pre", type=int, default=d.pre, help="pre-smoothing sweeps per V-cycle")
    p.add_argument("--post", type=int, default=d.post, help="post-smoothing sweeps per V-cycle")
    p.add_argument("--smoother", choices=SMOOTHER_KINDS, default=d.smoother)
    p.add_argument("--omega", type=float, default=d.omega, help="Jacobi damping weight")
    p.add_argument("--coarsening", choices=COARSENINGS, default=d.coarsening)
    p.add_argument("--coarsest-size", type=int, default=d.coarsest_size, dest="coarsest_size")
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--maxit", type=int, default=d.maxit)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--m", type=int, default=d.m, help="LOBPCG block size")
    p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
    p.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread limit")
    p.add_argument("--verify", action="store_true",
                   help="also run the dense analysis suite on a dense-capped grid")
    p.add_argument("--sweep", type=int, nargs="*", default=None, metavar="N",
                   help="run once per grid size N and emit the iterations/work table")
    return p


def _config_from_args(ns) -> RunConfig:
    return RunConfig(
        n=ns.n, P=tuple(ns.P), solver=ns.solver, precond=ns.precond, pre=ns.pre, post=ns.post,
        smoother=ns.smoother, omega=ns.omega, coarsening=ns.coarsening,
        coarsest_size=ns.coarsest_size, tol=ns.tol, maxit=ns.maxit, seed=ns.seed, m=ns.m,
        out=ns.out, threads=ns.threads, verify=ns.verify,
    )


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = _config_from_args(ns)
        if cfg.solver != "lobpcg":
            cfg.mg_config()
        cfg.spec
    except ValueError as exc:
        parser.error(str(exc))

    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=cfg.threads):
        if ns.sweep is not None:
            rows = sweep(cfg, ns.sweep)
            text = sweep_csv(rows, cfg.out)
            if cfg.out is None:
                sys.stdout.write(text)
            codes = [EXIT_CODES.get(r["outcome"], 1) for r in rows]
            return max(codes, default=0)
        try:
            res = run(cfg)
        except ValueError as exc:
            parser.error(str(exc))
    if cfg.out is None:
        sys.stdout.write(res.csv)
        print(res.summary, file=sys.stderr)
    else:
        print(res.summary)
    if res.verification:
        sys.stdout.write(res.verification)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
