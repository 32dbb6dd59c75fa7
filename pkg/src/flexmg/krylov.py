"""Preconditioned steepest descent and standard/flexible PCG.

All three methods share one loop::

    s_k = T r_k
    p_k = s_k                       (k = 0, or PSD)
    p_k = s_k + beta_k p_{k-1}      (otherwise)
    alpha_k = (s_k, r_k) / (p_k, A p_k)
    x_{k+1} = x_k + alpha_k p_k
    r_{k+1} = r_k - alpha_k A p_k

and differ only in ``beta_k``:

* ``standard``: (s_k, r_k) / (s_{k-1}, r_{k-1})
* ``flexible``: (s_k, r_k - r_{k-1}) / (s_{k-1}, r_{k-1})
* ``psd``:      0

The flexible variant keeps ``r_{k-1}`` alive, one vector more than the
standard variant.  With a fixed SPD ``T`` the two are identical in exact
arithmetic; with a nonsymmetric ``T`` the standard variant can stall.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FlexMGError
from .grid import GridVector, dot
from .multigrid import MgHierarchy, MgPreconditioner

__all__ = [
    "BETA_VARIANTS",
    "KrylovBreakdown",
    "IterationRecord",
    "SolveReport",
    "solve",
    "beta",
    "record_c_norm",
    "CSV_COLUMNS",
]

BETA_VARIANTS = ("psd", "standard", "flexible")
CSV_COLUMNS = ("k", "r2rel", "rCrel", "alpha", "beta", "work_units", "seconds")

DRIFT_CHECK_EVERY = 10
DRIFT_TOL = 1e-8


class KrylovBreakdown(FlexMGError, ZeroDivisionError):
    """A denominator of the iteration vanished or changed sign."""


@dataclass(frozen=True)
class IterationRecord:
    k: int
    r2rel: float
    rCrel: float | None
    alpha: float
    beta: float
    work_units: int
    seconds: float


@dataclass
class SolveReport:
    variant: str
    tol: float
    outcome: str  # converged | max-iterations | breakdown
    x: np.ndarray = field(repr=False)
    records: list[IterationRecord] = field(default_factory=list)
    initial_r2rel: float = 1.0
    breakdown_reason: str | None = None
    drift_flagged: bool = False
    max_drift: float = 0.0
    residuals: list[np.ndarray] | None = field(default=None, repr=False)
    seconds: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def r2rel(self) -> np.ndarray:
        return np.array([rec.r2rel for rec in self.records])

    @property
    def rCrel(self) -> np.ndarray:
        return np.array([np.nan if rec.rCrel is None else rec.rCrel for rec in self.records])

    @property
    def final_r2rel(self) -> float:
        return self.records[-1].r2rel if self.records else self.initial_r2rel

    @property
    def work_units(self) -> int:
        return self.records[-1].work_units if self.records else 0

    def residual_after(self, k: int) -> float:
        """Relative 2-norm residual after ``k`` iterations (k = 0 is the start)."""
        if k == 0:
            return self.initial_r2rel
        return self.records[k - 1].r2rel

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in self.records:
            w.writerow([
                rec.k, repr(rec.r2rel), "nan" if rec.rCrel is None else repr(rec.rCrel),
                repr(rec.alpha), repr(rec.beta), rec.work_units, f"{rec.seconds:.6f}",
            ])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> str:
        rc = self.records[-1].rCrel if self.records else None
        rc_txt = "undefined" if rc is None else f"{rc:.3e}"
        return (
            f"{self.variant}: {self.outcome} after {self.iterations} iterations, "
            f"r2rel={self.final_r2rel:.3e}, rCrel={rc_txt}, "
            f"work_units={self.work_units}, seconds={self.seconds:.3f}"
        )


def _beta(variant, s, r, r_prev, rho_prev):
    if variant == "psd":
        return 0.0
    if rho_prev == 0.0:
        raise KrylovBreakdown("(s_{k-1}, r_{k-1}) = 0")
    if variant == "standard":
        return dot(s, r) / rho_prev
    return dot(s, r - r_prev) / rho_prev


def beta(variant: str, s_k, r_k, s_km1, r_km1) -> float:
    if variant not in BETA_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {BETA_VARIANTS}")
    if variant == "psd":
        return 0.0
    return _beta(variant, np.asarray(s_k), np.asarray(r_k), np.asarray(r_km1),
                 dot(s_km1, r_km1))


def record_c_norm(T, r, b) -> float | None:
    """sqrt((Tr, r)) / sqrt((Tb, b)), or None when either product is not positive."""
    apply = (lambda v: v) if T is None else T
    num = dot(apply(r), r)
    den = dot(apply(b), b)
    if num < 0 or den <= 0:
        return None
    return math.sqrt(num) / math.sqrt(den)


def _as_array(v, n, name):
    v = v.values if isinstance(v, GridVector) else np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def solve(A, b, T=None, variant: str = "flexible", tol: float = 1e-6, maxit: int = 100,
          x0=None, *, seed: int = 42, c_norm: bool = True,
          record_vectors: bool = False) -> SolveReport:
    """Run PSD / standard PCG / flexible PCG on ``A x = b``.

    ``T`` is ``None`` (identity), an :class:`MgHierarchy`, or any callable
    ``r -> T r``; smoothing work is read from ``T.work`` when present.
    ``x0`` defaults to uniform [0, 1) entries from ``default_rng(seed)``.
    Iteration stops when ``||r_k|| / ||b|| <= tol`` (absolute residual if
    ``b = 0``), after ``maxit`` iterations, or on breakdown.
    """
    if variant not in BETA_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {BETA_VARIANTS}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if maxit < 1:
        raise ValueError("maxit must be at least 1")
    n = A.size
    b = _as_array(b, n, "b")
    x = np.random.default_rng(seed).random(n) if x0 is None else _as_array(x0, n, "x0").copy()
    if isinstance(T, MgHierarchy):
        T = MgPreconditioner(T)
    prec = (lambda v: v.copy()) if T is None else T
    counter = getattr(T, "work", None)
    work0 = counter.units if counter is not None else 0

    def work():
        return (counter.units - work0) if counter is not None else 0

    start = time.perf_counter()
    r = b - A.apply(x)
    bnorm = math.sqrt(dot(b, b))
    scale = bnorm if bnorm > 0 else 1.0
    r2 = math.sqrt(dot(r, r)) / scale
    report = SolveReport(variant, tol, "max-iterations", x, initial_r2rel=r2,
                         residuals=[r.copy()] if record_vectors else None)
    if r2 <= tol or dot(r, r) == 0.0:
        report.outcome = "converged"
        return report

    sb = dot(prec(b), b) if c_norm and bnorm > 0 else 0.0
    units_spent_on_b = work()
    s = prec(r)
    rho = dot(s, r)
    p = None
    r_prev = None  # flexible only: the extra vector
    rho_prev = 0.0
    for k in range(maxit):
        if rho <= 0.0:
            report.outcome = "breakdown"
            report.breakdown_reason = f"(s_k, r_k) = {rho:.3e} <= 0 at k = {k}"
            break
        if k == 0 or variant == "psd":
            bk = 0.0
            p = s
        else:
            bk = _beta(variant, s, r, r_prev, rho_prev)
            p = s + bk * p
        Ap = A.apply(p)
        pAp = dot(p, Ap)
        if pAp <= 0.0:
            report.outcome = "breakdown"
            report.breakdown_reason = f"(p_k, A p_k) = {pAp:.3e} <= 0 at k = {k}"
            break
        alpha = rho / pAp
        x += alpha * p
        if variant == "flexible":
            r_prev = r
        r = r - alpha * Ap
        rho_prev = rho
        if record_vectors:
            report.residuals.append(r.copy())
        if (k + 1) % DRIFT_CHECK_EVERY == 0:
            gap = b - A.apply(x) - r
            drift = math.sqrt(dot(gap, gap)) / scale
            report.max_drift = max(report.max_drift, drift)
            if drift > DRIFT_TOL:
                report.drift_flagged = True
        r2 = math.sqrt(dot(r, r)) / scale
        units = work() - units_spent_on_b
        done = r2 <= tol
        # s_{k+1} feeds the next iteration and the C-norm telemetry of this record
        s = prec(r)
        rho = dot(s, r)
        rC = math.sqrt(rho) / math.sqrt(sb) if (c_norm and rho >= 0 and sb > 0) else None
        report.records.append(IterationRecord(
            k + 1, r2, rC, alpha, bk, units, time.perf_counter() - start))
        if done:
            report.outcome = "converged"
            break
    report.seconds = time.perf_counter() - start
    return report
