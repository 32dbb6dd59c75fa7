"""LOBPCG for the smallest eigenpairs of the stencil operator.

Each iteration performs Rayleigh-Ritz on span{X, W, P} with
W = T (A X - X Lambda).  ``T`` is applied to the residual block as given,
symmetric or not.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FlexMGError
from .multigrid import MgHierarchy, MgPreconditioner

__all__ = [
    "EigenConfig",
    "EigenReport",
    "RankDeficiency",
    "orthonormalize",
    "rayleigh_ritz",
    "lobpcg_solve",
]

REORTH_THRESHOLD = 0.7071
RANK_TOL = 1e-10


class RankDeficiency(FlexMGError):
    """Trial basis is numerically rank deficient."""


@dataclass(frozen=True)
class EigenConfig:
    m: int = 1
    tol: float = 1e-6
    maxit: int = 100
    seed: int = 42

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("block size m must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.maxit < 0:
            raise ValueError("maxit must be nonnegative")


@dataclass
class EigenReport:
    outcome: str  # converged | max-iterations | breakdown
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    lambdas: list[np.ndarray] = field(default_factory=list, repr=False)
    residuals: list[np.ndarray] = field(default_factory=list, repr=False)
    work_units: list[int] = field(default_factory=list, repr=False)
    seconds: list[float] = field(default_factory=list, repr=False)
    orthonormality: list[float] = field(default_factory=list, repr=False)
    breakdown_reason: str | None = None

    @property
    def iterations(self) -> int:
        """Number of Rayleigh-Ritz updates performed (0 if the start was converged)."""
        return max(len(self.lambdas) - 1, 0)

    def lambda_history(self, j: int = 0) -> np.ndarray:
        return np.array([lam[j] for lam in self.lambdas])

    def to_csv(self, path=None) -> str:
        m = len(self.eigenvalues)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k"] + [f"lambda_{j + 1}" for j in range(m)]
                   + [f"resid_{j + 1}" for j in range(m)] + ["work_units", "seconds"])
        for k, (lam, res) in enumerate(zip(self.lambdas, self.residuals)):
            w.writerow([k] + [repr(float(v)) for v in lam] + [repr(float(v)) for v in res]
                       + [self.work_units[k], f"{self.seconds[k]:.6f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> str:
        lam = ", ".join(f"{v:.12g}" for v in self.eigenvalues)
        res = max(self.residuals[-1]) if self.residuals else float("nan")
        return (f"lobpcg: {self.outcome} after {self.iterations} iterations, "
                f"lambda=[{lam}], max_resid={res:.3e}, "
                f"work_units={self.work_units[-1] if self.work_units else 0}, "
                f"seconds={self.seconds[-1] if self.seconds else 0.0:.3f}")


def orthonormalize(V: np.ndarray, Q: np.ndarray | None = None) -> np.ndarray:
    """Gram-Schmidt the columns of ``V`` against ``Q`` (assumed orthonormal) and
    each other; returns only the new orthonormal columns.

    A column is projected a second time when its norm drops below
    ``REORTH_THRESHOLD`` of the pre-projection norm.  Raises
    :class:`RankDeficiency` if a column vanishes to ``RANK_TOL``.
    """
    basis = np.zeros((V.shape[0], 0)) if Q is None else Q
    new = []
    for j in range(V.shape[1]):
        v = V[:, j].astype(np.float64, copy=True)
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            raise RankDeficiency(f"column {j} is zero")
        after = norm0
        for _ in range(2):
            before = after
            v -= basis @ (basis.T @ v)
            after = np.linalg.norm(v)
            if after >= REORTH_THRESHOLD * before:
                break
        if after <= RANK_TOL * norm0:
            raise RankDeficiency(f"column {j} is numerically dependent ({after / norm0:.1e})")
        v /= after
        new.append(v)
        basis = np.column_stack([basis, v])
    return np.column_stack(new)


def _apply_block(A, V):
    return A.apply(V) if V.ndim == 2 else A.apply(V)[:, None]


def rayleigh_ritz(A, basis: np.ndarray, *, orthonormal: bool = False):
    """Ritz values (ascending) and Ritz vectors of ``A`` on ``span(basis)``."""
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim == 1:
        basis = basis[:, None]
    Q = basis if orthonormal else orthonormalize(basis)
    vals, C = np.linalg.eigh(_symmetric_projection(A, Q))
    return vals, Q @ C


def _precondition(T, R):
    if T is None:
        return R.copy()
    return np.column_stack([T(R[:, j]) for j in range(R.shape[1])])


def lobpcg_solve(A, T=None, cfg: EigenConfig = EigenConfig(), X0=None) -> EigenReport:
    """Compute the ``cfg.m`` smallest eigenpairs of ``A``."""
    n = A.size
    if cfg.m >= n:
        raise ValueError(f"block size {cfg.m} must be much smaller than {n} unknowns")
    if isinstance(T, MgHierarchy):
        T = MgPreconditioner(T)
    counter = getattr(T, "work", None)
    work0 = counter.units if counter is not None else 0
    start = time.perf_counter()

    X = np.random.default_rng(cfg.seed).random((n, cfg.m)) if X0 is None else np.array(X0, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lam, X = rayleigh_ritz(A, X)
    P = None
    report = EigenReport("max-iterations", lam, X)

    for k in range(cfg.maxit + 1):
        AX = _apply_block(A, X)
        lam = np.einsum("ij,ij->j", X, AX)
        R = AX - X * lam
        res = np.linalg.norm(R, axis=0) / np.linalg.norm(X, axis=0)
        report.lambdas.append(lam.copy())
        report.residuals.append(res)
        report.work_units.append((counter.units - work0) if counter is not None else 0)
        report.seconds.append(time.perf_counter() - start)
        report.orthonormality.append(float(np.abs(X.T @ X - np.eye(cfg.m)).max()))
        report.eigenvalues, report.eigenvectors = lam, X
        if np.all(res <= cfg.tol):
            report.outcome = "converged"
            break
        if k == cfg.maxit:
            break
        W = _precondition(T, R)
        blocks = [W] if P is None else [W, P]
        try:
            try:
                Q = orthonormalize(np.column_stack(blocks), X)
            except RankDeficiency:
                Q = orthonormalize(W, X)
        except RankDeficiency as exc:
            report.outcome = "breakdown"
            report.breakdown_reason = str(exc)
            break
        basis = np.column_stack([X, Q])
        _, V = np.linalg.eigh(_symmetric_projection(A, basis))
        C = V[:, :cfg.m]
        X_new = basis @ C
        P = Q @ C[cfg.m:]
        X = X_new
    return report


def _symmetric_projection(A, basis):
    G = basis.T @ _apply_block(A, basis)
    return 0.5 * (G + G.T)
