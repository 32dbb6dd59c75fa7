"""Stationary smoothers used inside the V-cycle.

All smoothers accept any operator exposing ``shape`` (``(nz, ny, nx)``),
``size``, ``apply``, ``diagonal`` and ``to_sparse``; that covers both the
matrix-free fine-grid stencil and the assembled Galerkin coarse operators.
Vectors may be ``(N,)`` arrays or ``(N, k)`` blocks.

Two-colour smoothers (point red-black and plane zebra) update the even
colour first on a forward sweep.  ``reverse=True`` runs the colours in the
opposite order; the V-cycle uses it for post-smoothing so that the
post-smoother is the adjoint of the pre-smoother.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DenseCapError, SmootherError

__all__ = [
    "SMOOTHER_KINDS",
    "SmootherConfig",
    "WorkCounter",
    "Smoother",
    "smooth",
    "smoother_iteration_matrix",
]

SMOOTHER_KINDS = (
    "weighted-jacobi",
    "red-black-gauss-seidel",
    "xy-plane-jacobi",
    "xy-plane-zebra",
)


@dataclass(frozen=True)
class SmootherConfig:
    kind: str = "weighted-jacobi"
    omega: float = 0.8
    plane_tol: float | None = None

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise ValueError(f"unknown smoother kind {self.kind!r}; choose from {SMOOTHER_KINDS}")
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"omega must lie in (0, 2), got {self.omega}")
        if self.plane_tol is not None and self.plane_tol <= 0:
            raise ValueError("plane_tol must be positive")


class WorkCounter:
    """Counts smoothing work: one unit per unknown per sweep."""

    def __init__(self):
        self.units = 0

    def add(self, n: int) -> None:
        self.units += int(n)

    def __repr__(self):
        return f"WorkCounter(units={self.units})"


def _div(v, d):
    return v / d if v.ndim == 1 else v / d[:, None]


def _plane_block_diagonal(M: sp.csr_matrix, m: int) -> sp.csr_matrix:
    """Keep only the couplings inside each z-plane of ``m`` unknowns."""
    C = M.tocoo()
    keep = (C.row // m) == (C.col // m)
    return sp.csr_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=M.shape)


class _PlaneSolver:
    """Direct (or CG, when ``tol`` is given) solver for a set of decoupled planes."""

    def __init__(self, D: sp.csr_matrix, tol: float | None):
        self.D = D
        self.tol = tol
        if tol is None:
            try:
                self.lu = spla.splu(D.tocsc())
            except RuntimeError as exc:
                raise SmootherError(f"plane factorization failed: {exc}") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.tol is None:
            out = self.lu.solve(rhs)
        else:
            cols = rhs[:, None] if rhs.ndim == 1 else rhs
            out = np.empty_like(cols)
            for j in range(cols.shape[1]):
                out[:, j], info = spla.cg(self.D, cols[:, j], rtol=self.tol, atol=0.0)
                if info != 0:
                    raise SmootherError(f"plane CG did not converge (info={info})")
            out = out.reshape(rhs.shape)
        if not np.all(np.isfinite(out)):
            raise SmootherError("plane solve produced non-finite values")
        return out


class Smoother:
    """One level's smoother; factorizations are computed once at construction."""

    def __init__(self, A, cfg: SmootherConfig = SmootherConfig()):
        self.A = A
        self.cfg = cfg
        self.size = A.size
        nz, ny, nx = A.shape
        kind = cfg.kind
        if kind == "weighted-jacobi":
            self.diag = A.diagonal()
            return
        M = A.to_sparse().tocsr()
        if kind == "red-black-gauss-seidel":
            k, j, i = np.indices(A.shape)
            red = ((i + j + k) % 2 == 0).ravel()
            self._colors = [np.flatnonzero(red), np.flatnonzero(~red)]
            diag = M.diagonal()
            self._rows = [M[idx] for idx in self._colors]
            self._cdiag = [diag[idx] for idx in self._colors]
            return
        m = nx * ny
        D = _plane_block_diagonal(M, m)
        if kind == "xy-plane-jacobi":
            self._planes = _PlaneSolver(D, cfg.plane_tol)
            return
        # xy-plane-zebra: even-z planes, then odd-z planes
        plane_of = np.arange(self.size) // m
        even = plane_of % 2 == 0
        self._colors = [np.flatnonzero(even), np.flatnonzero(~even)]
        self._rows = [M[idx] for idx in self._colors]
        self._csolve = [
            _PlaneSolver(D[idx][:, idx].tocsr(), cfg.plane_tol) for idx in self._colors
        ]

    def sweep(self, b: np.ndarray, x: np.ndarray, *, reverse: bool = False,
              work: WorkCounter | None = None) -> np.ndarray:
        """Return ``x`` after one sweep for ``A x = b``; the input is not modified."""
        kind = self.cfg.kind
        if kind == "weighted-jacobi":
            x = x + self.cfg.omega * _div(b - self.A.apply(x), self.diag)
        elif kind == "xy-plane-jacobi":
            x = x + self.cfg.omega * self._planes.solve(b - self.A.apply(x))
        else:
            x = np.array(x, dtype=np.float64, copy=True)
            order = (1, 0) if reverse else (0, 1)
            for c in order:
                idx = self._colors[c]
                res = b[idx] - self._rows[c] @ x
                if kind == "red-black-gauss-seidel":
                    x[idx] += _div(res, self._cdiag[c])
                else:
                    x[idx] += self._csolve[c].solve(res)
        if work is not None:
            work.add(self.size)
        return x


def _check_vec(A, v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != A.size:
        raise ValueError(f"{name} has {v.shape[0]} entries, operator has {A.size} unknowns")
    return v


def smooth(A, b, x, cfg: SmootherConfig = SmootherConfig(), steps: int = 1, *,
           reverse: bool = False, work: WorkCounter | None = None,
           smoother: Smoother | None = None) -> np.ndarray:
    """Apply ``steps`` sweeps of the configured smoother to ``A x = b``."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    b = _check_vec(A, b, "b")
    x = _check_vec(A, x, "x")
    if steps == 0:
        return x
    sm = smoother or Smoother(A, cfg)
    for _ in range(steps):
        x = sm.sweep(b, x, reverse=reverse, work=work)
    return x


def smoother_iteration_matrix(A, cfg: SmootherConfig = SmootherConfig(), *,
                              steps: int = 1, reverse: bool = False,
                              cap: int = 12**3) -> np.ndarray:
    """Dense error-propagation matrix ``E`` with ``x_new = E x_old + c(b)``."""
    if A.size > cap:
        raise DenseCapError(f"{A.size} unknowns exceed the dense cap {cap}")
    sm = Smoother(A, cfg)
    X = np.eye(A.size)
    zero = np.zeros_like(X)
    for _ in range(steps):
        X = sm.sweep(zero, X, reverse=reverse)
    return X
