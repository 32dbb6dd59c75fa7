"""Geometric multigrid V-cycle used as a fixed linear preconditioner ``T``.

Transfers are trilinear (or, for z-semicoarsening, linear-in-z)
interpolation ``P`` with restriction ``R = P'``; coarse operators are the
Galerkin products ``R A P``.  Coarse points sit at the odd (0-based) fine
indices, so a direction of ``n`` points coarsens to ``n // 2``.

Each application runs exactly one V-cycle from a zero initial guess, which
makes ``T`` a fixed linear map.  ``nu_pre`` and ``nu_post`` are independent;
with ``nu_post = 0`` the map is nonsymmetric.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DenseCapError, HierarchyError
from .grid import GridVector, StencilOperator
from .smoothing import Smoother, SmootherConfig, WorkCounter

__all__ = [
    "COARSENINGS",
    "MgConfig",
    "GalerkinOperator",
    "Level",
    "MgHierarchy",
    "MgPreconditioner",
    "build_hierarchy",
    "apply_preconditioner",
    "materialize_preconditioner",
    "smg_config",
    "prolongation_1d",
]

COARSENINGS = ("full", "semicoarsen-z")

# coarsest levels above this size are factored with sparse LU instead of dense Cholesky
DENSE_COARSE_LIMIT = 2000


@dataclass(frozen=True)
class MgConfig:
    nu_pre: int = 1
    nu_post: int = 1
    coarsening: str = "full"
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    coarsest_size: int = 1000

    def __post_init__(self):
        if self.nu_pre < 0 or self.nu_post < 0:
            raise ValueError("smoothing counts must be nonnegative")
        if self.nu_pre + self.nu_post < 1:
            raise ValueError("need at least one smoothing step per cycle")
        if self.coarsening not in COARSENINGS:
            raise ValueError(f"unknown coarsening {self.coarsening!r}; choose from {COARSENINGS}")
        if self.coarsest_size < 1:
            raise ValueError("coarsest_size must be a positive number of unknowns")

    @property
    def cycles_per_application(self) -> int:
        return 1


def smg_config(nu_pre: int = 1, nu_post: int = 1) -> MgConfig:
    """Desk-scale analog of hypre's SMG: z-semicoarsening with zebra plane relaxation,
    coarsened down to the last coarsenable plane count."""
    return MgConfig(nu_pre, nu_post, "semicoarsen-z", SmootherConfig("xy-plane-zebra"), 1)


def prolongation_1d(n: int) -> sp.csr_matrix:
    """Linear interpolation from ``n // 2`` coarse points to ``n`` fine points."""
    nc = n // 2
    rows, cols, vals = [], [], []
    for j in range(nc):
        i = 2 * j + 1
        rows += [i - 1, i]
        cols += [j, j]
        vals += [0.5, 1.0]
        if i + 1 < n:
            rows.append(i + 1)
            cols.append(j)
            vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, nc))


class GalerkinOperator:
    """A coarse-level operator stored as a sparse (27-point at most) stencil matrix."""

    def __init__(self, shape, matrix: sp.csr_matrix):
        self.shape = tuple(shape)
        self.size = int(np.prod(self.shape))
        self.matrix = matrix.tocsr()

    def apply(self, x):
        return self.matrix @ x

    __call__ = apply

    def diagonal(self):
        return self.matrix.diagonal()

    def to_sparse(self):
        return self.matrix

    def to_dense(self):
        return self.matrix.toarray()


@dataclass
class Level:
    operator: object
    smoother: Smoother | None = None
    prolongation: sp.csr_matrix | None = None  # from the next coarser level into this one
    restriction: sp.csr_matrix | None = None

    @property
    def shape(self):
        return self.operator.shape

    @property
    def size(self):
        return self.operator.size


def _coarse_shape(shape, coarsening):
    nz, ny, nx = shape
    if coarsening == "full":
        return (nz // 2, ny // 2, nx // 2)
    return (nz // 2, ny, nx)


def _can_coarsen(shape, coarsening):
    nz, ny, nx = shape
    dims = (nz, ny, nx) if coarsening == "full" else (nz,)
    return all(n >= 3 for n in dims)


def _prolongation(shape, coarsening):
    nz, ny, nx = shape
    Pz = prolongation_1d(nz)
    if coarsening == "full":
        return sp.kron(Pz, sp.kron(prolongation_1d(ny), prolongation_1d(nx))).tocsr()
    return sp.kron(Pz, sp.identity(ny * nx, format="csr")).tocsr()


class MgHierarchy:
    """Grid hierarchy plus coarsest factorization; immutable after construction."""

    def __init__(self, levels: list[Level], coarse_solver, config: MgConfig, fine_operator):
        self.levels = levels
        self.config = config
        self.fine_operator = fine_operator
        self._coarse = coarse_solver

    @property
    def size(self) -> int:
        return self.levels[0].size

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def level_sizes(self) -> list[int]:
        return [lv.size for lv in self.levels]

    def smoothing_units_per_level(self) -> list[int]:
        """Smoothing work units spent on each level during one V-cycle."""
        nu = self.config.nu_pre + self.config.nu_post
        return [nu * lv.size for lv in self.levels[:-1]] + [0]

    def units_per_cycle(self) -> int:
        return sum(self.smoothing_units_per_level())

    def _coarse_solve(self, r):
        kind, fac = self._coarse
        if kind == "cholesky":
            return sla.cho_solve(fac, r)
        return fac.solve(r)

    def _vcycle(self, l: int, r: np.ndarray, work: WorkCounter | None) -> np.ndarray:
        if l == len(self.levels) - 1:
            return self._coarse_solve(r)
        lv = self.levels[l]
        A = lv.operator
        cfg = self.config
        x = np.zeros_like(r)
        for _ in range(cfg.nu_pre):
            x = lv.smoother.sweep(r, x, work=work)
        res = r - A.apply(x) if cfg.nu_pre else r
        x = x + lv.prolongation @ self._vcycle(l + 1, lv.restriction @ res, work)
        for _ in range(cfg.nu_post):
            x = lv.smoother.sweep(r, x, reverse=True, work=work)
        return x

    def apply(self, r, work: WorkCounter | None = None) -> np.ndarray:
        r = r.values if isinstance(r, GridVector) else np.asarray(r, dtype=np.float64)
        if r.shape[0] != self.size or r.ndim > 2:
            raise ValueError(f"residual of shape {r.shape} does not match hierarchy size {self.size}")
        return self._vcycle(0, r, work)

    __call__ = apply

    def summary_rows(self) -> list[dict]:
        rows = []
        units = self.smoothing_units_per_level()
        for i, lv in enumerate(self.levels):
            nz, ny, nx = lv.shape
            rows.append({
                "level": i, "nx": nx, "ny": ny, "nz": nz, "unknowns": lv.size,
                "solve": "smooth" if i < len(self.levels) - 1 else self._coarse[0],
                "work_units_per_cycle": units[i],
            })
        return rows

    def summary_csv(self) -> str:
        rows = self.summary_rows()
        buf = io.StringIO()
        buf.write(",".join(rows[0]) + "\n")
        for row in rows:
            buf.write(",".join(str(v) for v in row.values()) + "\n")
        return buf.getvalue()

    def summary_markdown(self) -> str:
        rows = self.summary_rows()
        head = list(rows[0])
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        lines += ["| " + " | ".join(str(r[h]) for h in head) + " |" for r in rows]
        return "\n".join(lines) + "\n"


def build_hierarchy(A: StencilOperator, cfg: MgConfig = MgConfig()) -> MgHierarchy:
    """Coarsen until the level has at most ``cfg.coarsest_size`` unknowns or can no
    longer be coarsened; the last level is solved directly."""
    shape = A.shape
    if A.size > cfg.coarsest_size and not _can_coarsen(shape, cfg.coarsening):
        raise HierarchyError(
            f"grid {shape[::-1]} exceeds the coarsest size {cfg.coarsest_size} "
            f"but cannot be coarsened ({cfg.coarsening} needs >= 3 points per direction)"
        )
    levels: list[Level] = []
    op = A
    M = A.to_sparse()
    while op.size > cfg.coarsest_size and _can_coarsen(op.shape, cfg.coarsening):
        P = _prolongation(op.shape, cfg.coarsening)
        R = P.T.tocsr()
        levels.append(Level(op, Smoother(op, cfg.smoother), P, R))
        M = (R @ M @ P).tocsr()
        M.sum_duplicates()
        M.eliminate_zeros()
        op = GalerkinOperator(_coarse_shape(op.shape, cfg.coarsening), M)
    levels.append(Level(op))
    if op.size <= DENSE_COARSE_LIMIT:
        coarse = ("cholesky", sla.cho_factor(M.toarray(), lower=True))
    else:
        coarse = ("sparse-lu", spla.splu(M.tocsc()))
    return MgHierarchy(levels, coarse, cfg, A)


def apply_preconditioner(H: MgHierarchy, r, work: WorkCounter | None = None) -> np.ndarray:
    return H.apply(r, work)


def materialize_preconditioner(H: MgHierarchy, cap: int = 12**3) -> np.ndarray:
    """Dense ``T``, assembled by applying one V-cycle to every basis vector."""
    if H.size > cap:
        raise DenseCapError(f"{H.size} unknowns exceed the dense cap {cap}")
    return H.apply(np.eye(H.size))


class MgPreconditioner:
    """Callable ``r -> T r`` that tallies smoothing work across applications."""

    def __init__(self, hierarchy: MgHierarchy):
        self.hierarchy = hierarchy
        self.work = WorkCounter()
        self.applications = 0

    def __call__(self, r):
        self.applications += 1
        return self.hierarchy.apply(r, self.work)

    @classmethod
    def build(cls, A: StencilOperator, cfg: MgConfig = MgConfig()) -> MgPreconditioner:
        return cls(build_hierarchy(A, cfg))
