"""Structured 3D box grid, grid vectors and the 7-point negative Laplacian.

Unknowns live on interior nodes only (homogeneous Dirichlet boundary, unit
spacing) and are ordered lexicographically with x fastest, then y, then z.
A flat array of length ``nx*ny*nz`` therefore reshapes to ``(nz, ny, nx)``.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DiagnosticError

__all__ = [
    "GridSpec",
    "GridVector",
    "StencilOperator",
    "apply_operator",
    "dot",
    "a_inv_norm",
    "laplacian_eigenvalues",
    "smallest_eigenvalue",
    "largest_eigenvalue",
]

_HEADER = struct.Struct("<6q")


@dataclass(frozen=True)
class GridSpec:
    """Node counts per brick and brick factors per direction.

    The global grid is ``(px*nx) x (py*ny) x (pz*nz)`` interior nodes,
    mirroring the ``-n`` / ``-P`` options of hypre's struct driver.
    """

    nx: int
    ny: int
    nz: int
    px: int = 1
    py: int = 1
    pz: int = 1

    def __post_init__(self):
        for name in ("nx", "ny", "nz", "px", "py", "pz"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @classmethod
    def cube(cls, n: int, bricks=(1, 1, 1)) -> GridSpec:
        return cls(n, n, n, *bricks)

    @property
    def dims(self) -> tuple[int, int, int]:
        """Global interior node counts ``(Nx, Ny, Nz)``."""
        return (self.px * self.nx, self.py * self.ny, self.pz * self.nz)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape ``(Nz, Ny, Nx)`` for the lexicographic layout."""
        Nx, Ny, Nz = self.dims
        return (Nz, Ny, Nx)

    @property
    def size(self) -> int:
        Nx, Ny, Nz = self.dims
        return Nx * Ny * Nz


@dataclass
class GridVector:
    """A field of values over the interior nodes of ``spec``."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.spec.size:
            raise ValueError(
                f"vector length {self.values.size} does not match grid size {self.spec.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid vector entries must be finite")

    @classmethod
    def zeros(cls, spec: GridSpec) -> GridVector:
        return cls(spec, np.zeros(spec.size))

    @classmethod
    def ones(cls, spec: GridSpec) -> GridVector:
        return cls(spec, np.ones(spec.size))

    @classmethod
    def random(cls, spec: GridSpec, seed: int = 42) -> GridVector:
        """Uniform [0, 1) entries from numpy's PCG64 generator."""
        return cls(spec, np.random.default_rng(seed).random(spec.size))

    def as_array3d(self) -> np.ndarray:
        return self.values.reshape(self.spec.shape)

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        s = self.spec
        head = _HEADER.pack(s.nx, s.ny, s.nz, s.px, s.py, s.pz)
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> GridVector:
        if len(data) < _HEADER.size:
            raise ValueError("truncated grid vector header")
        spec = GridSpec(*_HEADER.unpack_from(data))
        body = data[_HEADER.size:]
        if len(body) != 8 * spec.size:
            raise ValueError(
                f"payload has {len(body)} bytes, expected {8 * spec.size} for {spec}"
            )
        return cls(spec, np.frombuffer(body, dtype="<f8").astype(np.float64))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> GridVector:
        return cls.from_bytes(Path(path).read_bytes())

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "value"])
            for i, v in enumerate(self.values):
                w.writerow([i, repr(float(v))])

    @classmethod
    def load_csv(cls, path, spec: GridSpec) -> GridVector:
        values = np.zeros(spec.size)
        seen = 0
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                values[int(row["index"])] = float(row["value"])
                seen += 1
        if seen != spec.size:
            raise ValueError(f"CSV holds {seen} entries, expected {spec.size}")
        return cls(spec, values)


def _lap1d(n: int) -> sp.csr_matrix:
    e = np.ones(n)
    return sp.diags([-e[1:], 2 * e, -e[1:]], [-1, 0, 1], format="csr")


class StencilOperator:
    """The SPD matrix of the 7-point negative Laplacian, applied matrix-free.

    Center coefficient 6, the six face neighbours -1; neighbours outside the
    box are dropped.  Instances are immutable and safe to share.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.shape = spec.shape
        self.size = spec.size

    def __repr__(self):
        return f"StencilOperator({self.spec})"

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.size or x.ndim > 2:
            raise ValueError(
                f"vector of shape {x.shape} does not match grid with {self.size} unknowns"
            )
        return x

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return ``A @ x``; ``x`` may be ``(N,)`` or a block ``(N, k)``."""
        x = self._check(x)
        u = x.reshape(self.shape + x.shape[1:])
        y = 6.0 * u
        y[1:] -= u[:-1]
        y[:-1] -= u[1:]
        y[:, 1:] -= u[:, :-1]
        y[:, :-1] -= u[:, 1:]
        y[:, :, 1:] -= u[:, :, :-1]
        y[:, :, :-1] -= u[:, :, 1:]
        return y.reshape(x.shape)

    __call__ = apply

    def diagonal(self) -> np.ndarray:
        return np.full(self.size, 6.0)

    def to_sparse(self) -> sp.csr_matrix:
        """Assembled CSR copy, used for multigrid setup and dense analysis only."""
        Nx, Ny, Nz = self.spec.dims
        Ix, Iy, Iz = (sp.identity(n, format="csr") for n in (Nx, Ny, Nz))
        return (
            sp.kron(Iz, sp.kron(Iy, _lap1d(Nx)))
            + sp.kron(Iz, sp.kron(_lap1d(Ny), Ix))
            + sp.kron(_lap1d(Nz), sp.kron(Iy, Ix))
        ).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def apply_operator(A: StencilOperator, x) -> np.ndarray:
    if isinstance(x, GridVector):
        if x.spec.dims != A.spec.dims:
            raise ValueError(f"vector grid {x.spec} does not match operator grid {A.spec}")
        x = x.values
    return A.apply(x)


def dot(x, y) -> float:
    """Euclidean inner product with a fixed pairwise summation order.

    ``np.multiply`` followed by ``np.sum`` uses numpy's pairwise reduction,
    which does not depend on the thread count.
    """
    x = x.values if isinstance(x, GridVector) else np.asarray(x)
    y = y.values if isinstance(y, GridVector) else np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.sum(np.multiply(x, y)))


def a_inv_norm(
    A: StencilOperator,
    r,
    *,
    rtol: float = 1e-14,
    cap: int = 32**3,
    maxiter: int | None = None,
) -> float:
    """Return sqrt(r' A^{-1} r) via an inner unpreconditioned CG solve."""
    r = r.values if isinstance(r, GridVector) else np.asarray(r, dtype=np.float64)
    if A.size > cap:
        raise ValueError(f"grid has {A.size} unknowns, above the diagnostic cap {cap}")
    if r.shape != (A.size,):
        raise ValueError(f"vector of shape {r.shape} does not match grid with {A.size} unknowns")
    rnorm = math.sqrt(dot(r, r))
    if rnorm == 0.0:
        return 0.0
    maxiter = maxiter or 10 * A.size
    z = np.zeros_like(r)
    res = r.copy()
    p = res.copy()
    rr = dot(res, res)
    for _ in range(maxiter):
        Ap = A.apply(p)
        alpha = rr / dot(p, Ap)
        z += alpha * p
        res -= alpha * Ap
        rr_new = dot(res, res)
        if math.sqrt(rr_new) <= rtol * rnorm:
            break
        p = res + (rr_new / rr) * p
        rr = rr_new
    else:
        raise DiagnosticError(f"inner CG for the A^-1 norm did not reach rtol={rtol:g}")
    return math.sqrt(max(dot(r, z), 0.0))


def laplacian_eigenvalues(dims) -> np.ndarray:
    """All eigenvalues of the 7-point operator on an ``Nx x Ny x Nz`` box, ascending."""
    parts = [4.0 * np.sin(np.arange(1, n + 1) * np.pi / (2 * (n + 1))) ** 2 for n in dims]
    lam = parts[0][:, None, None] + parts[1][None, :, None] + parts[2][None, None, :]
    return np.sort(lam.ravel())


def smallest_eigenvalue(dims) -> float:
    return float(sum(4.0 * math.sin(math.pi / (2 * (n + 1))) ** 2 for n in dims))


def largest_eigenvalue(dims) -> float:
    return float(sum(4.0 * math.cos(math.pi / (2 * (n + 1))) ** 2 for n in dims))
