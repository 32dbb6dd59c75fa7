"""Dense small-grid checks of the PSD convergence theory.

Everything here works on explicit matrices: ``A`` from
``StencilOperator.to_dense()`` and ``T`` from ``materialize_preconditioner``.
Operator norms induced by a weighted vector norm ``||x||_W = sqrt(x' W x)``
are evaluated as ``||W^{1/2} M W^{-1/2}||_2`` with ``W^{1/2}`` from a
symmetric eigendecomposition.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DenseCapError, NotPrescalableError, PreconditionViolation

__all__ = [
    "DENSE_CAP",
    "SpectralReport",
    "SineCheck",
    "Theorem2Check",
    "symmetry_defect",
    "operator_norm",
    "spectrum_TA",
    "prescale",
    "compute_delta",
    "verify_sine_identity",
    "verify_theorem2",
    "contraction_ratios",
    "reports_to_csv",
    "reports_to_markdown",
]

DENSE_CAP = 12**3
SYMMETRY_TOL = 1e-10
IMAG_TOL = 1e-10


def _check(M, cap, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if M.shape[0] > cap:
        raise DenseCapError(f"{name} of order {M.shape[0]} exceeds the dense cap {cap}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def symmetry_defect(T) -> float:
    """||T - T'||_F / ||T||_F."""
    T = np.asarray(T)
    nrm = np.linalg.norm(T, "fro")
    return float(np.linalg.norm(T - T.T, "fro") / nrm) if nrm else 0.0


def _spd_power(W, power):
    lam, V = np.linalg.eigh(0.5 * (W + W.T))
    if lam[0] <= 0:
        raise PreconditionViolation(f"weight matrix is not positive definite (min eig {lam[0]:.3e})")
    return (V * lam**power) @ V.T


def operator_norm(M, W, *, inverse: bool = False) -> float:
    """Norm of ``M`` induced by ``sqrt(x' W x)``, or by ``sqrt(x' W^{-1} x)`` if ``inverse``."""
    half = -0.5 if inverse else 0.5
    return float(np.linalg.norm(_spd_power(W, half) @ M @ _spd_power(W, -half), 2))


def spectrum_TA(T, A, *, symmetric: bool | None = None) -> np.ndarray:
    """Eigenvalues of ``TA``; real and ascending when ``T`` is symmetric."""
    if symmetric is None:
        symmetric = symmetry_defect(T) <= SYMMETRY_TOL
    if symmetric:
        Ah = _spd_power(A, 0.5)
        S = Ah @ (0.5 * (T + T.T)) @ Ah
        return np.linalg.eigvalsh(0.5 * (S + S.T))
    return np.linalg.eigvals(T @ A)


@dataclass
class SpectralReport:
    delta: float
    kappa: float
    lambda_min: float
    lambda_max: float
    symmetry_defect: float
    scale_factor: float
    symmetric: bool
    complex_spectrum: bool = False
    label: str = ""

    def as_row(self) -> dict:
        return asdict(self)


def _real_extremes(lam, allow_complex):
    flagged = False
    if np.iscomplexobj(lam):
        scale = np.max(np.abs(lam))
        if np.max(np.abs(lam.imag)) > IMAG_TOL * scale:
            if not allow_complex:
                raise NotPrescalableError("Lambda(TA) is complex")
            flagged = True
        lam = lam.real
    lo, hi = float(np.min(lam)), float(np.max(lam))
    if lo <= 0:
        raise NotPrescalableError(f"Lambda(TA) is not positive (min {lo:.3e})")
    return lo, hi, flagged


def prescale(T, A, *, allow_complex: bool = False, cap: int = DENSE_CAP):
    """Return ``(c T, c)`` with ``c = 2 / (max Lambda(TA) + min Lambda(TA))``."""
    T = _check(T, cap, "T")
    A = _check(A, cap, "A")
    lo, hi, _ = _real_extremes(spectrum_TA(T, A), allow_complex)
    c = 2.0 / (lo + hi)
    return c * T, c


def compute_delta(A, T, *, cap: int = DENSE_CAP, label: str = "") -> SpectralReport:
    """``delta = ||I - A T_s||_{A^-1}`` for the prescaled ``T_s``, plus spectral data.

    Nonsymmetric ``T`` is prescaled with the real parts of ``Lambda(TA)``; the
    report is flagged when that spectrum has a nonnegligible imaginary part.
    """
    A = _check(A, cap, "A")
    T = _check(T, cap, "T")
    defect = symmetry_defect(T)
    symmetric = defect <= SYMMETRY_TOL
    lo, hi, flagged = _real_extremes(spectrum_TA(T, A, symmetric=symmetric), allow_complex=True)
    c = 2.0 / (lo + hi)
    Ts = c * T
    delta = operator_norm(np.eye(len(A)) - A @ Ts, A, inverse=True)
    return SpectralReport(
        delta=delta, kappa=hi / lo, lambda_min=c * lo, lambda_max=c * hi,
        symmetry_defect=defect, scale_factor=c, symmetric=symmetric,
        complex_spectrum=flagged, label=label,
    )


@dataclass
class SineCheck:
    max_deviation: float
    max_error_form_deviation: float
    ratios: np.ndarray
    sines: np.ndarray
    steps_checked: int


def verify_sine_identity(A, T, trajectory, *, cap: int = DENSE_CAP) -> SineCheck:
    """Compare ``||r_{k+1}||_{A^-1} / ||r_k||_{A^-1}`` with ``sin angle_{A^-1}(r_k, A T r_k)``
    along a PSD trajectory, and the same in error form with ``e_k = A^{-1} r_k``."""
    A = _check(A, cap, "A")
    T = _check(T, cap, "T")
    chol = sla.cho_factor(A)
    ratios, sines, dev_err = [], [], []
    for r, r_next in zip(trajectory[:-1], trajectory[1:]):
        e = sla.cho_solve(chol, r)
        nr = math.sqrt(max(r @ e, 0.0))
        if nr == 0.0:
            break
        e_next = sla.cho_solve(chol, r_next)
        ratio = math.sqrt(max(r_next @ e_next, 0.0)) / nr
        Tr = T @ r
        cos = abs(r @ Tr) / (nr * math.sqrt(max(Tr @ (A @ Tr), 0.0)))
        sine = math.sqrt(max(1.0 - cos * cos, 0.0))
        # error form in the A-norm
        ne = math.sqrt(e @ (A @ e))
        TAe = T @ (A @ e)
        cos_e = abs(e @ (A @ TAe)) / (ne * math.sqrt(TAe @ (A @ TAe)))
        ratio_e = math.sqrt(e_next @ (A @ e_next)) / ne
        ratios.append(ratio)
        sines.append(sine)
        dev_err.append(abs(ratio_e - math.sqrt(max(1.0 - cos_e * cos_e, 0.0))))
    ratios, sines = np.array(ratios), np.array(sines)
    return SineCheck(
        max_deviation=float(np.max(np.abs(ratios - sines))) if len(ratios) else 0.0,
        max_error_form_deviation=float(max(dev_err)) if dev_err else 0.0,
        ratios=ratios, sines=sines, steps_checked=len(ratios),
    )


@dataclass
class Theorem2Check:
    lhs: float  # ||I - A T||_{A^-1}
    rhs: float  # ||I - T A||_{T^-1}
    deviation: float
    spectral: float  # max |1 - lambda| over Lambda(TA)
    scale_factor: float


def verify_theorem2(A, T, *, scale: bool = True, cap: int = DENSE_CAP) -> Theorem2Check:
    """Evaluate both sides of the equivalence for SPD ``T`` (prescaled by default)."""
    A = _check(A, cap, "A")
    T = _check(T, cap, "T")
    if symmetry_defect(T) > SYMMETRY_TOL:
        raise PreconditionViolation(f"T is not symmetric (defect {symmetry_defect(T):.2e})")
    T = 0.5 * (T + T.T)
    if np.linalg.eigvalsh(T)[0] <= 0:
        raise PreconditionViolation("T is not positive definite")
    c = 1.0
    if scale:
        T, c = prescale(T, A, cap=cap)
    eye = np.eye(len(A))
    lhs = operator_norm(eye - A @ T, A, inverse=True)
    rhs = operator_norm(eye - T @ A, T, inverse=True)
    spectral = float(np.max(np.abs(1.0 - spectrum_TA(T, A, symmetric=True))))
    return Theorem2Check(lhs, rhs, abs(lhs - rhs), spectral, c)


def contraction_ratios(A, trajectory, *, cap: int = DENSE_CAP) -> np.ndarray:
    """Per-step ``||r_{k+1}||_{A^-1} / ||r_k||_{A^-1}`` along a trajectory."""
    A = _check(A, cap, "A")
    chol = sla.cho_factor(A)
    norms = np.array([math.sqrt(max(r @ sla.cho_solve(chol, r), 0.0)) for r in trajectory])
    nz = norms[:-1] > 0
    return norms[1:][nz] / norms[:-1][nz]


_COLUMNS = ("label", "delta", "kappa", "lambda_min", "lambda_max",
            "symmetry_defect", "scale_factor", "symmetric", "complex_spectrum")


def reports_to_csv(reports, path=None) -> str:
    buf = io.StringIO()
    buf.write(",".join(_COLUMNS) + "\n")
    for rep in reports:
        row = rep.as_row()
        buf.write(",".join(str(row[c]) if not isinstance(row[c], float) else repr(row[c])
                           for c in _COLUMNS) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def reports_to_markdown(reports) -> str:
    lines = ["| " + " | ".join(_COLUMNS) + " |", "|" + "---|" * len(_COLUMNS)]
    for rep in reports:
        row = rep.as_row()
        cells = [f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in _COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
