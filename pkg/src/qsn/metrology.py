"""Generator matrix, analytic QFI formulas, fidelity and numerical oracles."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDerivative,
    DimensionMismatch,
    NonCommutingGenerators,
    NotOrthogonal,
    NotRankOne,
    ProbabilityOutOfRange,
    ValidationError,
)
from .tensor_core import (
    DensityMatrix,
    SpaceSpec,
    StateVector,
    apply_local,
    build_generator,
    eigendecompose_hermitian,
)

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-12
ASYMMETRY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    H: np.ndarray
    fingerprint: str

    @property
    def K(self) -> int:
        return self.H.shape[0]


def _matrix(H) -> np.ndarray:
    return H.H if isinstance(H, GeneratorMatrix) else np.asarray(H, dtype=float)


def fingerprint(psi: StateVector) -> str:
    return hashlib.sha256(np.ascontiguousarray(psi.amplitudes).tobytes()).hexdigest()[:16]


def generator_matrix(psi: StateVector, space: SpaceSpec | None = None) -> GeneratorMatrix:
    """Centered generator second moments on a pure probe.

    Built as the Gram matrix of the centered vectors (h_i - <h_i>)|psi>, so
    it is positive semidefinite by construction.
    """
    space = space or psi.space
    if space.dims != psi.space.dims:
        raise DimensionMismatch("probe and space dimensions differ")
    amps = psi.amplitudes
    cols = []
    for j in range(space.K):
        hpsi = apply_local(amps, build_generator(space, j).matrix, j, space.dims)
        cols.append(hpsi - np.vdot(amps, hpsi) * amps)
    C = np.array(cols)
    G = C.conj() @ C.T
    if np.max(np.abs(G - G.conj().T), initial=0.0) > ASYMMETRY_TOL:
        raise NonCommutingGenerators("generator matrix is not Hermitian")
    if np.max(np.abs(G.imag), initial=0.0) > 1e-10:
        raise NonCommutingGenerators("generator matrix has an imaginary part")
    H = G.real
    return GeneratorMatrix((H + H.T) / 2, fingerprint(psi))


def qfi_single(H, v) -> float:
    """QFI for g when V = g^2 v: 4 Tr[v H]."""
    H, v = _matrix(H), np.asarray(v, dtype=float)
    if H.shape != v.shape:
        raise DimensionMismatch(f"H {H.shape} and v {v.shape} differ")
    return float(4 * np.trace(v @ H))


def _check_orthogonal(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise NotOrthogonal(f"W must be square, got {W.shape}")
    if np.max(np.abs(W @ W.T - np.eye(len(W)))) > 1e-10:
        raise NotOrthogonal("W is not orthogonal within 1e-10")
    return W


def collective_parameters(V, W) -> tuple[np.ndarray, np.ndarray]:
    """(xi, C) with V' = W V W^T, xi_I^2 = V'_II and V'_IJ = xi_I xi_J C_IJ.

    Correlation coefficients of a collective mode with zero fluctuation are
    undefined and set to 0.
    """
    W = _check_orthogonal(W)
    Vp = W @ np.asarray(V, dtype=float) @ W.T
    xi = np.sqrt(np.clip(np.diag(Vp), 0.0, None))
    denom = np.outer(xi, xi)
    C = np.divide(Vp, denom, out=np.zeros_like(Vp), where=denom > 0)
    np.fill_diagonal(C, 1.0)
    return xi, C


def qfi_matrix_multi(H, W, C, paired: bool = False) -> np.ndarray:
    """QFI matrix for the collective fluctuations xi_I = sqrt((W V W^T)_II).

    Diagonal: 4 w_I^T H w_I. Off-diagonal: c * C_IJ * w_I^T Re(H) w_J with
    c = 4 (default) so the full symmetric quadratic form
    sum_IJ F_IJ xi_I xi_J reproduces 4 Tr[V H]; ``paired=True`` uses c = 8,
    the weight appropriate when each unordered pair (I, J) is summed once.
    """
    H = _matrix(H)
    W = _check_orthogonal(W)
    C = np.asarray(C, dtype=float)
    if np.max(np.abs(C - C.T)) > 1e-12 or np.max(np.abs(np.diag(C) - 1)) > 1e-12:
        raise ValidationError("C must be symmetric with unit diagonal")
    if np.max(np.abs(C)) > 1 + 1e-12:
        raise ValidationError("correlation coefficients must satisfy |C_IJ| <= 1")
    Hw = W @ np.real(H) @ W.T
    F = (8.0 if paired else 4.0) * C * Hw
    np.fill_diagonal(F, 4.0 * np.diag(W @ H @ W.T))
    return F


def quadratic_form(F, xi, paired: bool = False) -> float:
    """sum_IJ F_IJ xi_I xi_J, or over I <= J when ``paired``."""
    F, xi = np.asarray(F), np.asarray(xi)
    if not paired:
        return float(xi @ F @ xi)
    return float(xi @ np.triu(F) @ xi)


def rank_one_factor(v, tol: float = 1e-10) -> tuple[float, np.ndarray]:
    """v = Tr[v] u u^T with u the dominant eigenvector (largest |component| > 0)."""
    v = np.asarray(v, dtype=float)
    mu, Q = np.linalg.eigh(v)
    u = Q[:, -1]
    u = u * np.sign(u[np.argmax(np.abs(u))])
    tr = float(np.trace(v))
    if np.max(np.abs(v - tr * np.outer(u, u))) > tol * max(1.0, np.max(np.abs(v))):
        raise NotRankOne("v is not rank one within tolerance")
    return tr, u


def curse_factor(signal: float, background: float) -> float:
    """signal / (signal + background); 1 without background."""
    if background == 0:
        return 1.0
    return signal / (signal + background)


def qfi_rayleigh_single(g: float, v, Sigma, H) -> float:
    tr, u = rank_one_factor(v)
    sigma2 = 0.0 if Sigma is None else float(u @ np.asarray(Sigma, dtype=float) @ u)
    if sigma2 < -1e-15:
        raise ValidationError("background projection must be non-negative")
    return curse_factor(g**2 * tr, max(sigma2, 0.0)) * qfi_single(H, v)


def qfi_rayleigh_multi(Xi, sigma, W, H) -> np.ndarray:
    W = _check_orthogonal(W)
    Xi, sigma = np.asarray(Xi, dtype=float), np.asarray(sigma, dtype=float)
    if np.any(Xi < 0) or np.any(sigma < 0):
        raise ValidationError("xi and sigma must be non-negative")
    base = 4.0 * np.diag(W @ _matrix(H) @ W.T)
    factor = np.array([curse_factor(x * x, s * s) for x, s in zip(Xi, sigma)])
    return factor * base


def _mat(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    if isinstance(x, DensityMatrix):
        return x.matrix
    return np.asarray(x, dtype=complex)


def uhlmann_fidelity(rho, sigma) -> tuple[float, float]:
    """Uhlmann fidelity and the negative eigenvalue mass floored inside square roots."""
    for x, y in ((rho, sigma), (sigma, rho)):
        if isinstance(x, StateVector):
            m = _mat(y)
            if m.shape[0] != x.amplitudes.size:
                raise DimensionMismatch("fidelity arguments have different dimensions")
            return float(np.vdot(x.amplitudes, m @ x.amplitudes).real), 0.0
    A, B = _mat(rho), _mat(sigma)
    if A.shape != B.shape:
        raise DimensionMismatch("fidelity arguments have different dimensions")
    wa, Ua = np.linalg.eigh((A + A.conj().T) / 2)
    floored = float(-wa[wa < 0].sum())
    sqrtA = (Ua * np.sqrt(np.clip(wa, 0, None))) @ Ua.conj().T
    M = sqrtA @ B @ sqrtA
    wm = np.linalg.eigvalsh((M + M.conj().T) / 2)
    floored += float(-wm[wm < 0].sum())
    F = float(np.sum(np.sqrt(np.clip(wm, 0, None))) ** 2)
    return min(max(F, 0.0), 1.0), floored


def fidelity(rho, sigma) -> float:
    F, floored = uhlmann_fidelity(rho, sigma)
    if floored > 0:
        log.debug("fidelity floored %.3e of negative eigenvalue mass", floored)
    return F


@dataclass
class OracleEstimate:
    """Finite-difference SLD estimate of the QFI at one point."""

    value: float
    richardson: float
    deltas: tuple[float, float]
    values: tuple[float, float]
    dropped_mass: float

    def __float__(self) -> float:
        return self.value


def _sld_qfi(w, U, drho, floor=EIG_FLOOR) -> tuple[float, float]:
    D = U.conj().T @ drho @ U
    S = w[:, None] + w[None, :]
    mask = S > floor
    A = np.abs(D) ** 2
    F = 2 * float(np.sum(A[mask] / S[mask]))
    return F, float(A[~mask].sum())


def default_delta(g0: float) -> float:
    return max(1e-4, g0 / 10)


def qfi_oracle(channel: Callable[[float], object], g0: float, delta: float | None = None, tol: float = 0.05) -> OracleEstimate:
    """Mixed-state QFI by eigendecomposition plus central differences.

    F = 2 sum_kl |<k|d rho|l>|^2 / (lam_k + lam_l), terms with
    lam_k + lam_l below 1e-12 dropped. Evaluated at steps delta and delta/2;
    their Richardson combination is reported alongside.
    """
    delta = default_delta(g0) if delta is None else delta
    if g0 - delta < 0:
        raise ValidationError(f"g0={g0} must exceed the finite-difference step {delta}")
    rho0 = _mat(channel(g0))
    w, U = eigendecompose_hermitian((rho0 + rho0.conj().T) / 2)
    vals, dropped = [], 0.0
    steps = (delta, delta / 2)
    for d in steps:
        drho = (_mat(channel(g0 + d)) - _mat(channel(g0 - d))) / (2 * d)
        F, lost = _sld_qfi(w, U, (drho + drho.conj().T) / 2)
        vals.append(F)
        dropped = max(dropped, lost)
    F1, F2 = vals
    spread = abs(F1 - F2) / max(abs(F2), 1e-15)
    if spread > tol:
        raise DegenerateDerivative(f"oracle values {F1:.6g} and {F2:.6g} differ by {spread:.1%}")
    if dropped > 0:
        log.debug("oracle dropped derivative mass %.3e below the eigenvalue floor", dropped)
    return OracleEstimate(F2, (4 * F2 - F1) / 3, steps, (F1, F2), dropped)


def cfi_binary(p0_of_g: Callable[[float], float], g0: float, rel_step: float = 1e-4) -> float:
    """Classical Fisher information of a two-outcome measurement."""
    p0 = float(p0_of_g(g0))
    if not 0.0 < p0 < 1.0:
        raise ProbabilityOutOfRange(f"p0={p0!r} at g={g0} is not in (0, 1)")
    h = rel_step * g0 if g0 > 0 else rel_step
    dp = (float(p0_of_g(g0 + h)) - float(p0_of_g(g0 - h))) / (2 * h)
    return dp * dp * (1.0 / p0 + 1.0 / (1.0 - p0))


@dataclass
class QfiReport:
    analytic: float
    oracle: float
    deviation: float = field(init=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.deviation = abs(self.analytic - self.oracle) / max(self.analytic, 1e-15)

    def row(self) -> dict:
        d = asdict(self)
        meta = d.pop("meta")
        return {**meta, **d}
