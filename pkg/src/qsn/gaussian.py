"""Symplectic mean/covariance backend for continuous-variable scenarios.

Phase-space ordering is site-major, (x_1, p_1, x_2, p_2, ...), with hbar = 1
and vacuum covariance I/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import helmert

from .channels import check_psd
from .errors import DimensionMismatch, InvalidState, NotSymplectic, ValidationError
from .probes import BeamSplitter, PhaseShift, mode_unitary
from .tensor_core import BOSON, DensityMatrix, StateVector, position_op, momentum_op, apply_local


def omega(K: int) -> np.ndarray:
    return np.kron(np.eye(K), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        n = mean.size
        if n % 2 or cov.shape != (n, n):
            raise DimensionMismatch(f"mean length {n} and cov shape {cov.shape} mismatch")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(cov))):
            raise InvalidState("covariance is not symmetric")
        cov = (cov + cov.T) / 2
        lo = np.linalg.eigvalsh(cov + 0.5j * omega(n // 2))[0]
        if lo < -1e-9 * max(1.0, np.max(np.abs(cov))):
            raise InvalidState(f"uncertainty principle violated (eigenvalue {lo:.3g})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def vacuum(cls, K: int) -> "GaussianState":
        return cls(np.zeros(2 * K), np.eye(2 * K) / 2)

    @property
    def K(self) -> int:
        return self.mean.size // 2

    def occupation(self) -> float:
        """Total mean occupation (Tr cov - K)/2 + |mean|^2/2."""
        return float((np.trace(self.cov) - self.K) / 2 + self.mean @ self.mean / 2)

    def p_block(self) -> np.ndarray:
        return self.cov[1::2, 1::2]

    def x_block(self) -> np.ndarray:
        return self.cov[0::2, 0::2]


def squeezing_for_occupation(nbar: float) -> float:
    return float(np.arcsinh(np.sqrt(nbar)))


def squeezed_p_variance(nbar: float) -> float:
    """Var(p) of a squeezed vacuum with ``nbar`` quanta anti-squeezed in p."""
    return (2 * nbar + 1 + 2 * np.sqrt(nbar * (nbar + 1))) / 2


def squeeze(state: GaussianState, site: int, r: float) -> GaussianState:
    if not 0 <= site < state.K:
        raise DimensionMismatch(f"site {site} out of range for K={state.K}")
    S = np.eye(2 * state.K)
    S[2 * site, 2 * site] = np.exp(-r)
    S[2 * site + 1, 2 * site + 1] = np.exp(r)
    return GaussianState(S @ state.mean, S @ state.cov @ S.T)


def passive_symplectic(U: np.ndarray) -> np.ndarray:
    """Real symplectic for a passive mode transform <a>_out = U <a>_in."""
    U = np.asarray(U, dtype=complex)
    K = U.shape[0]
    A, B = U.real, U.imag
    big = np.block([[A, -B], [B, A]])  # (x..., p...) ordering
    perm = np.empty(2 * K, dtype=int)
    perm[0::2] = np.arange(K)
    perm[1::2] = np.arange(K) + K
    return big[np.ix_(perm, perm)]


def is_orthogonal_symplectic(S: np.ndarray, tol: float = 1e-10) -> bool:
    n = S.shape[0]
    Om = omega(n // 2)
    return (
        np.max(np.abs(S @ S.T - np.eye(n))) < tol
        and np.max(np.abs(S @ Om @ S.T - Om)) < tol
    )


def network_symplectic(network, K: int) -> np.ndarray:
    """Accepts a layer list, a complex K x K unitary, or a real 2K x 2K matrix."""
    if isinstance(network, np.ndarray):
        if network.shape == (K, K):
            U = network.astype(complex)
            if np.max(np.abs(U @ U.conj().T - np.eye(K))) > 1e-10:
                raise NotSymplectic("mode transform is not unitary")
            return passive_symplectic(U)
        S = network.astype(float)
    else:
        for layer in network:
            if not isinstance(layer, (BeamSplitter, PhaseShift)):
                raise NotSymplectic(f"unknown network layer {layer!r}")
        S = passive_symplectic(mode_unitary(network, K))
    if S.shape != (2 * K, 2 * K) or not is_orthogonal_symplectic(S):
        raise NotSymplectic("network matrix is not orthogonal symplectic")
    return S


def passive_mix(state: GaussianState, network) -> GaussianState:
    S = network_symplectic(network, state.K)
    return GaussianState(S @ state.mean, S @ state.cov @ S.T)


def random_displacement(state: GaussianState, V) -> GaussianState:
    """Momentum-generated displacements shift x: the x-block gains V."""
    V = check_psd(V, "V")
    if V.shape != (state.K, state.K):
        raise DimensionMismatch(f"V shape {V.shape} for K={state.K}")
    cov = state.cov.copy()
    cov[0::2, 0::2] += V
    return GaussianState(state.mean, cov)


def collective_variance(state: GaussianState, w, quadrature: str = "p") -> float:
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1) > 1e-10:
        raise ValidationError("w must be a unit vector")
    if quadrature not in ("x", "p"):
        raise ValidationError(f"quadrature must be 'x' or 'p', got {quadrature!r}")
    block = state.x_block() if quadrature == "x" else state.p_block()
    return float(w @ block @ w)


def uniform_basis(K: int) -> np.ndarray:
    """Orthogonal K x K matrix whose first row is (1, ..., 1)/sqrt(K)."""
    return helmert(K, full=True)


def collective_squeezed(K: int, quanta: Sequence[float], W: np.ndarray) -> GaussianState:
    """Squeeze collective modes I (rows of W) with ``quanta[I]`` each.

    Collective mode I is squeezed first in its own frame, then W^T maps the
    collective modes onto the local sensors: P_I = sum_i W_Ii p_i.
    """
    st = GaussianState.vacuum(K)
    for I, q in enumerate(quanta):
        if q > 0:
            st = squeeze(st, I, squeezing_for_occupation(q))
    return passive_mix(st, np.asarray(W, dtype=float).T.astype(complex))


def multiparam_advantage_report(K: int, n: int, nbar: float, W=None, allocation=None) -> list[dict]:
    """Per-parameter entangled/separable QFI ratio for the first n collective modes.

    Entangled: ``allocation`` quanta per collective mode (default K nbar / n
    each) squeezed into the n collective modes. Separable: every sensor
    squeezed with nbar quanta. QFI diagonal = 4 w_I^T H w_I with H the
    p-block of the covariance.
    """
    if not 1 <= n <= K:
        raise ValidationError(f"need 1 <= n <= K, got n={n}, K={K}")
    W = uniform_basis(K) if W is None else np.asarray(W, dtype=float)
    if allocation is None:
        allocation = [K * nbar / n] * n
    if len(allocation) != n or abs(sum(allocation) - K * nbar) > 1e-9 * max(1.0, K * nbar):
        raise ValidationError("allocation must give n collective modes K*nbar quanta in total")
    ent = collective_squeezed(K, list(allocation) + [0.0] * (K - n), W)
    sep = GaussianState.vacuum(K)
    for i in range(K):
        sep = squeeze(sep, i, squeezing_for_occupation(nbar))
    H_ent, H_sep = ent.p_block(), sep.p_block()
    rows = []
    for I in range(n):
        w = W[I]
        f_ent = 4 * float(w @ H_ent @ w)
        f_sep = 4 * float(w @ H_sep @ w)
        rows.append(
            {
                "I": I,
                "var_ent": f_ent / 4,
                "var_sep": f_sep / 4,
                "qfi_ent": f_ent,
                "qfi_sep": f_sep,
                "ratio": f_ent / f_sep,
                "target_ratio": K / n,
                "sep_bound": 8 * (nbar + 0.5),
                "ent_occupation": ent.occupation(),
                "sep_occupation": sep.occupation(),
            }
        )
    return rows


def moments_from_fock(rho) -> GaussianState:
    """First and second quadrature moments of a Fock-truncated state.

    Not necessarily Gaussian; only used for cross-backend comparisons, so the
    uncertainty check applies to the moments as computed.
    """
    if isinstance(rho, StateVector):
        rho = rho.density()
    space = rho.space
    if any(s.kind != BOSON for s in space.sites):
        raise ValidationError("moments_from_fock needs bosonic sites")
    ops = []
    for j, d in enumerate(space.dims):
        ops.append((j, position_op(d)))
        ops.append((j, momentum_op(d)))
    m = rho.matrix
    applied = [apply_local(m, op, j, space.dims) for j, op in ops]  # O rho
    mean = np.array([np.trace(a).real for a in applied])
    n = len(ops)
    cov = np.empty((n, n))
    for a in range(n):
        ja, oa = ops[a]
        for b in range(n):
            # Tr[O_a O_b rho], symmetrized below
            cov[a, b] = np.trace(apply_local(applied[b], oa, ja, space.dims)).real
    cov = (cov + cov.T) / 2 - np.outer(mean, mean)
    return GaussianState(mean, cov)
