"""Correlated noise channels.

Three routes to the same channel ``rho -> E_lambda[U_lambda rho U_lambda^dag]``
with ``U_lambda = exp(-i sum_j lambda_j h_j)`` and ``lambda ~ N(0, V)``:

* :func:`apply_first_order` -- the weak-noise expansion, depends on V only;
* :func:`apply_exact_diagonal` -- closed-form Gaussian average when every
  generator is diagonal (Pauli-Z, number);
* :func:`apply_random_unitary_oracle` -- brute-force average by Gauss-Hermite
  quadrature or Monte-Carlo sampling, valid for momentum generators too.

The channel mean is always zero. The background covariance, when present,
is added to the signal covariance before the channel is applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import (
    BudgetExceeded,
    CholeskyFailure,
    DimensionMismatch,
    NonBosonicSite,
    NonDiagonalGenerator,
    PSDViolation,
    TruncationLeakage,
    ValidationError,
)
from .tensor_core import (
    BOSON,
    MOMENTUM,
    DensityMatrix,
    SpaceSpec,
    StateVector,
    build_generator,
    embed,
    generator_eigenvalues,
    sandwich_local,
)

log = logging.getLogger(__name__)

PSD_TOL = 1e-10
WEAK_NOISE_GUARD = 0.1
GH_POINTS = 40
MC_SAMPLES = 100_000
GH_MAX_DIMS = 4
LEAKAGE_TOL = 1e-8


def check_psd(M, name: str = "matrix", tol: float = PSD_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(M))):
        raise PSDViolation(f"{name} is not symmetric")
    lo = np.linalg.eigvalsh((M + M.T) / 2)[0] if M.size else 0.0
    if lo < -tol:
        raise PSDViolation(f"{name} has negative eigenvalue {lo:.6g}")
    return (M + M.T) / 2


def max_correlated(K: int) -> np.ndarray:
    """``K u u^T`` with uniform unit vector u, i.e. the all-ones matrix."""
    return np.ones((K, K))


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Covariance of the random translations, optionally ``V = g^2 v``."""

    V: np.ndarray
    g: float | None = None
    v: np.ndarray | None = None
    Sigma: np.ndarray | None = None

    def __post_init__(self):
        V = check_psd(self.V, "V")
        object.__setattr__(self, "V", V)
        if self.v is not None:
            v = check_psd(self.v, "v")
            object.__setattr__(self, "v", v)
            if self.g is None or self.g < 0:
                raise ValidationError("factored noise needs g >= 0")
            if np.max(np.abs(V - self.g**2 * v)) > 1e-12:
                raise ValidationError("V differs from g^2 v")
        if self.Sigma is not None:
            S = check_psd(self.Sigma, "Sigma")
            if S.shape != V.shape:
                raise DimensionMismatch("Sigma and V shapes differ")
            object.__setattr__(self, "Sigma", S)

    @classmethod
    def factored(cls, g: float, v, Sigma=None) -> "NoiseModel":
        v = np.asarray(v, dtype=float)
        return cls(g**2 * v, g=float(g), v=v, Sigma=Sigma)

    @property
    def K(self) -> int:
        return self.V.shape[0]

    @property
    def total(self) -> np.ndarray:
        """Covariance actually applied: signal plus background."""
        return self.V if self.Sigma is None else self.V + self.Sigma

    def with_g(self, g: float) -> "NoiseModel":
        if self.v is None:
            raise ValidationError("with_g needs a factored model")
        return NoiseModel.factored(g, self.v, self.Sigma)


def _check_space(rho: DensityMatrix, model: NoiseModel):
    if model.K != rho.space.K:
        raise DimensionMismatch(f"noise model has K={model.K}, state has K={rho.space.K}")


def _as_density(rho) -> DensityMatrix:
    return rho.density() if isinstance(rho, StateVector) else rho


def generator_covariance(rho: DensityMatrix) -> np.ndarray:
    """Centered second moments <h_i h_j> - <h_i><h_j> on a (possibly mixed) state."""
    m = rho.matrix
    if rho.space.all_diagonal:
        E = generator_eigenvalues(rho.space)
        p = np.real(np.diag(m))
        first = E.T @ p
        H = (E.T * p) @ E - np.outer(first, first)
        return (H + H.T) / 2
    hs = [embed(build_generator(rho.space, j), rho.space) for j in range(rho.space.K)]
    first = np.array([np.trace(h @ m).real for h in hs])
    hm = [h @ m for h in hs]
    K = len(hs)
    H = np.empty((K, K))
    for i in range(K):
        for j in range(K):
            H[i, j] = np.sum(hs[i] * hm[j].T).real - first[i] * first[j]
    return (H + H.T) / 2


def apply_first_order(rho, model: NoiseModel, guard: float = WEAK_NOISE_GUARD) -> DensityMatrix:
    rho = _as_density(rho)
    _check_space(rho, model)
    V = model.total
    m = rho.matrix
    strength = float(np.trace(V @ generator_covariance(rho)))
    if rho.space.all_diagonal:
        E = generator_eigenvalues(rho.space)
        q = _quadratic_gaps(E, V)
        out = m * (1.0 - 0.5 * q)
    else:
        # diagonalize V: sum_ij V_ij (...) = sum_k mu_k (L_k rho L_k - 1/2 {L_k^2, rho})
        hs = [embed(build_generator(rho.space, j), rho.space) for j in range(rho.space.K)]
        mu, Q = np.linalg.eigh(V)
        out = m.copy()
        for k in range(len(mu)):
            if abs(mu[k]) < 1e-300:
                continue
            L = sum(Q[j, k] * hs[j] for j in range(len(hs)))
            L2 = L @ L
            out = out + mu[k] * (L @ m @ L - 0.5 * (L2 @ m + m @ L2))
    out = (out + out.conj().T) / 2
    lo = float(np.linalg.eigvalsh(out)[0])
    meta = {
        "channel": "first_order",
        "trace_VH": strength,
        "weak_noise_warning": strength > guard,
        "min_eigenvalue": lo,
    }
    if strength > guard:
        log.warning("first-order channel outside weak-noise regime: Tr[VH]=%.3g", strength)
    return DensityMatrix(rho.space, out, meta=meta, check_positive=False)


def _quadratic_gaps(E: np.ndarray, V: np.ndarray) -> np.ndarray:
    """q_ab = (e_a - e_b)^T V (e_a - e_b) for all basis pairs."""
    A = E @ V @ E.T
    d = np.diag(A)
    return d[:, None] + d[None, :] - 2 * A


def apply_exact_diagonal(rho, model: NoiseModel) -> DensityMatrix:
    rho = _as_density(rho)
    _check_space(rho, model)
    if not rho.space.all_diagonal:
        raise NonDiagonalGenerator("exact closed form needs Pauli-Z or number generators")
    q = _quadratic_gaps(generator_eigenvalues(rho.space), model.total)
    out = rho.matrix * np.exp(-0.5 * q)
    out = (out + out.conj().T) / 2  # exactly Hermitian, whatever rounding did to q
    return DensityMatrix(rho.space, out, meta={"channel": "exact_diagonal"}, check_positive=False)


def factor_covariance(V) -> np.ndarray:
    """Columns l_k with V = sum_k l_k l_k^T, zero directions dropped.

    Eigen-based rather than Cholesky so rank-deficient V (e.g. maximally
    correlated noise) is handled.
    """
    V = np.asarray(V, dtype=float)
    mu, Q = np.linalg.eigh((V + V.T) / 2)
    if mu.size and mu[0] < -PSD_TOL:
        raise CholeskyFailure(f"covariance has negative eigenvalue {mu[0]:.6g}")
    scale = max(float(mu[-1]) if mu.size else 0.0, 0.0)
    keep = mu > 1e-14 * scale if scale > 0 else np.zeros_like(mu, dtype=bool)
    return Q[:, keep] * np.sqrt(mu[keep])


def displacement_matrix(lam: float, d: int) -> np.ndarray:
    """d x d block of ``exp(-i lam p)`` = D(alpha = lam/sqrt 2), exact Fock elements.

    Uses <m|D(alpha)|n> = sqrt(n!/m!) alpha^{m-n} e^{-alpha^2/2} L_n^{(m-n)}(alpha^2)
    for m >= n and real alpha; the m < n block follows from D(alpha)^dag = D(-alpha).
    """
    alpha = lam / np.sqrt(2.0)
    x = alpha * alpha
    m, n = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    k = hi - lo
    sign = np.where((m < n) & (k % 2 == 1), -1.0, 1.0)
    if alpha == 0.0:
        return np.eye(d, dtype=complex)
    logpref = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) + k * np.log(abs(alpha)) - x / 2
    base = np.sign(alpha) ** k * sign * np.exp(logpref)
    return (base * eval_genlaguerre(lo, k, x)).astype(complex)


def local_translation(space: SpaceSpec, site: int, lam: float) -> np.ndarray:
    """Truncated ``exp(-i lam h_site)``."""
    op = build_generator(space, site)
    if op.diagonal:
        return np.diag(np.exp(-1j * lam * op.eigenvalues))
    return displacement_matrix(lam, space.dims[site])


def _hermegauss(points: int):
    z, w = np.polynomial.hermite_e.hermegauss(points)
    w = w / np.sqrt(2 * np.pi)
    return z, w


def average_random_unitary(rho: DensityMatrix, lambdas: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, float]:
    """``sum_s w_s U(lambda_s) rho U(lambda_s)^dag`` (not renormalized).

    Returns the averaged matrix and the trace it retains; with momentum
    generators the truncated displacements lose a little norm.
    """
    space = rho.space
    lambdas = np.atleast_2d(lambdas)
    if space.all_diagonal:
        E = generator_eigenvalues(space)
        out = np.zeros_like(rho.matrix)
        chunk = max(1, 2**22 // max(space.dim, 1))
        for s0 in range(0, len(lambdas), chunk):
            ph = np.exp(-1j * lambdas[s0 : s0 + chunk] @ E.T)
            w = weights[s0 : s0 + chunk]
            out += (ph.T * w) @ ph.conj()
        out = rho.matrix * out
    else:
        out = np.zeros_like(rho.matrix)
        for lam, w in zip(lambdas, weights):
            mats = [local_translation(space, j, lam[j]) for j in range(space.K)]
            out += w * sandwich_local(rho.matrix, mats, space.dims)
    return out, float(np.trace(out).real)


def symmetric_discrete_law(V) -> tuple[np.ndarray, np.ndarray]:
    """Points +-sqrt(r) l_k with equal weights: zero mean, covariance V.

    A non-Gaussian law sharing V; the first-order channel cannot tell the two
    apart, which the tests exploit.
    """
    L = factor_covariance(V)
    r = L.shape[1]
    if r == 0:
        return np.zeros((1, np.asarray(V).shape[0])), np.ones(1)
    pts = np.concatenate([np.sqrt(r) * L.T, -np.sqrt(r) * L.T])
    return pts, np.full(2 * r, 1.0 / (2 * r))


def apply_random_unitary_oracle(
    rho,
    model: NoiseModel,
    method: str = "gauss_hermite",
    points: int = GH_POINTS,
    samples: int = MC_SAMPLES,
    seed: int = 0,
    max_dims: int = GH_MAX_DIMS,
    leakage_tol: float | None = None,
) -> DensityMatrix:
    """Numerical Gaussian average of ``U_lambda rho U_lambda^dag``.

    Gauss-Hermite runs over the independent directions z of
    ``lambda = sum_k z_k l_k`` (``V = sum_k l_k l_k^T``). Generators commute,
    so ``U_lambda = prod_k exp(-i z_k G_k)`` and the full tensor-product grid
    collapses into one 1-D quadrature per direction, exactly.
    """
    rho = _as_density(rho)
    _check_space(rho, model)
    L = factor_covariance(model.total)
    rank = L.shape[1]
    meta = {"channel": "random_unitary", "method": method, "rank": rank}
    if rank == 0:
        meta["leakage"] = 0.0
        return DensityMatrix(rho.space, rho.matrix, meta=meta, check_positive=False)
    if method == "gauss_hermite":
        if rank > max_dims:
            raise BudgetExceeded(
                f"Gauss-Hermite over {rank} noise directions exceeds the limit {max_dims}"
            )
        z, w = _hermegauss(points)
        wsum = float(w.sum())
        if abs(wsum - 1.0) > 1e-12:
            raise BudgetExceeded(f"quadrature weights sum to {wsum!r}")
        cur = rho
        retained = 1.0
        for k in range(rank):
            lambdas = np.outer(z, L[:, k])
            m, tr = average_random_unitary(cur, lambdas, w)
            retained *= tr
            cur = DensityMatrix(rho.space, m / tr, check_positive=False)
        out = cur.matrix
        meta.update(points=points, weight_sum=wsum)
    elif method == "monte_carlo":
        cost = samples * rho.space.dim ** (2 if rho.space.all_diagonal else 3)
        if cost > 5e11:
            raise BudgetExceeded(f"Monte-Carlo cost estimate {cost:.2e} too large")
        rng = np.random.default_rng(seed)
        lambdas = rng.standard_normal((samples, rank)) @ L.T
        m, retained = average_random_unitary(rho, lambdas, np.full(samples, 1.0 / samples))
        out = m / retained
        meta.update(samples=samples, seed=seed)
    else:
        raise ValidationError(f"unknown oracle method {method!r}")
    leakage = 1.0 - retained
    meta["leakage"] = leakage
    if leakage_tol is not None and leakage > leakage_tol:
        raise TruncationLeakage(f"displacement leakage {leakage:.3e} exceeds {leakage_tol:.1e}")
    out = (out + out.conj().T) / 2
    return DensityMatrix(rho.space, out, meta=meta, check_positive=False)


def apply_displacement_exact(rho, model: NoiseModel, points: int = GH_POINTS, leakage_tol: float = LEAKAGE_TOL) -> DensityMatrix:
    rho = _as_density(rho)
    for s in rho.space.sites:
        if s.kind != BOSON:
            raise NonBosonicSite("random displacements act on bosonic modes")
        if s.generator != MOMENTUM:
            raise ValidationError("random displacements need momentum generators")
    out = apply_random_unitary_oracle(
        rho, model, "gauss_hermite", points=points, leakage_tol=leakage_tol
    )
    out.meta["channel"] = "displacement_exact"
    return out


def apply_exact(rho, model: NoiseModel, points: int = GH_POINTS) -> DensityMatrix:
    """Exact channel for whichever generator family the space uses."""
    rho = _as_density(rho)
    if rho.space.all_diagonal:
        return apply_exact_diagonal(rho, model)
    return apply_displacement_exact(rho, model, points=points)


def apply_channel(rho, model: NoiseModel, backend: str = "exact", **kw) -> DensityMatrix:
    if backend == "exact":
        return apply_exact(rho, model, **kw)
    if backend == "first_order":
        return apply_first_order(rho, model, **kw)
    if backend == "oracle":
        return apply_random_unitary_oracle(rho, model, **kw)
    raise ValidationError(f"unknown channel backend {backend!r}")


def trace_distance(a, b) -> float:
    A = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    B = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(A - B)).sum())
