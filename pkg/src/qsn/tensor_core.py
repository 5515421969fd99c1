"""Dense linear algebra over truncated tensor-product Hilbert spaces.

Conventions
-----------
* Tensor ordering is site-0-major: the first site is the most significant
  index of the flattened amplitude vector (``np.kron(op0, op1, ...)``).
* Quadratures: ``x = (a + a^dag)/sqrt(2)``, ``p = (a - a^dag)/(i sqrt(2))``
  with hbar = 1, so the vacuum has ``Var(p) = 1/2``.
* Fermionic modes are occupation registers of dimension 2. Only number
  operators act on them, which are diagonal, so no Jordan-Wigner strings
  are needed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import (
    DimensionCapExceeded,
    DimensionMismatch,
    IllegalGeneratorForSite,
    InvalidState,
    NonCommutingGenerators,
    NotHermitian,
    TruncationTooSmall,
)

QUBIT, BOSON, FERMION = "qubit", "boson", "fermion"
PAULI_Z, NUMBER, MOMENTUM = "pauli_z", "number", "momentum"

SITE_KINDS = (QUBIT, BOSON, FERMION)
GENERATORS = (PAULI_Z, NUMBER, MOMENTUM)
DEFAULT_GENERATOR = {QUBIT: PAULI_Z, BOSON: NUMBER, FERMION: NUMBER}
_ALLOWED = {PAULI_Z: {QUBIT}, NUMBER: {BOSON, FERMION}, MOMENTUM: {BOSON}}

DEFAULT_DIM_CAP = 2**20


def dim_cap() -> int:
    """Maximum number of amplitudes; ``QSN_DIM_CAP`` overrides the default."""
    raw = os.environ.get("QSN_DIM_CAP")
    return int(raw) if raw else DEFAULT_DIM_CAP


@dataclass(frozen=True)
class SiteSpec:
    kind: str
    generator: str | None = None
    truncation: int | None = None

    def __post_init__(self):
        if self.kind not in SITE_KINDS:
            raise IllegalGeneratorForSite(f"unknown site kind {self.kind!r}")
        if self.generator is None:
            object.__setattr__(self, "generator", DEFAULT_GENERATOR[self.kind])
        if self.generator not in GENERATORS:
            raise IllegalGeneratorForSite(f"unknown generator {self.generator!r}")
        if self.kind not in _ALLOWED[self.generator]:
            raise IllegalGeneratorForSite(
                f"generator {self.generator!r} is not allowed on a {self.kind} site"
            )
        if self.kind == BOSON:
            if self.truncation is None or self.truncation < 2:
                raise TruncationTooSmall(
                    f"boson truncation must be >= 2, got {self.truncation}"
                )
        elif self.truncation not in (None, 2):
            raise DimensionMismatch(f"{self.kind} sites are two-dimensional")

    @property
    def dim(self) -> int:
        return self.truncation if self.kind == BOSON else 2


@dataclass(frozen=True)
class SpaceSpec:
    sites: tuple[SiteSpec, ...]

    def __post_init__(self):
        sites = tuple(self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise DimensionMismatch("a space needs at least one site")
        cap = dim_cap()
        if self.dim > cap:
            raise DimensionCapExceeded(
                f"space dimension {self.dim} exceeds the cap {cap} (QSN_DIM_CAP)"
            )

    @classmethod
    def qubits(cls, K: int) -> "SpaceSpec":
        return cls(tuple(SiteSpec(QUBIT) for _ in range(K)))

    @classmethod
    def bosons(cls, K: int, truncation: int, generator: str = NUMBER) -> "SpaceSpec":
        return cls(tuple(SiteSpec(BOSON, generator, truncation) for _ in range(K)))

    @classmethod
    def fermions(cls, K: int) -> "SpaceSpec":
        return cls(tuple(SiteSpec(FERMION) for _ in range(K)))

    @property
    def K(self) -> int:
        return len(self.sites)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sites)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def generators(self) -> tuple[str, ...]:
        return tuple(s.generator for s in self.sites)

    @property
    def all_diagonal(self) -> bool:
        return all(g != MOMENTUM for g in self.generators)


@dataclass(frozen=True, eq=False)
class StateVector:
    space: SpaceSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.space.dim:
            raise DimensionMismatch(
                f"{amps.size} amplitudes for a space of dimension {self.space.dim}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise InvalidState(f"state norm {norm!r} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, space: SpaceSpec, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(space, amps / np.linalg.norm(amps))

    def density(self) -> "DensityMatrix":
        m = np.outer(self.amplitudes, self.amplitudes.conj())
        return DensityMatrix(self.space, (m + m.conj().T) / 2)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density operator.

    ``meta`` carries channel bookkeeping (method, leakage, minimum eigenvalue
    of first-order outputs...). Set ``check_positive=False`` for outputs that
    may legitimately carry a small negative eigenvalue.
    """

    space: SpaceSpec
    matrix: np.ndarray
    meta: dict = field(default_factory=dict)
    check_positive: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.dim
        if m.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {m.shape} for dimension {n}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-10:
            raise InvalidState("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-10:
            raise InvalidState(f"density matrix trace {tr!r} differs from 1")
        if self.check_positive:
            lo = np.linalg.eigvalsh(m)[0]
            if lo < -1e-9:
                raise InvalidState(f"density matrix has eigenvalue {lo!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    site: int
    matrix: np.ndarray
    diagonal: bool

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise NotHermitian("local operator is not Hermitian")
        object.__setattr__(self, "matrix", m)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Diagonal entries in basis order (only meaningful when diagonal)."""
        return np.real(np.diag(self.matrix))


def annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def number_op(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def position_op(d: int) -> np.ndarray:
    a = annihilation(d)
    return (a + a.conj().T) / np.sqrt(2)


def momentum_op(d: int) -> np.ndarray:
    a = annihilation(d)
    return (a - a.conj().T) / (1j * np.sqrt(2))


def local_generator_matrix(site: SiteSpec) -> np.ndarray:
    if site.generator == PAULI_Z:
        return np.diag([1.0, -1.0]).astype(complex)
    if site.generator == NUMBER:
        return number_op(site.dim)
    return momentum_op(site.dim)


def build_generator(space: SpaceSpec, site: int) -> LocalOperator:
    if not 0 <= site < space.K:
        raise DimensionMismatch(f"site {site} out of range for K={space.K}")
    spec = space.sites[site]
    return LocalOperator(site, local_generator_matrix(spec), spec.generator != MOMENTUM)


def embed(op: LocalOperator, space: SpaceSpec) -> np.ndarray:
    if not 0 <= op.site < space.K:
        raise DimensionMismatch(f"site {op.site} out of range for K={space.K}")
    d = space.dims[op.site]
    if op.matrix.shape != (d, d):
        raise DimensionMismatch(f"operator shape {op.matrix.shape} on a site of dim {d}")
    factors = [np.eye(k, dtype=complex) for k in space.dims]
    factors[op.site] = op.matrix
    return reduce(np.kron, factors)


def generator_eigenvalues(space: SpaceSpec) -> np.ndarray:
    """(dim, K) array of each diagonal generator's eigenvalue on each basis state."""
    if not space.all_diagonal:
        raise NonCommutingGenerators("joint computational eigenbasis needs diagonal generators")
    grids = np.meshgrid(*[np.arange(d) for d in space.dims], indexing="ij")
    out = np.empty((space.dim, space.K))
    for j, site in enumerate(space.sites):
        local = np.real(np.diag(local_generator_matrix(site)))
        out[:, j] = local[grids[j].reshape(-1)]
    return out


def apply_local(tensor: np.ndarray, mat: np.ndarray, site: int, dims: Sequence[int]) -> np.ndarray:
    """Apply ``mat`` to one site of a ket, or to the row index of a matrix.

    ``tensor`` is either a flat ket of length prod(dims) or a (dim, m) array
    whose rows are indexed by the tensor-product basis.
    """
    K = len(dims)
    flat = tensor.ndim == 1
    t = tensor.reshape(tuple(dims) + ((1,) if flat else (tensor.shape[1],)))
    t = np.moveaxis(np.tensordot(mat, t, axes=([1], [site])), 0, site)
    n = int(np.prod(dims))
    return t.reshape(n) if flat else t.reshape(n, -1)


def sandwich_local(rho: np.ndarray, mats: Sequence[np.ndarray | None], dims) -> np.ndarray:
    """``U rho U^dag`` for a product ``U = kron(mats)``; ``None`` entries are identities."""
    out = rho
    for j, m in enumerate(mats):
        if m is not None:
            out = apply_local(out, m, j, dims)
    out = out.conj().T
    for j, m in enumerate(mats):
        if m is not None:
            out = apply_local(out, m, j, dims)
    return out.conj().T


def _as_matrix(state) -> tuple[np.ndarray, bool]:
    if isinstance(state, StateVector):
        return state.amplitudes, True
    if isinstance(state, DensityMatrix):
        return state.matrix, False
    arr = np.asarray(state, dtype=complex)
    return arr, arr.ndim == 1


def expectation(state, ops: Sequence[np.ndarray] | np.ndarray):
    """``<O_1 O_2 ... O_n>`` on a pure or mixed state.

    Returns a float when the imaginary part is below 1e-10, else a complex.
    """
    if isinstance(ops, np.ndarray) and ops.ndim == 2:
        ops = [ops]
    data, pure = _as_matrix(state)
    n = data.shape[0]
    for o in ops:
        if o.shape != (n, n):
            raise DimensionMismatch(f"operator shape {o.shape} on dimension {n}")
    if pure:
        vec = data
        for o in reversed(ops):
            vec = o @ vec
        val = np.vdot(data, vec)
    else:
        prod = data
        for o in reversed(ops):
            prod = o @ prod
        val = np.trace(prod)
    return float(val.real) if abs(val.imag) < 1e-10 else complex(val)


def eigendecompose_hermitian(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {m.shape}")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-10:
        raise NotHermitian("matrix is not Hermitian within 1e-10")
    return np.linalg.eigh((m + m.conj().T) / 2)


def ket(space: SpaceSpec, occupation: Sequence[int]) -> np.ndarray:
    """Computational/Fock basis vector with the given per-site index."""
    idx = np.ravel_multi_index(tuple(occupation), space.dims)
    v = np.zeros(space.dim, dtype=complex)
    v[idx] = 1.0
    return v
