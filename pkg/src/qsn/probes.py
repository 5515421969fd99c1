"""Probe states and passive linear-optical networks in the Fock basis."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .errors import (
    IncompatibleProbe,
    NonBosonicSite,
    OddFermionCount,
    TailMassTooLarge,
    TruncationLeakage,
    TruncationTooSmall,
    ValidationError,
)
from .tensor_core import (
    BOSON,
    FERMION,
    QUBIT,
    SpaceSpec,
    StateVector,
    annihilation,
    apply_local,
    number_op,
)

FAMILIES = (
    "product_plus",
    "qubit_ghz",
    "product_zeroN",
    "boson_ghz",
    "fermion_ghz",
    "fock_product",
    "squeezed_vacuum_product",
    "custom",
)

SQUEEZED_TAIL = 1e-10
MAX_TRUNCATION = 400
LEAKAGE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ProbeSpec:
    family: str
    space: SpaceSpec
    N: int | None = None
    occupations: tuple[int, ...] | None = None
    nbar: float | None = None
    amplitudes: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise IncompatibleProbe(f"unknown probe family {self.family!r}")
        kinds = {s.kind for s in self.space.sites}
        need = {
            "product_plus": QUBIT,
            "qubit_ghz": QUBIT,
            "product_zeroN": BOSON,
            "boson_ghz": BOSON,
            "fermion_ghz": FERMION,
            "squeezed_vacuum_product": BOSON,
        }.get(self.family)
        if need is not None and kinds != {need}:
            raise IncompatibleProbe(f"{self.family} needs {need} sites, got {sorted(kinds)}")
        if self.family == "fock_product" and QUBIT in kinds:
            raise IncompatibleProbe("fock_product needs boson or fermion sites")
        if self.family == "fermion_ghz" and self.space.K % 2:
            raise OddFermionCount(
                f"fermion_ghz needs an even number of modes (parity superselection), K={self.space.K}"
            )
        if self.family in ("product_zeroN", "boson_ghz"):
            if self.N is None or self.N < 1:
                raise ValidationError(f"{self.family} needs an integer N >= 1")
            if min(self.space.dims) <= self.N:
                raise TruncationTooSmall(
                    f"{self.family} with N={self.N} needs truncation >= {self.N + 1}"
                )
        if self.family == "fock_product":
            occ = tuple(self.occupations or ())
            if len(occ) != self.space.K:
                raise ValidationError("fock_product needs one occupation per site")
            for n, d in zip(occ, self.space.dims):
                if not 0 <= n < d:
                    raise TruncationTooSmall(f"occupation {n} does not fit truncation {d}")
        if self.family == "squeezed_vacuum_product" and (self.nbar is None or self.nbar < 0):
            raise ValidationError("squeezed_vacuum_product needs nbar >= 0")


def squeezed_vacuum_amplitudes(nbar: float, d: int) -> np.ndarray:
    """Fock amplitudes of a squeezed vacuum with mean occupation ``nbar``.

    The phase is chosen so that the state is anti-squeezed in p:
    Var(p) = e^{2r}/2 and Var(x) = e^{-2r}/2 with sinh^2 r = nbar.
    Returned unnormalized (exact coefficients, truncated at d).
    """
    r = np.arcsinh(np.sqrt(nbar))
    t = np.tanh(r)
    c = np.zeros(d)
    c[0] = 1.0 / np.sqrt(np.cosh(r))
    for n in range(2, d, 2):
        c[n] = c[n - 2] * (-t) * np.sqrt((n - 1) / n)
    return c.astype(complex)


def squeezed_tail_mass(nbar: float, d: int) -> float:
    c = squeezed_vacuum_amplitudes(nbar, d)
    # 1 - kept mass loses precision near 1e-16; sum the tail analytically instead
    t2 = np.tanh(np.arcsinh(np.sqrt(nbar))) ** 2
    last = d - 1 if (d - 1) % 2 == 0 else d - 2
    # continue the recursion past the cut until terms are negligible
    tail, amp2, n = 0.0, abs(c[last]) ** 2, last
    while True:
        n += 2
        amp2 *= t2 * (n - 1) / n
        tail += amp2
        if amp2 < 1e-18 * max(tail, 1e-300) or amp2 == 0.0:
            break
    return tail


def squeezed_truncation(nbar: float, tail: float = SQUEEZED_TAIL, cap: int = MAX_TRUNCATION) -> int:
    """Smallest truncation whose discarded squeezed-vacuum mass is below ``tail``."""
    if nbar == 0:
        return 2
    d = 2
    while squeezed_tail_mass(nbar, d) >= tail:
        d += 1
        if d > cap:
            raise TailMassTooLarge(
                f"nbar={nbar} needs a truncation beyond {cap} for tail mass < {tail}"
            )
    return d


def squeezed_space(K: int, nbar: float, generator: str = "momentum", pad: int = 0) -> SpaceSpec:
    """Boson space large enough for a squeezed-vacuum product probe."""
    return SpaceSpec.bosons(K, squeezed_truncation(nbar) + pad, generator)


def _local_product(space: SpaceSpec, locals_: Sequence[np.ndarray]) -> StateVector:
    return StateVector.normalized(space, reduce(np.kron, locals_))


def _two_branch(space: SpaceSpec, level: int) -> StateVector:
    amps = np.zeros(space.dim, dtype=complex)
    amps[0] = 1.0
    amps[np.ravel_multi_index((level,) * space.K, space.dims)] = 1.0
    return StateVector.normalized(space, amps)


def build_probe(spec: ProbeSpec) -> StateVector:
    space, fam = spec.space, spec.family
    if fam == "product_plus":
        return _local_product(space, [np.array([1, 1], dtype=complex)] * space.K)
    if fam in ("qubit_ghz", "fermion_ghz"):
        return _two_branch(space, 1)
    if fam == "boson_ghz":
        return _two_branch(space, spec.N)
    if fam == "product_zeroN":
        locals_ = []
        for d in space.dims:
            v = np.zeros(d, dtype=complex)
            v[0] = v[spec.N] = 1.0
            locals_.append(v)
        return _local_product(space, locals_)
    if fam == "fock_product":
        locals_ = []
        for n, d in zip(spec.occupations, space.dims):
            v = np.zeros(d, dtype=complex)
            v[n] = 1.0
            locals_.append(v)
        return _local_product(space, locals_)
    if fam == "squeezed_vacuum_product":
        locals_ = []
        for d in space.dims:
            if squeezed_tail_mass(spec.nbar, d) >= SQUEEZED_TAIL:
                need = squeezed_truncation(spec.nbar)
                raise TailMassTooLarge(
                    f"truncation {d} leaves tail mass >= {SQUEEZED_TAIL} for nbar={spec.nbar}; "
                    f"use at least {need}"
                )
            locals_.append(squeezed_vacuum_amplitudes(spec.nbar, d))
        return _local_product(space, locals_)
    # custom: only normalization is enforced
    return StateVector.normalized(space, spec.amplitudes)


@dataclass(frozen=True)
class BeamSplitter:
    """``exp[theta (e^{i phi} a^dag b - e^{-i phi} a b^dag)]`` on modes (i, j).

    Heisenberg action: a -> cos(theta) a + e^{i phi} sin(theta) b,
    b -> cos(theta) b - e^{-i phi} sin(theta) a.
    """

    i: int
    j: int
    theta: float
    phi: float = 0.0


@dataclass(frozen=True)
class PhaseShift:
    """``exp(i phi n)`` on mode i (Heisenberg action a -> e^{i phi} a)."""

    i: int
    phi: float


def beam_splitter_matrix(d: int, theta: float, phi: float) -> np.ndarray:
    a = annihilation(d)
    eye = np.eye(d)
    A = np.kron(a, eye)
    B = np.kron(eye, a)
    gen = np.exp(1j * phi) * A.conj().T @ B - np.exp(-1j * phi) * A @ B.conj().T
    return expm(theta * gen)


def _pair_sector_leakage(psi: np.ndarray, dims, i: int, j: int) -> float:
    """Probability that modes (i, j) jointly hold >= d quanta.

    Those sectors are where the truncated beam-splitter generator differs
    from the true one, so their mass bounds the truncation error.
    """
    t = np.abs(psi.reshape(dims)) ** 2
    other = tuple(k for k in range(len(dims)) if k not in (i, j))
    pair = t.sum(axis=other) if other else t
    if i > j:
        pair = pair.T
    d = dims[i]
    total = np.add.outer(np.arange(d), np.arange(d))
    return float(pair[total >= d].sum())


def network_unitary_2x2(layer) -> np.ndarray:
    if isinstance(layer, BeamSplitter):
        c, s = np.cos(layer.theta), np.sin(layer.theta)
        return np.array(
            [[c, np.exp(1j * layer.phi) * s], [-np.exp(-1j * layer.phi) * s, c]]
        )
    raise TypeError(f"not a two-mode layer: {layer!r}")


def mode_unitary(layers: Sequence, K: int) -> np.ndarray:
    """K x K complex matrix M with <a>_out = M <a>_in for the whole network."""
    M = np.eye(K, dtype=complex)
    for layer in layers:
        step = np.eye(K, dtype=complex)
        if isinstance(layer, PhaseShift):
            step[layer.i, layer.i] = np.exp(1j * layer.phi)
        else:
            u = network_unitary_2x2(layer)
            idx = [layer.i, layer.j]
            step[np.ix_(idx, idx)] = u
        M = step @ M
    return M


def apply_passive_network(state: StateVector, layers: Sequence, leakage_tol: float = LEAKAGE_TOL) -> StateVector:
    space = state.space
    if any(s.kind != BOSON for s in space.sites):
        raise NonBosonicSite("passive networks act on bosonic modes only")
    if len(set(space.dims)) != 1:
        raise ValidationError("passive networks need equal truncation on every mode")
    d, dims = space.dims[0], space.dims
    psi = state.amplitudes.copy()
    for layer in layers:
        if isinstance(layer, PhaseShift):
            psi = apply_local(psi, np.diag(np.exp(1j * layer.phi * np.arange(d))), layer.i, dims)
            continue
        i, j = layer.i, layer.j
        if i == j:
            raise ValidationError("beam splitter needs two distinct modes")
        leak = _pair_sector_leakage(psi, dims, i, j)
        if leak > leakage_tol:
            raise TruncationLeakage(
                f"beam splitter on modes ({i},{j}) sees mass {leak:.3e} in sectors beyond truncation {d}"
            )
        U = beam_splitter_matrix(d, layer.theta, layer.phi).reshape(d, d, d, d)
        t = psi.reshape(dims)
        t = np.tensordot(U, t, axes=([2, 3], [i, j]))
        t = np.moveaxis(t, (0, 1), (i, j))
        psi = t.reshape(-1)
    return StateVector.normalized(space, psi)


def random_network(K: int, depth: int, rng: np.random.Generator) -> list:
    """Brick of random beam splitters and phase shifts on all mode pairs."""
    layers = []
    for _ in range(depth):
        for i in range(K):
            for j in range(i + 1, K):
                layers.append(BeamSplitter(i, j, rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)))
        for i in range(K):
            layers.append(PhaseShift(i, rng.uniform(0, 2 * np.pi)))
    return layers


def occupation_operator(space: SpaceSpec, site: int) -> np.ndarray:
    kind = space.sites[site].kind
    if kind == QUBIT:
        raise NonBosonicSite("occupation is defined for boson and fermion sites")
    return number_op(space.dims[site])


def mean_occupation(state: StateVector) -> tuple[list[float], float]:
    space = state.space
    per_site = []
    for j in range(space.K):
        nj = apply_local(state.amplitudes, occupation_operator(space, j), j, space.dims)
        per_site.append(float(np.vdot(state.amplitudes, nj).real))
    return per_site, float(np.mean(per_site))


def average_number_variance(state: StateVector) -> float:
    """Var(n_avg) with n_avg = sum_i n_i / K."""
    space = state.space
    acc = np.zeros_like(state.amplitudes)
    for j in range(space.K):
        acc += apply_local(state.amplitudes, occupation_operator(space, j), j, space.dims)
    acc /= space.K
    mean = np.vdot(state.amplitudes, acc).real
    return float(np.vdot(acc, acc).real - mean**2)
