"""Echo sensing protocol: prepare, encode, un-prepare, project, estimate g.

Projecting the channel output back onto the probe is a binary measurement
{M0 = |psi><psi|, M1 = 1 - M0}. Because the un-preparation U^dag and the
preparation U cancel around the product projector, the outcome probability
is the input-output overlap; :func:`echo_circuit_equivalence` checks that
equivalence against an explicit circuit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .channels import NoiseModel, apply_channel
from .errors import CircuitProbeMismatch, SaturatedCounts, ValidationError, ZeroTraceVH
from .metrology import generator_matrix
from .tensor_core import SpaceSpec, StateVector, ket

WILSON_Z = 1.959963984540054


def echo_probabilities(probe: StateVector, model: NoiseModel, backend: str = "first_order") -> tuple[float, float]:
    out = apply_channel(probe, model, backend)
    psi = probe.amplitudes
    p0 = float(np.vdot(psi, out.matrix @ psi).real)
    return p0, 1.0 - p0


def trace_vH(probe: StateVector, model: NoiseModel) -> float:
    if model.v is None:
        raise ValidationError("echo estimation needs a factored noise model")
    return float(np.trace(model.v @ generator_matrix(probe).H))


def exact_exponent_ratio(probe: StateVector) -> float | None:
    """kappa with p1 = (1 - exp(-2 g^2 Tr[vH] kappa))/2 holding exactly, if known.

    Equal-weight two-branch probes (GHZ-type) dephase as a single coherence
    exp(-d^T V d / 2) with H = d d^T / 4, so kappa = 1. Other probes return
    None and fall back to numerical inversion.
    """
    support = np.flatnonzero(np.abs(probe.amplitudes) > 1e-12)
    if len(support) == 2 and abs(abs(probe.amplitudes[support[0]]) - abs(probe.amplitudes[support[1]])) < 1e-12:
        return 1.0
    return None


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass
class MleResult:
    g_hat: float
    variance: float
    ci_lo: float
    ci_hi: float
    saturated: bool = False


def _bisect(f: Callable[[float], float], target: float, hi: float, iters: int = 200) -> float:
    lo = 0.0
    for _ in range(iters):
        mid = (lo + hi) / 2
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def mle_estimate(
    counts: int,
    nu: int,
    trace_vH: float,
    backend: str = "first_order",
    kappa: float | None = 1.0,
    p1_of_g: Callable[[float], float] | None = None,
    g_max: float | None = None,
    sweep_mode: bool = False,
) -> MleResult:
    """Maximum-likelihood g from k1 clicks out of nu shots.

    first_order: p1 = g^2 c, so g = sqrt(k1 / (nu c)).
    exact with kappa: p1 = (1 - exp(-2 g^2 c kappa))/2, inverted in closed form.
    Otherwise ``p1_of_g`` is inverted by bisection on [0, g_max].
    Variance is the inverse observed Fisher information; the interval is a
    Wilson interval on p1 mapped through the (monotone) inversion.
    """
    c = float(trace_vH)
    if c <= 0:
        raise ZeroTraceVH("Tr[vH] must be positive for the estimate to exist")
    if not 0 <= counts <= nu:
        raise ValidationError(f"counts {counts} outside [0, {nu}]")
    g_max = float(np.sqrt(1.0 / c)) if g_max is None else g_max

    if backend == "first_order":
        def p1(g):
            return min(g * g * c, 1.0)

        def invert(p):
            return float(np.sqrt(p / c)) if p < 1.0 else None

        def dp1(g):
            return 2 * g * c

        def info0():  # per-shot Fisher information as g -> 0
            return 4 * c
    elif backend == "exact" and kappa is not None:
        a = 2 * c * kappa

        def p1(g):
            return -np.expm1(-a * g * g) / 2

        def invert(p):
            return float(np.sqrt(-np.log1p(-2 * p) / a)) if p < 0.5 else None

        def dp1(g):
            return a * g * np.exp(-a * g * g)

        def info0():
            return 2 * a
    else:
        if p1_of_g is None:
            raise ValidationError("numerical inversion needs p1_of_g")
        p1 = p1_of_g
        top = p1(g_max)

        def invert(p):
            return _bisect(p1, p, g_max) if p < top else None

        def dp1(g):
            h = max(1e-6, 1e-4 * g)
            return (p1(g + h) - p1(max(g - h, 0.0))) / (g + h - max(g - h, 0.0))

        def info0():
            h = 1e-4 * g_max
            return 4 * p1(h) / (h * h)

    p_hat = counts / nu
    g_hat = invert(p_hat)
    saturated = g_hat is None
    if saturated:
        if not sweep_mode:
            raise SaturatedCounts(f"{counts}/{nu} clicks cannot be inverted")
        g_hat = g_max
    p = p1(g_hat)
    if g_hat == 0 or p <= 0:
        info = info0()
    elif p >= 1:
        info = np.inf
    else:
        info = dp1(g_hat) ** 2 / (p * (1 - p))
    variance = 1.0 / (nu * info) if info > 0 else np.inf
    lo, hi = wilson_interval(counts, nu)
    g_lo = invert(lo)
    g_hi = invert(hi)
    return MleResult(
        g_hat,
        float(variance),
        0.0 if g_lo is None else g_lo,
        g_max if g_hi is None else g_hi,
        saturated,
    )


@dataclass
class EchoRun:
    probe: StateVector
    model: NoiseModel
    backend: str = "first_order"
    shots: int = 1000
    seed: int = 0
    k1: int | None = None
    g_hat: float | None = None
    variance: float | None = None
    ci: tuple[float, float] | None = None
    p1_model: float | None = None
    saturated: bool = False

    def __post_init__(self):
        if self.shots < 1:
            raise ValidationError("need at least one shot")
        if self.k1 is not None and not 0 <= self.k1 <= self.shots:
            raise ValidationError("k1 must lie in [0, shots]")

    def row(self) -> dict:
        ci = self.ci or (float("nan"), float("nan"))
        return {
            "seed": self.seed,
            "nu": self.shots,
            "g_true": self.model.g,
            "g_hat": self.g_hat,
            "ci_lo": ci[0],
            "ci_hi": ci[1],
            "p1_model": self.p1_model,
            "k1": self.k1,
        }


def estimate(run: EchoRun, sweep_mode: bool = True) -> EchoRun:
    c = trace_vH(run.probe, run.model)
    kappa = exact_exponent_ratio(run.probe) if run.backend == "exact" else 1.0
    p1_of_g = None
    if run.backend != "first_order" and kappa is None:
        def p1_of_g(g):
            return echo_probabilities(run.probe, run.model.with_g(g), run.backend)[1]
    res = mle_estimate(run.k1, run.shots, c, run.backend, kappa, p1_of_g, sweep_mode=sweep_mode)
    return replace(run, g_hat=res.g_hat, variance=res.variance, ci=(res.ci_lo, res.ci_hi), saturated=res.saturated)


def run_echo(run: EchoRun, p1: float | None = None) -> EchoRun:
    """Draw k1 ~ Binomial(shots, p1) with the run's seed, then estimate g.

    ``p1`` may be passed in to skip recomputing the channel across seeds.
    """
    if p1 is None:
        p1 = echo_probabilities(run.probe, run.model, run.backend)[1]
    p1 = min(max(p1, 0.0), 1.0)
    k1 = int(np.random.default_rng(run.seed).binomial(run.shots, p1))
    out = replace(run, k1=k1, p1_model=p1)
    if trace_vH(run.probe, run.model) > 0:
        out = estimate(out)
    return out


def repetition_seed(master: int, index: int) -> int:
    """Independent per-repetition seed derived from (master seed, index)."""
    return int(np.random.SeedSequence([master, index]).generate_state(1, dtype=np.uint64)[0] >> 1)


# -- circuits --
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
GATES = {"h": _H, "x": np.array([[0, 1], [1, 0]], dtype=complex), "cnot": _CNOT}


def ghz_circuit(K: int) -> list[tuple[str, tuple[int, ...]]]:
    """Hadamard on site 0 followed by a CNOT cascade."""
    return [("h", (0,))] + [("cnot", (j, j + 1)) for j in range(K - 1)]


def gate_unitary(name: str, sites: Sequence[int], space: SpaceSpec) -> np.ndarray:
    n = len(sites)
    if any(space.dims[s] != 2 for s in sites):
        raise ValidationError("circuit gates act on two-level sites")
    G = GATES[name].reshape((2,) * (2 * n))
    full = np.eye(space.dim, dtype=complex).reshape(space.dims + space.dims)
    t = np.tensordot(G, full, axes=(list(range(n, 2 * n)), list(sites)))
    t = np.moveaxis(t, list(range(n)), list(sites))
    return t.reshape(space.dim, space.dim)


def circuit_unitary(gates, space: SpaceSpec) -> np.ndarray:
    """Product of gates applied left to right; entries may be explicit matrices."""
    U = np.eye(space.dim, dtype=complex)
    for g in gates:
        G = g if isinstance(g, np.ndarray) else gate_unitary(g[0], g[1], space)
        U = G @ U
    return U


@dataclass
class EquivalenceReport:
    equal: bool
    overlap_direct: float
    overlap_circuit: float
    deviation: float


def echo_circuit_equivalence(gates, probe: StateVector, model: NoiseModel, backend: str = "exact", tol: float = 1e-10) -> EquivalenceReport:
    space = probe.space
    U = circuit_unitary(gates, space)
    zero = ket(space, (0,) * space.K)
    prepared = U @ zero
    if np.max(np.abs(prepared - probe.amplitudes)) > 1e-10:
        raise CircuitProbeMismatch("circuit does not prepare the probe from |0...0>")
    direct = echo_probabilities(probe, model, backend)[0]
    prep = StateVector(space, prepared)
    out = apply_channel(prep, model, backend).matrix
    back = U.conj().T @ out @ U
    circuit = float(back[0, 0].real)
    dev = abs(direct - circuit)
    return EquivalenceReport(dev <= tol, direct, circuit, dev)
