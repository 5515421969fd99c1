import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsn.channels import (
    NoiseModel,
    apply_channel,
    apply_displacement_exact,
    apply_exact_diagonal,
    apply_first_order,
    apply_random_unitary_oracle,
    displacement_matrix,
    factor_covariance,
    max_correlated,
    symmetric_discrete_law,
    average_random_unitary,
    trace_distance,
)
from qsn.errors import BudgetExceeded, NonBosonicSite, NonDiagonalGenerator, PSDViolation, TruncationLeakage
from qsn.gaussian import GaussianState, random_displacement
from qsn.metrology import fidelity
from qsn.probes import ProbeSpec, build_probe
from qsn.tensor_core import SpaceSpec, StateVector, expectation, ket, momentum_op, position_op
from strategies import complex_vectors, psd_matrices
from scipy.linalg import expm


def plus():
    return StateVector.normalized(SpaceSpec.qubits(1), [1, 1])


def ghz(K):
    return build_probe(ProbeSpec("qubit_ghz", SpaceSpec.qubits(K)))


def test_psd_check():
    with pytest.raises(PSDViolation, match="-1"):
        NoiseModel(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(PSDViolation):
        NoiseModel.factored(0.1, np.eye(2), Sigma=-np.eye(2))


def test_factored_consistency():
    m = NoiseModel.factored(0.2, max_correlated(3))
    assert np.allclose(m.V, 0.04 * np.ones((3, 3)))
    assert np.allclose(max_correlated(3), 3 * np.outer(np.ones(3), np.ones(3)) / 3)


@pytest.mark.parametrize("backend", ["first_order", "exact", "oracle"])
def test_zero_noise_identity(backend):
    rho = ghz(2).density()
    out = apply_channel(rho, NoiseModel(np.zeros((2, 2))), backend)
    assert np.allclose(out.matrix, rho.matrix, atol=1e-14)


@pytest.mark.parametrize("s", [1e-3, 0.01, 0.05])
def test_single_qubit_closed_forms(s):
    rho = plus().density()
    fo = apply_first_order(rho, NoiseModel(np.array([[s]])))
    ex = apply_exact_diagonal(rho, NoiseModel(np.array([[s]])))
    assert fo.matrix[0, 1] == pytest.approx(0.5 * (1 - 2 * s), abs=1e-15)
    assert ex.matrix[0, 1] == pytest.approx(0.5 * np.exp(-2 * s), abs=1e-15)


@pytest.mark.parametrize("K", [2, 3, 4, 5])
def test_ghz_coherence_decay(K):
    g = 0.03
    out = apply_exact_diagonal(ghz(K).density(), NoiseModel.factored(g, max_correlated(K)))
    assert out.matrix[0, -1].real == pytest.approx(0.5 * np.exp(-2 * g**2 * K**2), rel=1e-13)


def test_first_order_fidelity_ghz():
    for g in (1e-2, 5e-3):
        out = apply_first_order(ghz(2).density(), NoiseModel.factored(g, max_correlated(2)))
        F = fidelity(ghz(2), out)
        assert abs(F - (1 - 4 * g**2)) <= 10 * g**4


def test_first_order_records_without_clipping():
    space = SpaceSpec.qubits(2)
    psi = StateVector.normalized(space, [1, 1, 1, 1])
    out = apply_first_order(psi.density(), NoiseModel(0.01 * np.ones((2, 2))))
    assert out.meta["min_eigenvalue"] < 0
    assert np.linalg.eigvalsh(out.matrix)[0] == pytest.approx(out.meta["min_eigenvalue"])
    assert not out.meta["weak_noise_warning"]
    big = apply_first_order(psi.density(), NoiseModel(0.2 * np.ones((2, 2))))
    assert big.meta["weak_noise_warning"]


def test_first_order_positivity_defect_slope():
    space = SpaceSpec.qubits(2)
    psi = StateVector.normalized(space, [1, 1, 1, 1])
    s = np.logspace(-4, -2, 5)
    defect = [-apply_first_order(psi.density(), NoiseModel(x * np.ones((2, 2)))).meta["min_eigenvalue"] for x in s]
    slope = np.polyfit(np.log(s), np.log(defect), 1)[0]
    assert abs(slope - 2) <= 0.1


@given(psd_matrices(2, 0.05), complex_vectors(4))
def test_trace_and_hermiticity_preserved(V, amps):
    rho = StateVector.normalized(SpaceSpec.qubits(2), amps).density()
    model = NoiseModel(V)
    for out in (apply_first_order(rho, model), apply_exact_diagonal(rho, model)):
        assert abs(np.trace(out.matrix) - 1) <= 1e-10
        assert np.array_equal(out.matrix, out.matrix.conj().T)
    assert np.linalg.eigvalsh(apply_exact_diagonal(rho, model).matrix)[0] >= -1e-9


@given(psd_matrices(2, 0.3), psd_matrices(2, 0.3), complex_vectors(9))
def test_exact_composition(V1, V2, amps):
    rho = StateVector.normalized(SpaceSpec.bosons(2, 3), amps).density()
    two = apply_exact_diagonal(apply_exact_diagonal(rho, NoiseModel(V1)), NoiseModel(V2))
    one = apply_exact_diagonal(rho, NoiseModel(V1 + V2))
    assert np.allclose(two.matrix, one.matrix, rtol=0, atol=1e-14)


def test_exact_needs_diagonal_generators():
    rho = StateVector(SpaceSpec.bosons(1, 3, "momentum"), ket(SpaceSpec.bosons(1, 3, "momentum"), (0,))).density()
    with pytest.raises(NonDiagonalGenerator):
        apply_exact_diagonal(rho, NoiseModel(np.array([[0.01]])))


def test_trace_distance_slope_vs_first_order():
    # trace distance between exact and first-order outputs falls off as (Tr[VH])^2
    for K in (2, 3):
        rho = ghz(K).density()
        t = np.logspace(-4, -2, 5)  # Tr[V H] = g^2 K^2
        dist = []
        for x in t:
            model = NoiseModel.factored(np.sqrt(x) / K, max_correlated(K))
            dist.append(trace_distance(apply_exact_diagonal(rho, model), apply_first_order(rho, model)))
        assert abs(np.polyfit(np.log(t), np.log(dist), 1)[0] - 2) <= 0.1


@pytest.mark.parametrize("V", [np.array([[0.02, 0.01], [0.01, 0.03]]), 0.05 * np.ones((2, 2)), np.diag([0.04, 0.0])])
def test_gauss_hermite_matches_exact(V):
    rho = StateVector.normalized(SpaceSpec.bosons(2, 3), np.arange(1, 10) * (1 + 0.3j)).density()
    gh = apply_random_unitary_oracle(rho, NoiseModel(V), "gauss_hermite", points=40)
    ex = apply_exact_diagonal(rho, NoiseModel(V))
    assert np.max(np.abs(gh.matrix - ex.matrix)) <= 1e-8
    assert gh.meta["points"] == 40


def test_monte_carlo_matches_exact_statistically():
    rho = ghz(2).density()
    model = NoiseModel.factored(0.1, max_correlated(2))
    mc = apply_random_unitary_oracle(rho, model, "monte_carlo", samples=100_000, seed=1)
    ex = apply_exact_diagonal(rho, model)
    # each sample contributes a bounded phase; standard error ~ 1/sqrt(2 n)
    assert abs(mc.matrix[0, 3] - ex.matrix[0, 3]) <= 5 / np.sqrt(2 * 100_000)
    again = apply_random_unitary_oracle(rho, model, "monte_carlo", samples=100_000, seed=1)
    assert np.array_equal(mc.matrix, again.matrix)
    assert mc.meta["seed"] == 1 and mc.meta["samples"] == 100_000


def test_gauss_hermite_budget():
    rho = build_probe(ProbeSpec("product_plus", SpaceSpec.qubits(5))).density()
    with pytest.raises(BudgetExceeded):
        apply_random_unitary_oracle(rho, NoiseModel(0.01 * np.eye(5)))
    # a rank-one covariance is one direction, whatever K is
    apply_random_unitary_oracle(rho, NoiseModel.factored(0.01, max_correlated(5)))


@given(psd_matrices(4, 0.5))
def test_factor_covariance_reconstructs(V):
    L = factor_covariance(V)
    assert np.allclose(L @ L.T, V, atol=1e-12)
    assert L.shape[1] == np.linalg.matrix_rank(V, tol=1e-12 * max(1.0, np.abs(V).max()))


def test_displacement_matrix_matches_expm():
    # independent oracle: exponentiate p on a much larger truncation, then crop
    d, big, lam = 12, 80, 0.7
    D = displacement_matrix(lam, d)
    ref = expm(-1j * lam * momentum_op(big))[:d, :d]
    assert np.max(np.abs(D - ref)) <= 1e-12


@pytest.mark.parametrize("s2", [0.01, 0.05])
def test_vacuum_displacement_moments(s2):
    space = SpaceSpec.bosons(1, 30, "momentum")
    vac = StateVector(space, ket(space, (0,)))
    out = apply_displacement_exact(vac.density(), NoiseModel(np.array([[s2]])))
    x, p = position_op(30), momentum_op(30)
    assert expectation(out, [x, x]) == pytest.approx(0.5 + s2, abs=1e-10)
    assert expectation(out, [p, p]) == pytest.approx(0.5, abs=1e-10)
    g = random_displacement(GaussianState.vacuum(1), [[s2]])
    assert g.cov[0, 0] == pytest.approx(expectation(out, [x, x]), abs=1e-10)
    assert out.meta["leakage"] <= 1e-8


def test_fock_one_fidelity_small_noise():
    space = SpaceSpec.bosons(1, 20, "momentum")
    one = StateVector(space, ket(space, (1,)))
    for s2 in (1e-3, 1e-4):
        out = apply_displacement_exact(one.density(), NoiseModel(np.array([[s2]])))
        assert abs(fidelity(one, out) - (1 - 1.5 * s2)) <= 5 * s2**2


def test_displacement_leakage_guard():
    space = SpaceSpec.bosons(1, 6, "momentum")
    vac = StateVector(space, ket(space, (0,)))
    with pytest.raises(TruncationLeakage):
        apply_displacement_exact(vac.density(), NoiseModel(np.array([[1.0]])))


def test_displacement_needs_bosons():
    with pytest.raises(NonBosonicSite):
        apply_displacement_exact(ghz(2).density(), NoiseModel(np.eye(2) * 0.01))


@given(psd_matrices(3, 0.02))
def test_first_order_depends_only_on_covariance(V):
    # a discrete +-lambda law with the same covariance gives the same first-order channel,
    # and its exact average differs from the Gaussian one only at fourth order
    rho = build_probe(ProbeSpec("product_plus", SpaceSpec.qubits(3))).density()
    lam, w = symmetric_discrete_law(V)
    assert np.allclose((lam.T * w) @ lam, V, atol=1e-14)
    m, tr = average_random_unitary(rho, lam, w)
    disc = m / tr
    gauss = apply_exact_diagonal(rho, NoiseModel(V)).matrix
    fo = apply_first_order(rho, NoiseModel(V)).matrix
    t = np.trace(V) * 1.0
    assert np.max(np.abs(disc - fo)) <= 4 * t**2 + 1e-15
    assert np.max(np.abs(gauss - fo)) <= 4 * t**2 + 1e-15
