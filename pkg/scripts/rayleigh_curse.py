"""QFI of a two-qubit GHZ probe as an uncorrelated background grows.

The background sits along the same direction as the signal covariance; the
QFI halves once the background matches the signal.
"""

import argparse

import numpy as np

from qsn.channels import NoiseModel, apply_exact_diagonal, max_correlated
from qsn.metrology import generator_matrix, qfi_oracle, qfi_rayleigh_single
from qsn.probes import ProbeSpec, build_probe
from qsn.tensor_core import SpaceSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--g", type=float, default=0.01)
    ap.add_argument("--points", type=int, default=9)
    args = ap.parse_args()

    psi = build_probe(ProbeSpec("qubit_ghz", SpaceSpec.qubits(2)))
    H = generator_matrix(psi)
    v = max_correlated(2)
    u = np.ones(2) / np.sqrt(2)
    signal = args.g**2 * np.trace(v)
    rho = psi.density()
    print(f"signal g^2 Tr v = {signal:.3g}")
    print(f"{'sigma2/signal':>14} {'F_analytic':>12} {'F_oracle':>12}")
    for ratio in np.logspace(-2, 2, args.points):
        Sigma = ratio * signal * np.outer(u, u)
        F = qfi_rayleigh_single(args.g, v, Sigma, H)
        orc = qfi_oracle(lambda x: apply_exact_diagonal(rho, NoiseModel.factored(x, v, Sigma)), args.g).value
        print(f"{ratio:>14.4g} {F:>12.6f} {orc:>12.6f}")


if __name__ == "__main__":
    main()
