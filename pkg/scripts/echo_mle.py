"""Monte-Carlo echo estimation: variance of g_hat against the Cramer-Rao bound."""

import argparse

import numpy as np

from qsn.channels import NoiseModel, max_correlated
from qsn.echo import EchoRun, echo_probabilities, repetition_seed, run_echo
from qsn.metrology import generator_matrix, qfi_single
from qsn.probes import ProbeSpec, build_probe
from qsn.tensor_core import SpaceSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, default=3)
    ap.add_argument("--g", type=float, default=1e-2)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    # the exact backend inverts product probes numerically, which is slow
    ap.add_argument("--backend", choices=("first_order", "exact"), default="first_order")
    args = ap.parse_args()

    v = max_correlated(args.K)
    print(f"{'probe':>13} {'nu':>8} {'mean g_hat':>12} {'var*nu*F_Q':>11}")
    for family in ("qubit_ghz", "product_plus"):
        psi = build_probe(ProbeSpec(family, SpaceSpec.qubits(args.K)))
        F_Q = qfi_single(generator_matrix(psi), v)
        model = NoiseModel.factored(args.g, v)
        p1 = echo_probabilities(psi, model, args.backend)[1]
        for nu in (10**4, 10**5, 10**6):
            est = np.array([
                run_echo(EchoRun(psi, model, args.backend, nu, repetition_seed(args.seed, i)), p1=p1).g_hat
                for i in range(args.reps)
            ])
            print(f"{family:>13} {nu:>8} {est.mean():>12.6g} {est.var(ddof=1) * nu * F_Q:>11.3f}")


if __name__ == "__main__":
    main()
