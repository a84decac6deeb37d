"""Closed-form waiting-time law of a random mixed-Erlang model against simulation.

Draws a random irreducible chain with mixed-Erlang service and preparation
laws, solves it exactly, and compares per-state atoms, per-state means and a
histogram of ``W`` with a long simulation run.

Run:  python3 demos/oracle_check.py [seed]
"""
import sys

import numpy as np

from altqueue import MixedErlang, SimulationConfig, StateServiceSpec, TransitionMatrix, simulate_markov, solve_markov
from altqueue.markov import MarkovModulatedModel, evaluate, fixed_point_residual, mean_waiting_time


def random_model(rng, states=3):
    p = rng.dirichlet(np.ones(states), size=states)
    law = lambda: (float(rng.uniform(0.5, 3.0)), tuple(rng.dirichlet(np.ones(int(rng.integers(1, 4))))))
    service = [StateServiceSpec.mixed_erlang(*law()) for _ in range(states)]
    prep = [MixedErlang(*law()) for _ in range(states)]
    return MarkovModulatedModel(TransitionMatrix(p), service, prep)


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
    model = random_model(np.random.default_rng(seed))
    print("transition matrix:\n", np.round(model.P, 4))
    for j in range(model.states):
        s, b = model.service[j].sampler, model.preparation[j]
        print(f"state {j + 1}: service rate {s.rate:.3f} weights {np.round(s.weights, 3)}, "
              f"preparation rate {b.rate:.3f} weights {np.round(b.weights, 3)}")

    sol = solve_markov(model)
    mu = max(b.rate for b in model.preparation)
    print(f"\nfixed-point residual: {fixed_point_residual(sol, np.arange(1, 21) * 0.1 * mu):.2e}")

    cfg = SimulationConfig(iterations=2_000_000, seed=seed, histogram_bins=12, histogram_max=6.0)
    est = simulate_markov(model, cfg)
    per_state = mean_waiting_time(sol)[1]

    print(f"\n{'state':>5} {'atom exact':>11} {'atom sim':>9} {'E[W;Z] exact':>13} {'E[W;Z] sim':>11} {'SE':>8}")
    for j in range(model.states):
        ps = est.per_state
        print(f"{j + 1:5d} {sol.atoms[j]:11.5f} {ps.atoms[j]:9.5f} {per_state[j]:13.5f} {ps.means[j]:11.5f} {ps.mean_stderr[j]:8.5f}")
    print(f"total {sol.atom:11.5f} {est.atom_estimate:9.5f} {sol.mean:13.5f} {est.mean_wait:11.5f} {est.standard_error:8.5f}")

    print(f"\n{'bin':>13} {'P exact':>9} {'P sim':>9}")
    edges = est.bin_edges
    for k, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        exact = evaluate(sol, hi)[1] - evaluate(sol, lo)[1]
        print(f"[{lo:4.1f}, {hi:4.1f}) {exact:9.5f} {est.histogram[k] / est.samples_used:9.5f}")
    print(f"{'beyond':>13} {1 - evaluate(sol, edges[-1])[1]:9.5f} {est.overflow / est.samples_used:9.5f}")


if __name__ == "__main__":
    main()
