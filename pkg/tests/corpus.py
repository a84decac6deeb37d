"""Seeded random model corpus shared by the test modules."""
from __future__ import annotations

import numpy as np

from altqueue import MixedErlang, StateServiceSpec, TransitionMatrix
from altqueue.joint import JointLstModel, make_brownian, make_compound_poisson, make_independent, make_linear
from altqueue.markov import MarkovModulatedModel


def random_weights(rng, phases: int) -> tuple:
    w = rng.dirichlet(np.ones(phases))
    if phases > 1 and rng.random() < 0.3:
        w[rng.integers(phases - 1)] = 0.0
        w /= w.sum()
    w = np.round(w, 6)
    w[-1] = 1.0 - w[:-1].sum()
    return tuple(float(x) for x in w)


def random_transition(rng, m: int) -> np.ndarray:
    """Irreducible: a random cycle plus a sparse random Dirichlet part."""
    p = rng.dirichlet(np.ones(m), size=m) * (rng.random((m, m)) < 0.6)
    perm = rng.permutation(m)
    for k in range(m):
        p[perm[k], perm[(k + 1) % m]] += rng.uniform(0.2, 1.0)
    return p / p.sum(axis=1, keepdims=True)


def random_markov(seed: int, max_states: int = 4, max_phases: int = 3, exponential: bool = False) -> MarkovModulatedModel:
    """``exponential`` restricts the preparation laws to one phase; services stay mixed-Erlang."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, max_states + 1))
    service, prep = [], []
    for _ in range(m):
        ns = int(rng.integers(1, max_phases + 1))
        npr = 1 if exponential else int(rng.integers(1, max_phases + 1))
        service.append(StateServiceSpec.mixed_erlang(float(rng.uniform(0.5, 4.0)), random_weights(rng, ns)))
        prep.append(MixedErlang(float(rng.uniform(0.5, 4.0)), random_weights(rng, npr)))
    return MarkovModulatedModel(TransitionMatrix(random_transition(rng, m)), service, prep)


JOINT_KINDS = ("independent", "linear", "compound_poisson", "brownian")


def random_joint(seed: int, kind: str | None = None) -> JointLstModel:
    rng = np.random.default_rng(seed)
    kind = kind or JOINT_KINDS[int(rng.integers(len(JOINT_KINDS)))]
    lam = float(rng.uniform(0.3, 3.0))
    if kind == "linear":
        return make_linear(float(rng.uniform(0.1, 8.0)), lam)
    if kind == "brownian":
        return make_brownian(float(rng.uniform(-2.0, 4.0)), float(rng.uniform(0.05, 4.0)), lam)
    law = MixedErlang(float(rng.uniform(0.3, 5.0)), random_weights(rng, int(rng.integers(1, 5))))
    if kind == "independent":
        return make_independent(law, lam)
    return make_compound_poisson(float(rng.uniform(0.1, 5.0)), law, lam)
