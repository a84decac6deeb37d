import numpy as np
import pytest
from corpus import random_markov
from hypothesis import given, settings
from hypothesis import strategies as st

from altqueue import (
    MixedErlang,
    ModelValidationError,
    DomainError,
    RationalFunction,
    StateServiceSpec,
    UndefinedCorrelationError,
    make_independent,
    solve_waiting_time,
)
from altqueue.markov import (
    MarkovModulatedModel,
    PerStateWaitingSolution,
    TransitionMatrix,
    autocorrelation_preparation,
    autocorrelation_service,
    check_stability,
    crosscorrelation,
    evaluate,
    fixed_point_residual,
    mean_waiting_time,
    n_step,
    solve,
    solve_exponential,
    solve_mixed_erlang,
    stationary_distribution,
)

CYCLIC = np.roll(np.eye(4), 1, axis=1)
UNIFORM = np.full((4, 4), 0.25)
BIPARTITE = np.array([[0, 0.5, 0, 0.5], [0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5], [0.5, 0, 0.5, 0]])
LAM = (1, 100, 1, 100)


def family(p, u, pattern):
    return MarkovModulatedModel.exponential(p, LAM, [u * x for x in pattern])


# --- chain quantities ------------------------------------------------------


@pytest.mark.parametrize(
    "p, pi",
    [
        (CYCLIC, [0.25] * 4),
        (UNIFORM, [0.25] * 4),
        ([[0.5, 0.5], [0.25, 0.75]], [1 / 3, 2 / 3]),
    ],
)
def test_stationary_distribution(p, pi):
    np.testing.assert_allclose(stationary_distribution(p), pi, atol=1e-14)


def test_reducible_matrix_rejected():
    with pytest.raises(ModelValidationError, match="reducible"):
        TransitionMatrix([[1.0, 0.0], [0.5, 0.5]])


def test_row_sum_error_names_row():
    with pytest.raises(ModelValidationError, match="row 2"):
        TransitionMatrix([[0.5, 0.5], [0.5, 0.4]])


def test_n_step():
    np.testing.assert_array_equal(n_step(CYCLIC, 0), np.eye(4))
    np.testing.assert_allclose(n_step(CYCLIC, 4), np.eye(4), atol=1e-15)
    np.testing.assert_allclose(n_step(UNIFORM, 2), UNIFORM, atol=1e-15)


def test_period_detection():
    assert TransitionMatrix(CYCLIC).period == 4
    assert TransitionMatrix(BIPARTITE).period == 2
    assert TransitionMatrix(UNIFORM).is_aperiodic


# --- correlations ----------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7])
def test_cyclic_autocorrelation_vectors(n):
    model = family(CYCLIC, 1.0, (0.5, 10, 0.5, 10))
    assert abs(autocorrelation_service(model, n) - (-1) ** n * 9801 / 29803) <= 1e-12
    assert abs(autocorrelation_preparation(model, n) - (-1) ** n * 361 / 1163) <= 1e-12


@pytest.mark.parametrize("u", [0.1, 1.0, 10.0])
def test_crosscorrelation_families(u):
    assert crosscorrelation(family(CYCLIC, u, (0.5, 10, 0.5, 10))) == pytest.approx(0.3195, abs=5e-4)
    assert crosscorrelation(family(CYCLIC, u, (10, 0.5, 10, 0.5))) == pytest.approx(-0.3195, abs=5e-4)
    assert crosscorrelation(family(BIPARTITE, u, (0.5, 0.5, 10, 10))) == 0.0
    assert crosscorrelation(family(UNIFORM, u, (0.5, 0.5, 10, 10))) == 0.0


def test_uniform_chain_has_no_autocorrelation():
    model = family(UNIFORM, 1.0, (0.5, 10, 0.5, 10))
    for n in (1, 2, 5):
        assert autocorrelation_service(model, n) == 0.0
        assert autocorrelation_preparation(model, n) == 0.0


@given(u=st.floats(1e-3, 1e3), pattern=st.sampled_from([(0.5, 10, 0.5, 10), (10, 0.5, 10, 0.5)]))
def test_correlations_scale_invariant(u, pattern):
    base, scaled = family(CYCLIC, 1.0, pattern), family(CYCLIC, u, pattern)
    for f in (crosscorrelation, lambda m: autocorrelation_preparation(m, 1), lambda m: autocorrelation_service(m, 1)):
        assert abs(f(base) - f(scaled)) <= 1e-12


def test_single_state_autocorrelation_undefined():
    model = MarkovModulatedModel.exponential([[1.0]], [1.0], [1.0])
    with pytest.raises(UndefinedCorrelationError):
        autocorrelation_service(model, 1)
    with pytest.raises(UndefinedCorrelationError):
        autocorrelation_preparation(model, 1)


def test_autocorrelation_rejects_lag_zero():
    with pytest.raises(DomainError):
        autocorrelation_service(family(CYCLIC, 1.0, (0.5, 10, 0.5, 10)), 0)


@settings(max_examples=60)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
def test_correlations_are_bounded(seed, n):
    model = random_markov(seed)
    for f in (lambda: autocorrelation_service(model, n), lambda: autocorrelation_preparation(model, n), lambda: crosscorrelation(model)):
        try:
            v = f()
        except UndefinedCorrelationError:
            continue
        assert -1 - 1e-12 <= v <= 1 + 1e-12


# --- stability -------------------------------------------------------------


def test_stability_witness_single_state():
    res = check_stability(MarkovModulatedModel.exponential([[1.0]], [1.0], [1.0]))
    assert res and res.witness == (1, 1)


def test_cyclic_family_is_stable():
    assert check_stability(family(CYCLIC, 1.0, (0.5, 10, 0.5, 10)))


def test_zero_service_is_unstable():
    zero = StateServiceSpec(RationalFunction.constant(1.0))
    model = MarkovModulatedModel(TransitionMatrix([[1.0]]), [zero], [MixedErlang.exponential(1.0)])
    res = check_stability(model)
    assert not res and res.witness is None
    with pytest.raises(ModelValidationError):
        solve(model)


# --- hand-solved single state ----------------------------------------------


@pytest.fixture
def mm1():
    return solve_exponential(MarkovModulatedModel.exponential([[1.0]], [1.0], [1.0]))


def test_single_state_exponential_by_hand(mm1):
    assert mm1.atoms[0] == pytest.approx(0.6, abs=1e-14)
    assert mm1.transform_values[(0, 0, 0)] == pytest.approx(0.8, abs=1e-14)
    assert mm1.mean == pytest.approx(0.4, abs=1e-14)
    assert mean_waiting_time(mm1)[1][0] == pytest.approx(0.4, abs=1e-14)


def test_evaluate_single_state(mm1):
    dens, cdf = evaluate(mm1, 1.0)
    assert dens == pytest.approx(0.4 * np.exp(-1), rel=1e-14)
    assert evaluate(mm1, 0.0)[1] == pytest.approx(0.6, abs=1e-15)
    assert evaluate(mm1, 1e6 * mm1.mean)[1] == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        evaluate(mm1, -1.0)


def test_atom_only_solution_has_zero_mean(mm1):
    sol = PerStateWaitingSolution(mm1.model, mm1.pi, np.array([1.0]), ((),), {})
    assert mean_waiting_time(sol)[0] == 0.0


def test_cdf_nondecreasing_to_state_mass():
    sol = solve(random_markov(7))
    for j in range(sol.states):
        xs = np.linspace(0, 30, 300)
        cdf = np.array([evaluate(sol, x, j)[1] for x in xs])
        assert np.all(np.diff(cdf) >= -1e-12)
        assert evaluate(sol, 1e6 * max(sol.mean, 1.0), j)[1] == pytest.approx(sol.pi[j], abs=1e-8)


# --- reductions ------------------------------------------------------------


def _terms_array(sol):
    return [sorted((r, p, c) for c, r, p in t) for t in sol.density_terms]


@pytest.mark.parametrize("seed", range(50))
def test_mixed_erlang_solver_reduces_to_exponential(seed):
    model = random_markov(1000 + seed, exponential=True)
    a, b = solve_exponential(model), solve_mixed_erlang(model)
    np.testing.assert_allclose(a.atoms, b.atoms, rtol=0, atol=1e-10)
    for ta, tb in zip(_terms_array(a), _terms_array(b)):
        assert len(ta) == len(tb)
        for (ra, pa, ca), (rb, pb, cb) in zip(ta, tb):
            assert (ra, pa) == (rb, pb) and abs(ca - cb) <= 1e-10


@pytest.mark.parametrize("weights", [(1.0,), (0.0, 1.0), (0.3, 0.7), (0.2, 0.3, 0.5)])
def test_single_state_matches_joint_independent(weights):
    prep = MixedErlang(1.7, weights)
    markov = solve(MarkovModulatedModel(TransitionMatrix([[1.0]]), [StateServiceSpec.exponential(1.2)], [prep]))
    joint = solve_waiting_time(make_independent(prep, 1.2))
    assert markov.atom == pytest.approx(joint.atom, abs=1e-8)
    assert markov.mean == pytest.approx(joint.mean, abs=1e-8)
    xs = np.linspace(0.0, 8.0, 40)
    ours = np.array([evaluate(markov, x)[0] for x in xs])
    np.testing.assert_allclose(ours, joint.density(xs), atol=1e-8)


# --- corpus properties -----------------------------------------------------


@settings(max_examples=150)
@given(seed=st.integers(0, 2**31 - 1))
def test_corpus_normalisation_positivity_residual(seed):
    model = random_markov(seed)
    sol = solve(model)
    assert sol.pi.sum() == pytest.approx(1.0, abs=1e-12)
    scale = max(b.mean for b in model.preparation) + max(a.mean for a in model.service)
    grid = np.linspace(0.0, 20.0 * scale, 200)
    for j in range(sol.states):
        assert abs(sol.state_mass(j) - sol.pi[j]) <= 1e-9
        assert abs(sol.transform(j, 0.0) - sol.pi[j]) <= 1e-9
        assert sol.atoms[j] >= -1e-9
        dens = np.array([evaluate(sol, x, j)[0] for x in grid])
        assert dens.min() >= -1e-9
    mu_max = max(b.rate for b in model.preparation)
    assert fixed_point_residual(sol, np.arange(1, 21) * 0.1 * mu_max) <= 1e-8


def test_residual_detects_a_wrong_solution(mm1):
    broken = PerStateWaitingSolution(mm1.model, mm1.pi, np.array([0.5]), (((0.5, 1.0, 0),),), {})
    assert fixed_point_residual(broken, np.linspace(0.1, 2, 20)) > 1e-3


def test_example_models_are_normalised():
    for p, pattern in [(CYCLIC, (0.5, 10, 0.5, 10)), (UNIFORM, (10, 0.5, 10, 0.5)), (BIPARTITE, (0.5, 0.5, 10, 10))]:
        for u in (0.05, 1.0, 2.0):
            sol = solve(family(p, u, pattern))
            assert sum(sol.state_mass(j) for j in range(4)) == pytest.approx(1.0, abs=1e-9)
            assert fixed_point_residual(sol, np.arange(1, 21) * 0.1 * 10 * u) <= 1e-8
