"""Exact and simulated waiting times for the alternating-service queue.

The waiting time obeys ``W_{n+1} = max(0, B_{n+1} - A_n - W_n)`` where ``B``
is a preparation time and ``A`` a service time.  Two dependence structures
between them are solved exactly: Markov-modulated laws (:mod:`altqueue.markov`)
and rational joint Laplace transforms (:mod:`altqueue.joint`).  A Monte Carlo
oracle (:mod:`altqueue.simulation`) checks both.
"""
from .distributions import MixedErlang
from .errors import (
    AltQueueError,
    CapabilityError,
    DecompositionError,
    DomainError,
    ModelValidationError,
    NumericalFailure,
    RootFindingError,
    SolutionRejected,
    UndefinedCorrelationError,
)
from .joint import (
    JointLstModel,
    JointWaitingSolution,
    make_brownian,
    make_compound_poisson,
    make_independent,
    make_linear,
    solve_waiting_time,
)
from .markov import (
    MarkovModulatedModel,
    PerStateWaitingSolution,
    StateServiceSpec,
    TransitionMatrix,
    autocorrelation_preparation,
    autocorrelation_service,
    check_stability,
    crosscorrelation,
    stationary_distribution,
)
from .markov import solve as solve_markov
from .scenario import Scenario, format_scenario, parse_scenario, run_scenario
from .simulation import SimulationConfig, SimulationEstimate, empirical_correlations, simulate_joint, simulate_markov
from .transforms import PartialFractionExpansion, Polynomial, RationalFunction, RootSet, find_roots, partial_fractions

__version__ = "0.1.0"
