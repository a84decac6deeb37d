"""Markov-modulated preparation and service times.

A background chain ``Z`` on states ``0..M-1`` drives the service time ``A_n``
(law depends on ``Z_n``) and the preparation time ``B_{n+1}`` (law depends on
``Z_{n+1}``).  Preparation times are mixed-Erlang per state; service times
have arbitrary rational Laplace-Stieltjes transforms.  The steady-state
waiting time of ``W_{n+1} = max(0, B_{n+1} - A_n - W_n)`` has, per state, an
atom at zero plus an Erlang-mixture density.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Sequence

import numpy as np
from scipy.special import gammainc

from .distributions import MixedErlang
from .errors import (
    DomainError,
    ModelValidationError,
    NumericalFailure,
    SolutionRejected,
    UndefinedCorrelationError,
)
from .transforms import Polynomial, RationalFunction, rational_derivative

# the per-state preparation law
MixedErlangSpec = MixedErlang


class IllConditionedWarning(RuntimeWarning):
    pass


# --------------------------------------------------------------------------
# model types


def _period(adj: np.ndarray) -> int:
    m = adj.shape[0]
    level = np.full(m, -1)
    level[0] = 0
    queue = [0]
    while queue:
        u = queue.pop(0)
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        g = np.gcd(g, abs(level[u] + 1 - level[v]))
    return int(g)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Irreducible stochastic matrix; periodic chains are allowed."""

    entries: np.ndarray
    period: int = field(init=False)

    def __post_init__(self):
        p = np.array(self.entries, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] == 0:
            raise ModelValidationError(f"transition matrix must be square, got shape {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ModelValidationError("transition probabilities must lie in [0, 1]")
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-12)
        if bad.size:
            raise ModelValidationError(
                f"row {bad[0] + 1} of the transition matrix sums to {sums[bad[0]]!r}, not 1"
            )
        adj = p > 0
        reach = adj | np.eye(len(p), dtype=bool)
        for _ in range(len(p)):
            nxt = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
            if np.array_equal(nxt, reach):
                break
            reach = nxt
        if not reach.all():
            raise ModelValidationError("transition matrix is reducible")
        p.flags.writeable = False
        object.__setattr__(self, "entries", p)
        object.__setattr__(self, "period", _period(adj))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def is_aperiodic(self) -> bool:
        return self.period == 1


@dataclass(frozen=True, eq=False)
class StateServiceSpec:
    """Service-time law in one state, given by its LST.

    ``mean`` and ``second_moment`` are derived from the transform.  ``sampler``
    is the equivalent :class:`MixedErlang` when the law belongs to that family
    (required only for simulation).
    """

    lst: RationalFunction
    sampler: MixedErlang | None = None
    mean: float = field(init=False)
    second_moment: float = field(init=False)

    def __post_init__(self):
        f = self.lst
        if abs(f(0.0) - 1.0) > 1e-10:
            raise ModelValidationError(f"service LST must equal 1 at 0, got {f(0.0)!r}")
        mean = -float(rational_derivative(f, 1)(0.0))
        second = float(rational_derivative(f, 2)(0.0))
        if mean < -1e-12 or second < mean**2 - 1e-12 * max(1.0, second):
            raise ModelValidationError("service LST derivatives at 0 have invalid signs")
        object.__setattr__(self, "mean", max(mean, 0.0))
        object.__setattr__(self, "second_moment", second)

    @classmethod
    def exponential(cls, rate: float) -> "StateServiceSpec":
        return cls.mixed_erlang(rate, (1.0,))

    @classmethod
    def mixed_erlang(cls, rate: float, weights: Sequence[float]) -> "StateServiceSpec":
        law = MixedErlang(rate, tuple(weights))
        return cls(law.lst(), law)

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2


@dataclass(frozen=True, eq=False)
class MarkovModulatedModel:
    transition: TransitionMatrix
    service: tuple
    preparation: tuple

    def __post_init__(self):
        if not isinstance(self.transition, TransitionMatrix):
            object.__setattr__(self, "transition", TransitionMatrix(self.transition))
        object.__setattr__(self, "service", tuple(self.service))
        object.__setattr__(self, "preparation", tuple(self.preparation))
        m = self.transition.size
        if len(self.service) != m or len(self.preparation) != m:
            raise ModelValidationError(
                f"state count mismatch: P is {m}x{m}, {len(self.service)} service and "
                f"{len(self.preparation)} preparation specs"
            )

    @classmethod
    def exponential(cls, transition, service_rates, preparation_rates) -> "MarkovModulatedModel":
        """Exponential services and preparations with the given per-state rates."""
        return cls(
            TransitionMatrix(transition),
            [StateServiceSpec.exponential(r) for r in service_rates],
            [MixedErlang.exponential(r) for r in preparation_rates],
        )

    @property
    def states(self) -> int:
        return self.transition.size

    @property
    def P(self) -> np.ndarray:
        return self.transition.entries

    def scale_preparation(self, u: float) -> "MarkovModulatedModel":
        """Copy with every preparation rate multiplied by ``u``."""
        prep = [MixedErlang(b.rate * u, b.weights) for b in self.preparation]
        return MarkovModulatedModel(self.transition, self.service, prep)


# --------------------------------------------------------------------------
# chain quantities and correlations


def stationary_distribution(P) -> np.ndarray:
    """Stationary vector of an irreducible chain (``pi P = pi``, ``sum(pi) = 1``)."""
    if not isinstance(P, TransitionMatrix):
        P = TransitionMatrix(P)
    p = P.entries
    m = p.shape[0]
    a = np.vstack([p.T - np.eye(m), np.ones(m)])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(a, b, rcond=None)[0]
    if np.any(pi <= 0):
        raise ModelValidationError("stationary distribution is not strictly positive")
    return pi / pi.sum()


def n_step(P, n: int) -> np.ndarray:
    if n < 0:
        raise DomainError("number of steps must be nonnegative")
    p = P.entries if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    return np.linalg.matrix_power(p, n)


def _rounding_floor(value: float, bound: float, size: int) -> float:
    """Zero ``value`` when it is below the floating-point error bound of its evaluation."""
    return 0.0 if abs(value) <= 8 * size * np.finfo(float).eps * bound else float(value)


def _autocorrelation(P, pi, means, second, n):
    if n < 1:
        raise DomainError("lag must be a positive integer")
    mean = pi @ means
    var = pi @ second - mean**2
    if var <= 1e-14 * max(pi @ second, 1e-300):
        raise UndefinedCorrelationError("sequence has zero variance")
    spread = pi @ (means - mean) ** 2
    if spread <= 1e-14 * max(mean**2, 1e-300):
        raise UndefinedCorrelationError("all states share one mean; the modulating chain induces no correlation")
    pn = n_step(P, n)
    cov = pi @ ((pn - pi[None, :]) @ means * means)
    bound = pi @ ((pn + pi[None, :]) @ np.abs(means) * np.abs(means))
    return _rounding_floor(cov, bound, len(pi)) / var


def autocorrelation_service(model: MarkovModulatedModel, n: int) -> float:
    """Lag-``n`` autocorrelation of the stationary service-time sequence."""
    pi = stationary_distribution(model.transition)
    means = np.array([a.mean for a in model.service])
    second = np.array([a.second_moment for a in model.service])
    return _autocorrelation(model.transition, pi, means, second, n)


def autocorrelation_preparation(model: MarkovModulatedModel, n: int) -> float:
    """Lag-``n`` autocorrelation of the stationary preparation-time sequence."""
    pi = stationary_distribution(model.transition)
    means = np.array([b.mean for b in model.preparation])
    second = np.array([b.second_moment for b in model.preparation])
    return _autocorrelation(model.transition, pi, means, second, n)


def crosscorrelation(model: MarkovModulatedModel) -> float:
    """Correlation between ``A_n`` and ``B_n`` (both driven by ``Z_n``)."""
    pi = stationary_distribution(model.transition)
    a = np.array([x.mean for x in model.service])
    b = np.array([x.mean for x in model.preparation])
    sa = np.array([x.second_moment for x in model.service])
    sb = np.array([x.second_moment for x in model.preparation])
    lam_hat, mu_hat = pi @ a, pi @ b
    var_a = pi @ sa - lam_hat**2
    var_b = pi @ sb - mu_hat**2
    if var_a <= 1e-14 * (pi @ sa) or var_b <= 1e-14 * (pi @ sb):
        raise UndefinedCorrelationError("service or preparation time has zero variance")
    cov = pi @ ((a - lam_hat) * (b - mu_hat))
    bound = pi @ ((np.abs(a) + abs(lam_hat)) * (np.abs(b) + abs(mu_hat)))
    return _rounding_floor(cov, bound, len(pi)) / float(np.sqrt(var_a * var_b))


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    witness: tuple | None  # (i, j), states numbered from 1

    def __bool__(self):
        return self.stable


def check_stability(model: MarkovModulatedModel) -> StabilityResult:
    """Look for a transition ``i -> j`` on which ``B_{n+1} < A_n`` has positive probability.

    Mixed-Erlang preparation times put mass arbitrarily close to zero, so this
    holds on any transition out of a state whose service time is not
    identically zero.
    """
    p = model.P
    for i in range(model.states):
        if model.service[i].mean <= 0:
            continue
        for j in range(model.states):
            if p[i, j] > 0:
                return StabilityResult(True, (i + 1, j + 1))
    return StabilityResult(False, None)


# --------------------------------------------------------------------------
# solution type


@dataclass(frozen=True, eq=False)
class PerStateWaitingSolution:
    """Joint law of ``(W, Z)``: per state an atom plus Erlang-type terms.

    ``density_terms[j]`` holds ``(coefficient, rate, power)`` triples meaning
    ``coefficient * x**power * exp(-rate * x)``.  ``transform_values`` maps
    ``(i, j, m)`` to the solved ``m``-th derivative of ``E[exp(-s W); Z = i]``
    at ``s = mu_j``.
    """

    model: MarkovModulatedModel
    pi: np.ndarray
    atoms: np.ndarray
    density_terms: tuple
    transform_values: dict
    condition_number: float = float("nan")

    @property
    def states(self) -> int:
        return len(self.atoms)

    def state_mass(self, j: int) -> float:
        dens = sum(c * factorial(p) / r ** (p + 1) for c, r, p in self.density_terms[j])
        return float(self.atoms[j] + dens)

    @property
    def atom(self) -> float:
        return float(np.sum(self.atoms))

    @property
    def mean(self) -> float:
        return mean_waiting_time(self)[0]

    def transform(self, j: int, s, order: int = 0):
        """``d^order/ds^order E[exp(-s W); Z = j]`` from the solved representation."""
        s = np.asarray(s, dtype=complex)
        out = np.zeros(s.shape, dtype=complex)
        if order == 0:
            out += self.atoms[j]
        for c, r, p in self.density_terms[j]:
            rising = np.prod(np.arange(p + 1, p + 1 + order, dtype=float)) if order else 1.0
            out += c * factorial(p) * (-1) ** order * rising / (r + s) ** (p + 1 + order)
        return out if out.ndim else complex(out)


def mean_waiting_time(solution: PerStateWaitingSolution):
    """Return ``(E[W], (E[W; Z=j])_j)``."""
    per_state = np.array(
        [
            sum(c * factorial(p + 1) / r ** (p + 2) for c, r, p in terms)
            for terms in solution.density_terms
        ],
        dtype=float,
    )
    return float(per_state.sum()), per_state


def evaluate(solution: PerStateWaitingSolution, x: float, state: int | None = None):
    """Density and distribution function of ``W`` at ``x`` (jointly with ``Z = state``)."""
    if x < 0 or not np.isfinite(x):
        raise DomainError(f"evaluation point must be a nonnegative number, got {x!r}")
    states = range(solution.states) if state is None else [state]
    dens = cdf = 0.0
    for j in states:
        cdf += solution.atoms[j]
        for c, r, p in solution.density_terms[j]:
            dens += c * x**p * np.exp(-r * x)
            cdf += c * factorial(p) / r ** (p + 1) * gammainc(p + 1, r * x)
    return float(dens), float(cdf)


# --------------------------------------------------------------------------
# solvers


def _solve_linear(a: np.ndarray, b: np.ndarray):
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular linear system", condition=float("inf")) from exc
    cond = float(np.linalg.cond(a))
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("linear solve produced non-finite values", condition=cond)
    if cond > 1e10:
        warnings.warn(f"linear system condition number {cond:.3g}", IllConditionedWarning, stacklevel=3)
    return x, cond


def _require_stable(model):
    res = check_stability(model)
    if not res:
        raise ModelValidationError("model is not stable: no transition admits B < A")


def _verify(sol: PerStateWaitingSolution) -> PerStateWaitingSolution:
    for j in range(sol.states):
        mass = sol.state_mass(j)
        if abs(mass - sol.pi[j]) > 1e-9:
            raise SolutionRejected(f"state {j} mass {mass} differs from pi_j {sol.pi[j]}")
        if sol.atoms[j] < -1e-9:
            raise SolutionRejected(f"negative atom in state {j}", atom=sol.atoms[j])
    scale = max(max(b.mean for b in sol.model.preparation), max(a.mean for a in sol.model.service))
    grid = np.linspace(0.0, 10.0 * scale, 200)
    for j in range(sol.states):
        dens = np.zeros_like(grid)
        for c, r, p in sol.density_terms[j]:
            dens += c * grid**p * np.exp(-r * grid)
        if dens.min() < -1e-9:
            raise SolutionRejected(f"negative density in state {j}", minimum=float(dens.min()))
    return sol


def solve_exponential(model: MarkovModulatedModel) -> PerStateWaitingSolution:
    """Steady state for exponential preparation times.

    Solves the ``M**2`` linear equations
    ``w_j(mu_l) + mu_l/(mu_j+mu_l) sum_i p_ij w_i(mu_j) alpha_i(mu_j) = pi_j``
    for ``w_i(mu_j) = E[exp(-mu_j W); Z = i]``; the state-``j`` density is then
    ``mu_j c_j exp(-mu_j x)`` with ``c_j = sum_i p_ij w_i(mu_j) alpha_i(mu_j)``.
    """
    if any(b.phases != 1 for b in model.preparation):
        raise ModelValidationError("solve_exponential needs exponential preparation times")
    _require_stable(model)
    m = model.states
    p = model.P
    pi = stationary_distribution(model.transition)
    mu = np.array([b.rate for b in model.preparation])
    alpha = np.array([[model.service[i].lst(mu[j]) for j in range(m)] for i in range(m)])

    def idx(i, j):
        return i * m + j

    a = np.eye(m * m)
    rhs = np.zeros(m * m)
    for j in range(m):
        for ell in range(m):
            row = idx(j, ell)
            rhs[row] = pi[j]
            w = mu[ell] / (mu[j] + mu[ell])
            for i in range(m):
                a[row, idx(i, j)] += w * p[i, j] * alpha[i, j]
    x, cond = _solve_linear(a, rhs)
    omega = x.reshape(m, m)
    c = np.array([np.sum(p[:, j] * omega[:, j] * alpha[:, j]) for j in range(m)])
    sol = PerStateWaitingSolution(
        model=model,
        pi=pi,
        atoms=pi - c,
        density_terms=tuple(((mu[j] * c[j], mu[j], 0),) for j in range(m)),
        transform_values={(i, j, 0): omega[i, j] for i in range(m) for j in range(m)},
        condition_number=cond,
    )
    return _verify(sol)


def _kernel_derivative(mu: float, k: int, m: int, s: float) -> float:
    """``d^m/ds^m (mu / (mu + s))**k``."""
    rising = np.prod(np.arange(k, k + m, dtype=float)) if m else 1.0
    return mu**k * (-1) ** m * rising / (mu + s) ** (k + m)


def _state_forms(model, pi):
    """Coefficients expressing ``omega_j(s) = pi_j + sum_k G_jk ((mu_j/(mu_j+s))**k - 1)``.

    Returns ``forms[j][k]`` as a dict ``{(i, m): coefficient}``: ``G_jk`` is
    linear in the unknowns ``omega_i^(m)(mu_j)``.
    """
    m_states = model.states
    p = model.P
    max_phase = max(b.phases for b in model.preparation)
    # alpha_i^(d)(mu_j), exact derivatives of the rational transforms
    derivs = [
        [rational_derivative(model.service[i].lst, d) for d in range(max_phase)]
        for i in range(m_states)
    ]
    forms = []
    for j in range(m_states):
        prep = model.preparation[j]
        mu = prep.rate
        alpha_d = [[derivs[i][d](mu) for d in range(prep.phases)] for i in range(m_states)]
        per_k = [dict() for _ in range(prep.phases + 1)]
        for n, kappa in enumerate(prep.weights, start=1):
            if kappa == 0:
                continue
            for ell in range(n):
                base = kappa * (-mu) ** ell / factorial(ell)
                for i in range(m_states):
                    if p[i, j] == 0:
                        continue
                    for mm in range(ell + 1):
                        coef = base * p[i, j] * comb(ell, mm) * alpha_d[i][ell - mm]
                        key = (i, mm)
                        per_k[n - ell][key] = per_k[n - ell].get(key, 0.0) + coef
        forms.append(per_k)
    return forms


def solve_mixed_erlang(model: MarkovModulatedModel) -> PerStateWaitingSolution:
    """Steady state for mixed-Erlang preparation times.

    The unknowns are ``omega_i^(m)(mu_j)`` for every state pair and
    ``m < N_j`` (``N_j`` = number of Erlang phases in state ``j``).  Each
    equation differentiates the fixed-point relation for ``omega_i(s)`` ``m``
    times and evaluates it at ``s = mu_j``.
    """
    _require_stable(model)
    m_states = model.states
    pi = stationary_distribution(model.transition)
    phases = [b.phases for b in model.preparation]
    rates = [b.rate for b in model.preparation]

    index = {}
    for i in range(m_states):
        for j in range(m_states):
            for mm in range(phases[j]):
                index[(i, j, mm)] = len(index)
    size = len(index)
    forms = _state_forms(model, pi)

    a = np.eye(size)
    rhs = np.zeros(size)
    for (i, j, mm), row in index.items():
        # omega_i^(mm)(mu_j) = [mm == 0] pi_i + sum_k G_ik (K_k^(mm)(mu_j) - [mm == 0])
        rhs[row] = pi[i] if mm == 0 else 0.0
        mu_i = rates[i]
        for k in range(1, phases[i] + 1):
            kern = _kernel_derivative(mu_i, k, mm, rates[j]) - (1.0 if mm == 0 else 0.0)
            for (src, order), coef in forms[i][k].items():
                a[row, index[(src, i, order)]] -= coef * kern
    x, cond = _solve_linear(a, rhs)

    atoms = np.empty(m_states)
    terms = []
    for j in range(m_states):
        mu = rates[j]
        g = [sum(coef * x[index[(src, j, order)]] for (src, order), coef in forms[j][k].items())
             for k in range(phases[j] + 1)]
        atoms[j] = pi[j] - sum(g[1:])
        terms.append(
            tuple((g[k] * mu**k / factorial(k - 1), mu, k - 1) for k in range(1, phases[j] + 1) if g[k] != 0)
        )
    sol = PerStateWaitingSolution(
        model=model,
        pi=pi,
        atoms=atoms,
        density_terms=tuple(terms),
        transform_values={key: x[row] for key, row in index.items()},
        condition_number=cond,
    )
    return _verify(sol)


def solve(model: MarkovModulatedModel) -> PerStateWaitingSolution:
    """Dispatch to :func:`solve_exponential` when possible."""
    if all(b.phases == 1 for b in model.preparation):
        return solve_exponential(model)
    return solve_mixed_erlang(model)


def fixed_point_residual(solution: PerStateWaitingSolution, probes) -> float:
    """Largest relative residual of the steady-state transform equation.

    Both sides are evaluated from the solved atoms and density terms (not from
    the stored linear-system unknowns), so this checks the distribution itself
    is a fixed point of the recursion.
    """
    model = solution.model
    pi = solution.pi
    forms = _state_forms(model, pi)
    worst = 0.0
    for j in range(model.states):
        mu = model.preparation[j].rate
        lhs = np.asarray(solution.transform(j, probes)).real
        rhs = np.full(len(probes), pi[j], dtype=float)
        for k, form in enumerate(forms[j]):
            if k == 0 or not form:
                continue
            g = sum(coef * solution.transform(src, mu, order).real for (src, order), coef in form.items())
            rhs += g * ((mu / (mu + np.asarray(probes))) ** k - 1.0)
        err = np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-300)
        worst = max(worst, float(err.max()))
    return worst
