"""Preparation times that depend on the previous service time.

Service times are exponential with rate ``lam`` and, given ``A = t``, the next
preparation time has transform ``E[exp(-s B) | A = t] = chi(s) exp(-psi(s) t)``
with rational ``chi = P1/Q1`` and ``psi = P2/Q2``.  The waiting-time transform
is rational with denominator ``D(s) = Q1(s) ((lam - s) Q2(s) + P2(s))``; the
density is a sum of exponential polynomials over the roots of ``D`` in the left
half-plane.

The coefficients are obtained from the fixed point ``W = max(0, V)`` with
``V = B - A - W'``: the bilateral transform of ``V`` is
``g(s) = omega(-s) * lam P1 Q2 / D``, and ``omega(s) - c0`` must equal the part
of ``g`` carried by poles with negative real part.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
from numpy.polynomial import polynomial as npoly

from .distributions import MixedErlang
from .errors import CapabilityError, DomainError, ModelValidationError, NumericalFailure, SolutionRejected
from .transforms import Polynomial, RationalFunction, RootSet, find_roots, principal_parts, rational_derivative


class DegenerateDegreeWarning(RuntimeWarning):
    """The denominator polynomial has lower degree than the generic bound."""


# --------------------------------------------------------------------------
# dependence kinds (kept for the simulator)


@dataclass(frozen=True)
class Independent:
    preparation: MixedErlang | None = None


@dataclass(frozen=True)
class Linear:
    c: float


@dataclass(frozen=True)
class CompoundPoisson:
    gamma: float
    jump: MixedErlang | None = None


@dataclass(frozen=True)
class Brownian:
    drift: float
    variance: float


@dataclass(frozen=True, eq=False)
class JointLstModel:
    service_rate: float
    chi: RationalFunction
    psi: RationalFunction
    kind: object = None

    def __post_init__(self):
        lam = self.service_rate
        if not np.isfinite(lam) or lam <= 0:
            raise ModelValidationError(f"service rate must be positive, got {lam!r}")
        if abs(self.chi(0.0) - 1.0) > 1e-12:
            raise ModelValidationError(f"chi(0) must equal 1, got {self.chi(0.0)!r}")
        if abs(self.psi(0.0)) > 1e-12:
            raise ModelValidationError(f"psi(0) must equal 0, got {self.psi(0.0)!r}")
        q1 = self.chi.denominator
        if q1.degree >= 1:
            roots = find_roots(q1)
            if any(r.real >= 0 for r, _ in roots):
                raise ModelValidationError("zeros of the chi denominator must have negative real part")
        if not self.chi.is_proper:
            raise ModelValidationError("chi must be a proper rational function")

    @property
    def degrees(self) -> dict:
        """``L = deg P2``, ``N = deg Q2``, ``d1 = deg Q1``."""
        return {
            "L": max(self.psi.numerator.degree, 0),
            "N": self.psi.denominator.degree,
            "d1": self.chi.denominator.degree,
        }

    @property
    def degree_bound(self) -> int:
        d = self.degrees
        return max(d["d1"] + d["N"] + 1, d["d1"] + d["L"])


def make_independent(preparation, service_rate: float) -> JointLstModel:
    """Preparation independent of service; ``preparation`` is a :class:`MixedErlang` or an LST."""
    if isinstance(preparation, MixedErlang):
        chi, law = preparation.lst(), preparation
    elif isinstance(preparation, RationalFunction):
        chi, law = preparation, None
    else:
        raise ModelValidationError("preparation must be a MixedErlang law or a RationalFunction")
    return JointLstModel(service_rate, chi, RationalFunction.constant(0.0), Independent(law))


def make_linear(c: float, service_rate: float) -> JointLstModel:
    """``B = c A``."""
    if not np.isfinite(c) or c <= 0:
        raise ModelValidationError(f"linear coefficient must be positive, got {c!r}")
    return JointLstModel(service_rate, RationalFunction.constant(1.0), RationalFunction([0.0, c]), Linear(float(c)))


def make_compound_poisson(gamma: float, jump, service_rate: float) -> JointLstModel:
    """``B`` = sum of jumps of a rate-``gamma`` compound Poisson process over ``[0, A]``."""
    if not np.isfinite(gamma) or gamma <= 0:
        raise ModelValidationError(f"Poisson rate must be positive, got {gamma!r}")
    if isinstance(jump, MixedErlang):
        jump_lst, law = jump.lst(), jump
    elif isinstance(jump, RationalFunction):
        jump_lst, law = jump, None
    else:
        raise ModelValidationError("jump must be a MixedErlang law or a RationalFunction")
    if abs(jump_lst(0.0) - 1.0) > 1e-12:
        raise ModelValidationError(f"jump LST must equal 1 at 0, got {jump_lst(0.0)!r}")
    num = gamma * (jump_lst.denominator - jump_lst.numerator)
    c = num.coefficients.copy()
    if c.size and abs(c[0]) <= 1e-12 * np.max(np.abs(c)):
        c[0] = 0.0
    psi = RationalFunction(Polynomial(c), jump_lst.denominator)
    return JointLstModel(service_rate, RationalFunction.constant(1.0), psi, CompoundPoisson(float(gamma), law))


def make_brownian(drift: float, variance: float, service_rate: float) -> JointLstModel:
    """``B`` given ``A = t`` is normal with mean ``drift t`` and variance ``variance t``."""
    if not np.isfinite(drift) or not np.isfinite(variance) or variance < 0:
        raise ModelValidationError("Brownian preparation needs finite drift and nonnegative variance")
    psi = RationalFunction([0.0, drift, -variance / 2.0])
    return JointLstModel(service_rate, RationalFunction.constant(1.0), psi, Brownian(float(drift), float(variance)))


# --------------------------------------------------------------------------
# transform quantities


def joint_transform(model: JointLstModel, s: complex, z: complex) -> complex:
    """``E[exp(-s B - z A)] = lam chi(s) / (lam + psi(s) + z)``."""
    lam = model.service_rate
    denom = lam + model.psi(s) + z
    if np.real(denom) <= 0:
        raise DomainError(f"transform undefined: Re(lam + psi(s) + z) = {np.real(denom)!r} <= 0")
    return lam * model.chi(s) / denom


def preparation_mean(model: JointLstModel) -> float:
    lam = model.service_rate
    return float(rational_derivative(model.psi)(0.0) / lam - rational_derivative(model.chi)(0.0))


def covariance(model: JointLstModel) -> float:
    """``cov[A, B] = psi'(0) / lam**2``."""
    return float(rational_derivative(model.psi)(0.0) / model.service_rate**2)


def denominator(model: JointLstModel) -> Polynomial:
    """``D(s) = Q1(s) ((lam - s) Q2(s) + P2(s))``; warns if its degree falls below the bound."""
    lam = model.service_rate
    q1, p2, q2 = model.chi.denominator, model.psi.numerator, model.psi.denominator
    d = q1 * (Polynomial([lam, -1.0]) * q2 + p2)
    k = model.degree_bound
    if d.degree < k:
        warnings.warn(
            f"denominator degree {d.degree} is below the generic bound K={k}",
            DegenerateDegreeWarning,
            stacklevel=2,
        )
    return d


# --------------------------------------------------------------------------
# solution


@dataclass(frozen=True, eq=False)
class JointWaitingSolution:
    """``P[W = 0] = atom``; density ``sum coef x**(order-1) exp(root x) / (order-1)!``.

    Equivalently ``E[exp(-s W)] = atom + sum coef / (s - root)**order``.
    """

    model: JointLstModel
    atom: float
    terms: tuple  # of (root, order, coefficient)
    degree: int
    D: Polynomial
    condition_number: float = float("nan")

    @property
    def active_terms(self) -> tuple:
        """Terms with a nonzero coefficient; zero entries mark unused roots."""
        return tuple(t for t in self.terms if t[2] != 0)

    def transform(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.full(s.shape, complex(self.atom))
        for r, k, c in self.active_terms:
            out = out + c / (s - r) ** k
        return out if out.ndim else complex(out)

    def density(self, x, *, complex_out: bool = False):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for r, k, c in self.active_terms:
            out = out + c * x ** (k - 1) * np.exp(r * x) / factorial(k - 1)
        if complex_out:
            return out
        return out.real

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("cdf needs nonnegative arguments")
        out = np.full(x.shape, complex(self.atom))
        for r, k, c in self.active_terms:
            n = k - 1
            # int_0^x t^n e^{rt} dt / n! = (-r)^-(n+1) (1 - e^{rx} sum_j (-r x)^j / j!)
            partial = sum((-r * x) ** j / factorial(j) for j in range(n + 1))
            out = out + c * (-r) ** (-(n + 1)) * (1.0 - np.exp(r * x) * partial)
        return out.real

    @property
    def total_mass(self) -> float:
        return float((self.atom + sum(c * (-r) ** (-k) for r, k, c in self.active_terms)).real)

    @property
    def mean(self) -> float:
        return mean_waiting_time(self)


def mean_waiting_time(solution: JointWaitingSolution) -> float:
    """``E[W] = sum coef * order / (-root)**(order + 1)``."""
    total = 0j
    for r, k, c in solution.terms:
        if c == 0:
            continue
        if r.real >= 0:
            raise DomainError("retained root with nonnegative real part")
        total += c * k / (-r) ** (k + 1)
    if abs(total.imag) > 1e-9 * max(1.0, abs(total.real)):
        raise NumericalFailure("mean waiting time has a non-negligible imaginary part", value=total)
    return float(total.real)


def _is_left(r: complex, scale: float) -> bool:
    return r.real < -1e-12 * max(1.0, scale)


def solve_waiting_time(model: JointLstModel, tol: float = 1e-8) -> JointWaitingSolution:
    """Steady-state waiting-time law for the joint-transform model."""
    if model.kind is not None and not isinstance(model.kind, (Independent, Linear, CompoundPoisson, Brownian)):
        raise CapabilityError(f"unsupported dependence kind {model.kind!r}")
    lam = model.service_rate
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDegreeWarning)
        d = denominator(model)
    k_bound = model.degree_bound
    if d.degree >= 0 and abs(d(0.0)) <= 1e-12 * d.scale():
        raise ModelValidationError("D(0) = 0: the model sits on a boundary that is not supported")
    if d.degree <= 0:
        return _verify(JointWaitingSolution(model, 1.0, (), k_bound, d, 1.0))

    roots = find_roots(d, tol)
    rscale = max(abs(r) for r, _ in roots)
    if any(abs(r.real) <= 1e-12 * max(1.0, rscale) for r, _ in roots):
        raise ModelValidationError("D has a root on the imaginary axis; not supported")
    left = [(r, m) for r, m in roots if _is_left(r, rscale)]

    numer = (lam * model.chi.numerator * model.psi.denominator).coefficients
    if numer.size > d.degree:
        # lam P1 Q2 / D has a constant part: an atom of B - A at zero, which
        # never feeds the left-half-plane poles
        const = numer[-1] / d.leading
        numer = (Polynomial(numer) - const * d).coefficients
    rho = {(r, k): c for r, k, c in principal_parts(numer, d.leading, roots.roots, which=lambda z: _is_left(z, rscale))}

    unknowns = [("atom", 0)] + [(r, k) for r, m in left for k in range(1, m + 1)]
    index = {u: n for n, u in enumerate(unknowns)}
    size = len(unknowns)
    a = np.zeros((size, size), dtype=complex)
    b = np.zeros(size, dtype=complex)

    # normalisation omega(0) = 1
    a[0, 0] = 1.0
    for r, m in left:
        for k in range(1, m + 1):
            a[0, index[(r, k)]] = (-r) ** (-k)
    b[0] = 1.0

    # c_{r,k} = sum_j rho_{r,k+j} * [t^j] omega(-r - t)
    for r, m in left:
        for k in range(1, m + 1):
            row = index[(r, k)]
            a[row, row] += 1.0
            for j in range(m - k + 1):
                rj = rho.get((r, k + j), 0.0)
                if rj == 0:
                    continue
                if j == 0:
                    a[row, 0] -= rj
                for r2, m2 in left:
                    for k2 in range(1, m2 + 1):
                        a[row, index[(r2, k2)]] -= rj * comb(k2 + j - 1, j) * (-r - r2) ** (-(k2 + j))
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular coefficient system", condition=float("inf")) from exc
    cond = float(np.linalg.cond(a))
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("coefficient system produced non-finite values", condition=cond)

    coef = {u: x[n] for u, n in index.items()}
    # exact conjugate symmetry
    for r, k in list(coef):
        if r == "atom" or r.imag <= 0:
            continue
        partner = (np.conj(r), k)
        if partner in coef:
            avg = 0.5 * (coef[(r, k)] + np.conj(coef[partner]))
            coef[(r, k)], coef[partner] = avg, np.conj(avg)
    atom = coef.pop(("atom", 0))
    if abs(atom.imag) > 1e-9:
        raise SolutionRejected("atom has a non-negligible imaginary part", atom=atom)

    terms = []
    for r, m in roots:
        for k in range(1, m + 1):
            terms.append((complex(r), k, complex(coef.get((r, k), 0.0))))
    sol = JointWaitingSolution(model, float(atom.real), tuple(terms), k_bound, d, cond)
    return _verify(sol)


def _verify(sol: JointWaitingSolution) -> JointWaitingSolution:
    mass = sol.total_mass
    if abs(mass - 1.0) > 1e-9:
        raise SolutionRejected(f"total mass {mass!r} differs from 1")
    if not -1e-9 <= sol.atom <= 1 + 1e-9:
        raise SolutionRejected(f"atom {sol.atom!r} outside [0, 1]")
    for r, k, c in sol.terms:
        if r.real >= 0 and abs(c) >= 1e-9:
            raise SolutionRejected("nonzero coefficient on a root with nonnegative real part", root=r)
    if not sol.terms:
        return sol
    slowest = min(-r.real for r, _, c in sol.terms if c != 0 and r.real < 0) if any(c != 0 for _, _, c in sol.terms) else 1.0
    grid = np.linspace(0.0, 10.0 / slowest, 200)
    dens = sol.density(grid, complex_out=True)
    if np.max(np.abs(dens.imag)) > 1e-9:
        raise SolutionRejected("density has a non-negligible imaginary part", max_imag=float(np.max(np.abs(dens.imag))))
    if dens.real.min() < -1e-9:
        raise SolutionRejected("negative density", minimum=float(dens.real.min()))
    return sol


def _omega_polys(sol: JointWaitingSolution):
    """Numerator coefficients and poles of ``omega`` written as one fraction."""
    poles = {}
    for r, k, c in sol.terms:
        if c != 0:
            poles[r] = max(poles.get(r, 0), k)
    den_roots = [r for r, m in poles.items() for _ in range(m)]
    num = sol.atom * npoly.polyfromroots(den_roots) if den_roots else np.array([sol.atom], dtype=complex)
    num = np.asarray(num, dtype=complex)
    for r, k, c in sol.terms:
        if c == 0:
            continue
        others = [q for q, m in poles.items() if q != r for _ in range(m)] + [r] * (poles[r] - k)
        piece = c * (npoly.polyfromroots(others) if others else np.ones(1))
        num = npoly.polyadd(num, piece)
    return num, poles


def functional_equation_residual(sol: JointWaitingSolution, probes) -> float:
    """Largest relative residual of ``omega D = lam omega(-s) P1 Q2 + D H``.

    ``H(s) = c0 - [g]_+(s)`` is rebuilt from a full partial-fraction split of
    ``g(s) = omega(-s) lam P1 Q2 / D`` taken over its right-half-plane poles.
    """
    model = sol.model
    lam = model.service_rate
    probes = np.asarray(probes, dtype=complex)
    d = sol.D
    p1q2 = model.chi.numerator * model.psi.denominator
    if d.degree <= 0:
        # no poles at all: g is carried entirely by V <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            g_plus = lam * p1q2(probes) / d(probes) * sol.transform(-probes)
    else:
        num_w, poles_w = _omega_polys(sol)
        # omega(-s): numerator reflected, poles at -r, leading (-1)^deg
        num_reflect = num_w * (-1.0) ** np.arange(num_w.size)
        deg_w = sum(poles_w.values())
        g_num = npoly.polymul(num_reflect, lam * p1q2.coefficients)
        g_poles = [(-r, m) for r, m in poles_w.items()]
        for r, m in find_roots(d):
            for n, (q, mq) in enumerate(g_poles):
                if abs(q - r) <= 1e-9 * max(1.0, abs(r)):
                    g_poles[n] = (q, mq + m)
                    break
            else:
                g_poles.append((r, m))
        lead = (-1.0) ** deg_w * d.leading
        total_deg = sum(m for _, m in g_poles)
        const = 0.0
        if g_num.size > total_deg:
            const = g_num[-1] / lead
            g_num = npoly.polysub(g_num, const * lead * npoly.polyfromroots([q for q, m in g_poles for _ in range(m)]))
            g_num = g_num[:total_deg]
        parts = principal_parts(g_num, lead, g_poles, which=lambda z: z.real > 0)
        near = np.zeros(probes.shape, dtype=bool)
        for q, _ in g_poles:
            near |= np.abs(probes - q) <= 1e-6 * max(1.0, abs(q))
        probes = np.where(near, np.nan, probes)
        g_plus = np.full(probes.shape, const, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            for q, k, c in parts:
                g_plus = g_plus + c / (probes - q) ** k
    with np.errstate(divide="ignore", invalid="ignore"):
        h = sol.atom - g_plus
        w = sol.transform(probes)
        w_reflect = sol.transform(-probes)
        lhs = w * d(probes)
        rhs1 = lam * w_reflect * p1q2(probes)
        rhs2 = d(probes) * h
        scale = np.abs(lhs) + np.abs(rhs1) + np.abs(rhs2)
        err = np.abs(lhs - rhs1 - rhs2) / np.maximum(scale, 1e-300)
    # probes on (or next to) a pole carry no information
    err = err[np.isfinite(err)]
    if err.size == 0:
        raise DomainError("every probe lies on a singularity of the equation")
    return float(err.max())
