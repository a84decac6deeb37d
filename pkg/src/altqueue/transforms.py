"""Polynomial and rational-function calculus used by the transform solvers.

Polynomials are stored with ascending coefficients.  All algebra here is
carried out on coefficient arrays; the only numerical (non-exact) steps are
root finding and the probe-point checks in :func:`partial_fractions`.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DecompositionError, DomainError, RootFindingError

__all__ = [
    "Polynomial",
    "RationalFunction",
    "RootSet",
    "PartialFractionExpansion",
    "poly_arith",
    "poly_derivative",
    "rational_derivative",
    "find_roots",
    "partial_fractions",
]


def _as_coefficients(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values))
    if arr.ndim != 1:
        raise ValueError("polynomial coefficients must be one-dimensional")
    if np.iscomplexobj(arr):
        arr = arr.astype(complex)
        if not np.any(arr.imag):
            arr = arr.real.copy()
    else:
        arr = arr.astype(float)
    nz = np.flatnonzero(arr)
    arr = arr[: nz[-1] + 1] if nz.size else arr[:0]
    arr.flags.writeable = False
    return arr


class Polynomial:
    """Immutable polynomial ``c[0] + c[1] s + ... + c[n] s**n``.

    The zero polynomial has no coefficients and degree -1.
    """

    __slots__ = ("_c",)

    def __init__(self, coefficients: Sequence[float] | np.ndarray | float = ()):
        if isinstance(coefficients, Polynomial):
            coefficients = coefficients._c
        object.__setattr__(self, "_c", _as_coefficients(coefficients))

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    @classmethod
    def from_roots(cls, roots, leading: float = 1.0) -> "Polynomial":
        roots = list(roots)
        if not roots:
            return cls([leading])
        c = npoly.polyfromroots(roots) * leading
        # conjugate-closed roots give real coefficients up to round-off
        values = np.asarray(roots, dtype=complex)
        if np.isrealobj(leading) and np.allclose(np.sort_complex(values), np.sort_complex(values.conj()), rtol=1e-12, atol=0):
            c = np.real(c)
        return cls(c)

    @property
    def coefficients(self) -> np.ndarray:
        return self._c

    @property
    def degree(self) -> int:
        return self._c.size - 1

    @property
    def leading(self):
        if self.is_zero:
            return 0.0
        return self._c[-1]

    @property
    def is_zero(self) -> bool:
        return self._c.size == 0

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self._c)

    def __call__(self, s):
        if self.is_zero:
            return np.zeros_like(np.asarray(s, dtype=float)) if np.ndim(s) else 0.0
        return npoly.polyval(s, self._c)

    def derivative(self, order: int = 1) -> "Polynomial":
        return poly_derivative(self, order)

    def roots(self, tol: float = 1e-8) -> "RootSet":
        return find_roots(self, tol)

    def scale(self) -> float:
        return float(np.max(np.abs(self._c))) if self._c.size else 0.0

    def reflect(self) -> "Polynomial":
        """Return ``p(-s)``."""
        signs = (-1.0) ** np.arange(self._c.size)
        return Polynomial(self._c * signs)

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            return other
        if np.isscalar(other):
            return Polynomial([other])
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return poly_arith(self, other, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return poly_arith(self, other, "sub")

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return poly_arith(other, self, "sub")

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return poly_arith(self, other, "mul")

    __rmul__ = __mul__

    def __neg__(self):
        return Polynomial(-self._c)

    def __pow__(self, n: int):
        out = Polynomial([1.0])
        for _ in range(int(n)):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._c.shape == other._c.shape and bool(np.all(self._c == other._c))

    def __hash__(self):
        return hash(tuple(self._c.tolist()))

    def __repr__(self):
        return f"Polynomial({self._c.tolist()})"


def poly_arith(a: Polynomial, b: Polynomial, kind: str) -> Polynomial:
    """Add, subtract or multiply two polynomials (``kind`` in add/sub/mul)."""
    ac, bc = a.coefficients, b.coefficients
    if kind == "mul":
        if ac.size == 0 or bc.size == 0:
            return Polynomial()
        return Polynomial(npoly.polymul(ac, bc))
    n = max(ac.size, bc.size)
    dtype = np.result_type(ac, bc, float)
    out = np.zeros(n, dtype=dtype)
    out[: ac.size] += ac
    if kind == "add":
        out[: bc.size] += bc
    elif kind == "sub":
        out[: bc.size] -= bc
    else:
        raise ValueError(f"unknown polynomial operation {kind!r}")
    return Polynomial(out)


def poly_derivative(p: Polynomial, order: int = 1) -> Polynomial:
    if order < 0:
        raise DomainError("derivative order must be nonnegative")
    c = p.coefficients
    if order == 0:
        return p
    if order > p.degree:
        return Polynomial()
    return Polynomial(npoly.polyder(c, order))


class RationalFunction:
    """Ratio of two polynomials kept with a monic denominator."""

    __slots__ = ("_num", "_den")

    def __init__(self, numerator, denominator=1.0):
        num = numerator if isinstance(numerator, Polynomial) else Polynomial(numerator)
        den = denominator if isinstance(denominator, Polynomial) else Polynomial(denominator)
        if den.is_zero:
            raise DomainError("denominator is identically zero")
        lead = den.leading
        object.__setattr__(self, "_num", Polynomial(num.coefficients / lead))
        object.__setattr__(self, "_den", Polynomial(den.coefficients / lead))

    def __setattr__(self, name, value):
        raise AttributeError("RationalFunction is immutable")

    @classmethod
    def constant(cls, value: float) -> "RationalFunction":
        return cls(Polynomial([value]), Polynomial([1.0]))

    @property
    def numerator(self) -> Polynomial:
        return self._num

    @property
    def denominator(self) -> Polynomial:
        return self._den

    @property
    def is_proper(self) -> bool:
        return self._num.degree <= self._den.degree

    def __call__(self, s):
        return self._num(s) / self._den(s)

    def derivative(self, order: int = 1) -> "RationalFunction":
        return rational_derivative(self, order)

    def _coerce(self, other):
        if isinstance(other, RationalFunction):
            return other
        if isinstance(other, Polynomial):
            return RationalFunction(other, Polynomial([1.0]))
        if np.isscalar(other):
            return RationalFunction.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self._den == other._den:
            return RationalFunction(self._num + other._num, self._den)
        return RationalFunction(
            self._num * other._den + other._num * self._den, self._den * other._den
        )

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self._num, self._den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return RationalFunction(self._num * other._num, self._den * other._den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other._num.is_zero:
            raise ZeroDivisionError("division by the zero rational function")
        return RationalFunction(self._num * other._den, self._den * other._num)

    def __pow__(self, n: int):
        return RationalFunction(self._num ** n, self._den ** n)

    def __eq__(self, other):
        if not isinstance(other, RationalFunction):
            return NotImplemented
        return self._num == other._num and self._den == other._den

    def __hash__(self):
        return hash((self._num, self._den))

    def __repr__(self):
        return f"RationalFunction({self._num.coefficients.tolist()} / {self._den.coefficients.tolist()})"


def rational_derivative(f: RationalFunction, order: int = 1) -> RationalFunction:
    """Exact derivative of ``f`` of the given order.

    Uses ``f^(k) = N_k / D^(k+1)`` with ``N_{k+1} = N_k' D - (k+1) N_k D'``, which
    keeps the degrees linear in ``k``.
    """
    if order < 0:
        raise DomainError("derivative order must be nonnegative")
    if order == 0:
        return f
    n, d = f.numerator, f.denominator
    dd = d.derivative()
    for k in range(order):
        n = n.derivative() * d - (k + 1) * n * dd
    return RationalFunction(n, d ** (order + 1))


# --------------------------------------------------------------------------
# roots


@dataclass(frozen=True)
class RootSet:
    """Distinct roots with multiplicities."""

    roots: tuple  # of (complex, int)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.roots)

    def __len__(self) -> int:
        return len(self.roots)

    @property
    def degree(self) -> int:
        return sum(m for _, m in self.roots)

    @property
    def values(self) -> np.ndarray:
        """Roots repeated according to multiplicity."""
        return np.array([r for r, m in self.roots for _ in range(m)], dtype=complex)

    def multiplicity(self, value: complex, tol: float = 1e-9) -> int:
        for r, m in self.roots:
            if abs(r - value) <= tol * max(1.0, abs(value)):
                return m
        return 0


def _backward_scale(c: np.ndarray, z: complex) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(np.abs(c) * np.abs(z) ** np.arange(c.size)))


def _backward_residual(c: np.ndarray, z: complex) -> float:
    """``|p(z)| / sum |a_i| |z|**i``: scale-aware, used for multiplicity decisions."""
    if c.size == 0:
        return 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        value = abs(npoly.polyval(z, c))
        scale = _backward_scale(c, z)
    if not (np.isfinite(value) and np.isfinite(scale)):
        return np.inf
    return value / scale if scale > 0 else 0.0


def _relative_residual(c: np.ndarray, z: complex) -> float:
    """Residual of ``z`` as a root, in the better of two normalisations.

    The backward error suits large roots; ``|p(z)| / max |a_i|`` suits roots
    lost below the absolute accuracy of the eigenvalue solver.
    """
    if c.size == 0:
        return 0.0
    back = _backward_residual(c, z)
    top = float(np.max(np.abs(c)))
    if top == 0.0 or not np.isfinite(back):
        return back
    return min(back, abs(npoly.polyval(z, c)) / top)


def _newton(c: np.ndarray, z: complex, steps: int = 8) -> complex:
    """Polish ``z``; steps are bounded so the iteration cannot hop to another root."""
    dc = npoly.polyder(c) if c.size > 1 else np.zeros(1)
    reach = 0.1 * max(1.0, abs(z))
    start = z
    best, best_res = z, _backward_residual(c, z)
    for _ in range(steps):
        d = npoly.polyval(z, dc)
        if d == 0 or best_res <= np.finfo(float).eps:
            break
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            z = z - npoly.polyval(z, c) / d
        if not np.isfinite(z) or abs(z - start) > reach:
            break
        res = _backward_residual(c, z)
        if res < best_res:
            best, best_res = z, res
    return best


def _is_multiple(c: np.ndarray, z: complex, m: int, tol: float) -> bool:
    d = c
    for _ in range(m):
        if _backward_residual(d, z) > tol:
            return False
        d = npoly.polyder(d) if d.size > 1 else np.zeros(0)
    return True


def find_roots(p: Polynomial, tol: float = 1e-8, *, cluster_tol: float = 1e-10) -> RootSet:
    """Roots of ``p`` with multiplicities.

    Companion-matrix eigenvalues are Newton-polished, then nearby roots are
    agglomerated into a multiple root whenever the derivatives up to the
    cluster size vanish (relative to the backward-error scale) at the cluster
    centroid.  For real coefficients conjugate pairs are made exact.

    Raises :class:`RootFindingError` if a returned root has a relative residual
    above ``tol``.
    """
    if p.degree < 1:
        raise DomainError("find_roots needs a polynomial of degree >= 1")
    c = p.coefficients
    raw = np.roots(c[::-1]).astype(complex)
    if raw.size != p.degree:
        raise RootFindingError("eigenvalue solver lost roots", found=raw.size, degree=p.degree)

    # clusters: list of [centroid, members]; merge the closest admissible pair
    # until no pair within reach passes the multiplicity test
    clusters = [[_newton(c, z), [z]] for z in raw]
    merged = True
    while merged and len(clusters) > 1:
        merged = False
        pairs = sorted(
            (abs(clusters[a][0] - clusters[b][0]), a, b)
            for a in range(len(clusters))
            for b in range(a + 1, len(clusters))
        )
        for dist, a, b in pairs:
            members = clusters[a][1] + clusters[b][1]
            centroid = complex(np.mean(members))
            if dist > 1e-2 * max(1.0, abs(centroid)):
                break
            if _is_multiple(c, centroid, len(members), cluster_tol):
                clusters = [cl for k, cl in enumerate(clusters) if k not in (a, b)]
                clusters.append([centroid, members])
                merged = True
                break

    roots = []
    for centroid, members in clusters:
        m = len(members)
        z = centroid
        if m > 1:
            dm = npoly.polyder(c, m - 1)
            polished = _newton(dm, z)
            if _is_multiple(c, polished, m, cluster_tol):
                z = polished
        spread = max(abs(w - centroid) for w in members)
        roots.append([z, m, spread])

    if p.is_real:
        roots = _pair_conjugates(roots, c, cluster_tol)
    else:
        roots = [[z, m] for z, m, _ in roots]

    for z, m in roots:
        res = _relative_residual(c, z)
        if not np.isfinite(res) or res > tol:
            raise RootFindingError(
                "root residual above tolerance",
                residuals=[(complex(r), _relative_residual(c, r)) for r, _ in roots],
                tol=tol,
            )
    roots.sort(key=lambda rm: (round(rm[0].real, 12), rm[0].imag))
    return RootSet(tuple((complex(z), int(m)) for z, m in roots))


def _pair_conjugates(roots: list, c: np.ndarray, cluster_tol: float) -> list:
    out = []
    pending = []
    for z, m, spread in roots:
        # a multiple root is only located to about eps**(1/m); its members
        # straddle the real axis when the root is real
        near = m > 1 and abs(z.imag) <= max(spread, 1e-12 * abs(z))
        near = near or (m > 1 and abs(z.imag) <= 1e-3 * max(1.0, abs(z)) and _is_multiple(c, complex(z.real), m, cluster_tol))
        if abs(z.imag) <= 1e-12 * abs(z) or near:
            out.append([complex(z.real, 0.0), m])
        else:
            pending.append([z, m])
    upper = [rm for rm in pending if rm[0].imag > 0]
    lower = [rm for rm in pending if rm[0].imag < 0]
    if len(upper) != len(lower):
        raise RootFindingError("complex roots are not closed under conjugation", roots=roots)
    for z, m in upper:
        k = min(range(len(lower)), key=lambda i: abs(lower[i][0] - np.conj(z)))
        w, mw = lower.pop(k)
        if mw != m or abs(w - np.conj(z)) > 1e-6 * max(1.0, abs(z)):
            raise RootFindingError("complex roots are not closed under conjugation", roots=roots)
        zz = 0.5 * (z + np.conj(w))
        out.append([zz, m])
        out.append([np.conj(zz), m])
    return out


# --------------------------------------------------------------------------
# partial fractions


@dataclass(frozen=True)
class PartialFractionExpansion:
    """``constant_term + sum(coef / (s - pole)**order)`` over ``terms``."""

    constant_term: complex
    terms: tuple  # of (pole, order, coefficient)

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        out = np.full(s.shape, self.constant_term, dtype=complex)
        for pole, order, coef in self.terms:
            out = out + coef / (s - pole) ** order
        return out if out.ndim else complex(out)


def _taylor(c: np.ndarray, z: complex, n: int) -> np.ndarray:
    """First ``n`` Taylor coefficients ``p^(j)(z)/j!`` by repeated synthetic division."""
    out = np.zeros(n, dtype=complex)
    cur = np.asarray(c, dtype=complex)
    for j in range(n):
        if cur.size == 0:
            break
        # Horner: cur(s) = q(s) (s - z) + rem
        q = np.zeros(max(cur.size - 1, 0), dtype=complex)
        acc = 0j
        for k in range(cur.size - 1, -1, -1):
            acc = acc * z + cur[k]
            if k > 0:
                q[k - 1] = acc
        out[j] = acc
        cur = q
    return out


def _inverse_factor_series(d: complex, m: int, n: int) -> np.ndarray:
    """Taylor coefficients in ``t`` of ``(t + d)**(-m)``."""
    k = np.arange(n)
    coef = np.array([(-1) ** j * comb(m + j - 1, j) for j in k], dtype=float)
    return coef * d ** (-(m + k))


def principal_parts(numerator: np.ndarray, leading: complex, poles, *, which=None) -> list:
    """Laurent principal parts of ``N(s) / (leading * prod (s - p)**m)``.

    ``poles`` is an iterable of ``(pole, multiplicity)`` covering the full
    denominator.  Returns ``(pole, order, coefficient)`` triples for the poles
    selected by ``which`` (a predicate on the pole value; default all).
    """
    poles = [(complex(p), int(m)) for p, m in poles]
    num = np.asarray(numerator, dtype=complex)
    terms = []
    for idx, (r, m) in enumerate(poles):
        if which is not None and not which(r):
            continue
        series = np.zeros(m, dtype=complex)
        series[0] = 1.0 / leading
        for jdx, (p, mp) in enumerate(poles):
            if jdx == idx:
                continue
            series = np.convolve(series, _inverse_factor_series(r - p, mp, m))[:m]
        ratio = np.convolve(_taylor(num, r, m), series)[:m]
        for j in range(m):
            terms.append((r, m - j, complex(ratio[j])))
    return terms


def partial_fractions(f: RationalFunction, poles: RootSet | None = None, *, rtol: float = 1e-9) -> PartialFractionExpansion:
    """Partial-fraction expansion of a proper rational function.

    ``poles`` must be the roots of the denominator (computed if omitted).  The
    recombined expansion is compared with ``f`` at 16 pseudo-random probe
    points; a relative mismatch above ``rtol`` raises
    :class:`DecompositionError`.
    """
    num, den = f.numerator, f.denominator
    if num.degree > den.degree:
        raise DomainError("partial_fractions needs deg(numerator) <= deg(denominator)")
    if den.degree == 0:
        return PartialFractionExpansion(complex(f(0.0)), ())
    if poles is None:
        poles = find_roots(den)
    if poles.degree != den.degree:
        raise DomainError("pole multiplicities do not match the denominator degree")

    const = 0.0
    nc = num.coefficients
    if num.degree == den.degree:
        const = num.leading / den.leading
        nc = (num - const * den).coefficients
    terms = [t for t in principal_parts(nc, den.leading, poles.roots) if t[2] != 0]
    pfe = PartialFractionExpansion(complex(const), tuple(terms))

    radius = 1.0 + 2.0 * max(abs(r) for r, _ in poles.roots)
    rng = np.random.default_rng(20070911)
    probes = radius * (0.5 + rng.random(16)) * np.exp(2j * np.pi * rng.random(16))
    exact = f(probes)
    approx = pfe(probes)
    # scale by the term magnitudes so cancellation between terms is not penalised
    scale = np.abs(exact) + abs(const)
    for pole, order, coef in terms:
        scale = scale + np.abs(coef / (probes - pole) ** order)
    err = np.abs(exact - approx) / np.maximum(scale, 1e-300)
    if np.max(err) > rtol:
        raise DecompositionError(
            "partial fraction recombination mismatch", max_relative_error=float(np.max(err))
        )
    return pfe
