"""Mixed-Erlang distributions: transforms, moments and vectorised sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import ModelValidationError
from .transforms import Polynomial, RationalFunction


@dataclass(frozen=True)
class MixedErlang:
    """Mixture of Erlang distributions sharing one rate.

    With probability ``weights[n-1]`` the variable is Erlang with ``n`` phases
    of rate ``rate``.  ``MixedErlang(mu, (1.0,))`` is the exponential law.
    """

    rate: float
    weights: tuple = (1.0,)
    _w: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.isfinite(self.rate) or self.rate <= 0:
            raise ModelValidationError(f"rate must be positive, got {self.rate}")
        if w.ndim != 1 or w.size < 1:
            raise ModelValidationError("need at least one mixture weight")
        if np.any(w < 0) or np.any(w > 1):
            raise ModelValidationError(f"weights must lie in [0, 1], got {w.tolist()}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ModelValidationError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "_w", w)

    @classmethod
    def exponential(cls, rate: float) -> "MixedErlang":
        return cls(rate, (1.0,))

    @property
    def phases(self) -> int:
        return len(self.weights)

    @property
    def mean(self) -> float:
        n = np.arange(1, self.phases + 1)
        return float(np.dot(self._w, n) / self.rate)

    @property
    def second_moment(self) -> float:
        n = np.arange(1, self.phases + 1)
        return float(np.dot(self._w, n * (n + 1)) / self.rate**2)

    def lst(self) -> RationalFunction:
        """``sum_n w_n (mu / (mu + s))**n`` over the common denominator ``(mu + s)**N``."""
        mu, big_n = self.rate, self.phases
        num = Polynomial()
        base = Polynomial([mu, 1.0])
        for n, w in enumerate(self.weights, start=1):
            if w:
                num = num + w * mu**n * base ** (big_n - n)
        return RationalFunction(num, base**big_n)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        mu = self.rate
        out = np.zeros_like(x)
        for n, w in enumerate(self.weights, start=1):
            if w:
                out += w * mu**n * x ** (n - 1) * np.exp(-mu * x) / factorial(n - 1)
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.phases == 1:
            return rng.exponential(1.0 / self.rate, size)
        shape = rng.choice(self.phases, size=size, p=self._w) + 1
        return rng.gamma(shape, 1.0 / self.rate)

    def sample_sum(self, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
        """Sums of ``counts[k]`` independent copies (zero when the count is zero)."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.phases == 1:
            total = counts
        else:
            draws = rng.multinomial(counts, self._w)
            total = draws @ np.arange(1, self.phases + 1)
        out = np.zeros(counts.shape, dtype=float)
        pos = total > 0
        out[pos] = rng.gamma(total[pos], 1.0 / self.rate)
        return out
