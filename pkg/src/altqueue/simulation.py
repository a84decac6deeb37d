"""Monte Carlo oracle for ``W_{n+1} = max(0, B_{n+1} - A_n - W_n)``.

Inputs are drawn in vectorised blocks from per-replication
:class:`numpy.random.Generator` streams spawned from one root seed; the
sequential parts (the background chain and the recursion) run in compiled
loops.  Standard errors come from batch means.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CapabilityError, ModelValidationError
from .joint import Brownian, CompoundPoisson, Independent, JointLstModel, Linear
from .markov import MarkovModulatedModel, stationary_distribution


@dataclass(frozen=True)
class SimulationConfig:
    """``iterations`` counts every step, including the ``warmup`` steps discarded."""

    iterations: int = 1_000_000
    warmup: int = 10_000
    seed: int = 0
    replications: int = 1
    histogram_bins: int = 10
    histogram_max: float = 10.0
    batches: int = 32
    workers: int = 1

    def __post_init__(self):
        if self.iterations <= 0 or self.warmup < 0 or self.warmup >= self.iterations:
            raise ModelValidationError("need 0 <= warmup < iterations")
        if self.replications < 1:
            raise ModelValidationError("need at least one replication")
        if self.histogram_bins < 1 or not self.histogram_max > 0:
            raise ModelValidationError("histogram needs positive bin count and range")
        if self.batches < 20:
            raise ModelValidationError("batch means needs at least 20 batches")
        if not 0 <= self.seed < 2**64:
            raise ModelValidationError("seed must be a 64-bit unsigned integer")
        if (self.iterations - self.warmup) < self.batches:
            raise ModelValidationError("fewer samples than batches")


@dataclass(frozen=True)
class PerStateEstimate:
    """``means[j]`` estimates ``E[W; Z = j]`` and ``atoms[j]`` estimates ``P[W = 0, Z = j]``."""

    means: np.ndarray
    mean_stderr: np.ndarray
    atoms: np.ndarray
    atom_stderr: np.ndarray


@dataclass(frozen=True)
class SimulationEstimate:
    mean_wait: float
    standard_error: float
    atom_estimate: float
    atom_stderr: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    overflow: int
    zero_count: int
    samples_used: int
    seed_used: int
    per_state: PerStateEstimate | None = None

    def density_histogram(self) -> np.ndarray:
        """Histogram normalised to a (defective) density over the bins."""
        return self.histogram / (self.samples_used * np.diff(self.bin_edges))


@dataclass(frozen=True)
class CorrelationEstimate:
    autocorr_service: float
    autocorr_service_stderr: float
    autocorr_preparation: float
    autocorr_preparation_stderr: float
    crosscorr: float
    crosscorr_stderr: float
    samples_used: int
    seed_used: int


# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _chain(cum, z0, u):
    n = u.shape[0]
    z = np.empty(n + 1, dtype=np.int64)
    z[0] = z0
    m = cum.shape[1]
    for t in range(n):
        row = cum[z[t]]
        k = 0
        while k < m - 1 and u[t] >= row[k]:
            k += 1
        z[t + 1] = k
    return z


@njit(cache=True, nogil=True)
def _recursion(x):
    """``w[n] = max(0, x[n] - w[n-1])`` from ``w[-1] = 0``; zero exactly when the operand is <= 0."""
    n = x.shape[0]
    w = np.empty(n)
    prev = 0.0
    for t in range(n):
        v = x[t] - prev
        if v <= 0.0:
            prev = 0.0
        else:
            prev = v
        w[t] = prev
    return w


# --------------------------------------------------------------------------
# helpers


def _streams(config: SimulationConfig):
    ss = np.random.SeedSequence(config.seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(config.replications)]


def _batch_size(samples: int, batches: int, period: int = 1) -> int:
    size = samples // batches
    if period > 1 and size >= period:
        size -= size % period
    return size


def _batch_means(values: np.ndarray, batches: int, size: int) -> np.ndarray:
    v = values[: batches * size]
    return v.reshape((batches, size) + v.shape[1:]).mean(axis=1)


def _merge(parts):
    """Fold replication outputs in index order."""
    batch = {key: np.concatenate([p[key] for p in parts]) for key in parts[0] if key.startswith("bm_")}
    hist = np.sum([p["hist"] for p in parts], axis=0)
    return batch, hist, sum(p["overflow"] for p in parts), sum(p["zeros"] for p in parts), sum(p["n"] for p in parts)


def _summary(bm: np.ndarray):
    """Mean and standard error of the batch means (along axis 0)."""
    nb = bm.shape[0]
    return bm.mean(axis=0), bm.std(axis=0, ddof=1) / np.sqrt(nb)


def _collect(w, z, config, n_states, period=1):
    w = w[config.warmup:]
    n = w.size
    size = _batch_size(n, config.batches, period)
    used = size * config.batches
    w = w[:used]
    zero = w == 0.0
    edges = np.linspace(0.0, config.histogram_max, config.histogram_bins + 1)
    pos = w[~zero]
    hist = np.histogram(pos[pos <= config.histogram_max], bins=edges)[0]
    # values exactly on the upper edge are counted in the last bin by np.histogram
    out = {
        "bm_w": _batch_means(w, config.batches, size),
        "bm_zero": _batch_means(zero.astype(float), config.batches, size),
        "hist": hist,
        "overflow": int(np.count_nonzero(pos > config.histogram_max)),
        "zeros": int(np.count_nonzero(zero)),
        "n": used,
        "edges": edges,
    }
    if z is not None:
        z = z[config.warmup:][:used]
        onehot = z[:, None] == np.arange(n_states)[None, :]
        out["bm_sw"] = _batch_means(w[:, None] * onehot, config.batches, size)
        out["bm_szero"] = _batch_means((zero[:, None] & onehot).astype(float), config.batches, size)
    return out


def _estimate(parts, config, per_state=False):
    batch, hist, overflow, zeros, n = _merge(parts)
    mean, se = _summary(batch["bm_w"])
    atom, atom_se = _summary(batch["bm_zero"])
    states = None
    if per_state:
        sm, sse = _summary(batch["bm_sw"])
        sa, sase = _summary(batch["bm_szero"])
        states = PerStateEstimate(sm, sse, sa, sase)
    return SimulationEstimate(
        mean_wait=float(mean),
        standard_error=float(se),
        atom_estimate=float(atom),
        atom_stderr=float(atom_se),
        histogram=hist,
        bin_edges=parts[0]["edges"],
        overflow=overflow,
        zero_count=zeros,
        samples_used=n,
        seed_used=config.seed,
        per_state=states,
    )


def _run(fn, streams, workers):
    if workers > 1 and len(streams) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, streams))
    return [fn(rng) for rng in streams]


# --------------------------------------------------------------------------
# Markov-modulated model


def _check_samplable_markov(model: MarkovModulatedModel):
    for j, spec in enumerate(model.service):
        if spec.sampler is None:
            raise CapabilityError(f"service law of state {j + 1} has no sampler (mixed-Erlang family only)")


def _markov_inputs(model, rng, length):
    """State path ``z[0..length]`` started from the stationary law, ``A[n]`` by ``z[n]`` and ``B[n]`` by ``z[n]``."""
    pi = stationary_distribution(model.transition)
    cum = np.cumsum(model.P, axis=1)
    z0 = int(rng.choice(model.states, p=pi))
    z = _chain(cum, z0, rng.random(length))
    a = np.empty(length + 1)
    b = np.empty(length + 1)
    for j in range(model.states):
        idx = np.flatnonzero(z == j)
        a[idx] = model.service[j].sampler.sample(rng, idx.size)
        b[idx] = model.preparation[j].sample(rng, idx.size)
    return z, a, b


def simulate_markov(model: MarkovModulatedModel, config: SimulationConfig = SimulationConfig()) -> SimulationEstimate:
    """Simulate the recursion with ``A_n ~ F_{A|Z_n}`` and ``B_{n+1} ~ F_{B|Z_{n+1}}``."""
    _check_samplable_markov(model)
    period = model.transition.period

    def one(rng):
        z, a, b = _markov_inputs(model, rng, config.iterations)
        # w[n] pairs with z[n+1]: W_{n+1} = max(0, B_{n+1} - A_n - W_n)
        w = _recursion(b[1:] - a[:-1])
        return _collect(w, z[1:], config, model.states, period)

    return _estimate(_run(one, _streams(config), config.workers), config, per_state=True)


def empirical_correlations(model: MarkovModulatedModel, lag: int, config: SimulationConfig = SimulationConfig()) -> CorrelationEstimate:
    """Sample-path estimates of the lag-``lag`` autocorrelations and the cross-correlation."""
    if lag < 1:
        raise ModelValidationError("lag must be a positive integer")
    _check_samplable_markov(model)
    period = model.transition.period

    def corr(x, y, size):
        xb = x[: config.batches * size].reshape(config.batches, size)
        yb = y[: config.batches * size].reshape(config.batches, size)
        xc = xb - xb.mean(axis=1, keepdims=True)
        yc = yb - yb.mean(axis=1, keepdims=True)
        return (xc * yc).sum(axis=1) / np.sqrt((xc**2).sum(axis=1) * (yc**2).sum(axis=1))

    def one(rng):
        _, a, b = _markov_inputs(model, rng, config.iterations)
        a, b = a[config.warmup:], b[config.warmup:]
        n = a.size - lag
        size = _batch_size(n, config.batches, period)
        return {
            "bm_aa": corr(a[:-lag], a[lag:], size),
            "bm_bb": corr(b[:-lag], b[lag:], size),
            "bm_ab": corr(a, b, size),
            "n": size * config.batches,
        }

    parts = _run(one, _streams(config), config.workers)
    res = {}
    for key in ("bm_aa", "bm_bb", "bm_ab"):
        res[key] = _summary(np.concatenate([p[key] for p in parts]))
    return CorrelationEstimate(
        autocorr_service=float(res["bm_aa"][0]),
        autocorr_service_stderr=float(res["bm_aa"][1]),
        autocorr_preparation=float(res["bm_bb"][0]),
        autocorr_preparation_stderr=float(res["bm_bb"][1]),
        crosscorr=float(res["bm_ab"][0]),
        crosscorr_stderr=float(res["bm_ab"][1]),
        samples_used=sum(p["n"] for p in parts),
        seed_used=config.seed,
    )


# --------------------------------------------------------------------------
# joint-transform model


def _joint_preparation(model: JointLstModel, rng, a: np.ndarray) -> np.ndarray:
    kind = model.kind
    if isinstance(kind, Independent):
        if kind.preparation is None:
            raise CapabilityError("independent preparation law has no sampler (mixed-Erlang family only)")
        return kind.preparation.sample(rng, a.size)
    if isinstance(kind, Linear):
        return kind.c * a
    if isinstance(kind, CompoundPoisson):
        if kind.jump is None:
            raise CapabilityError("compound Poisson jump law has no sampler (mixed-Erlang family only)")
        return kind.jump.sample_sum(rng, rng.poisson(kind.gamma * a))
    if isinstance(kind, Brownian):
        return kind.drift * a + np.sqrt(kind.variance * a) * rng.standard_normal(a.size)
    raise CapabilityError(f"cannot sample dependence kind {kind!r}")


def simulate_joint(model: JointLstModel, config: SimulationConfig = SimulationConfig()) -> SimulationEstimate:
    """Simulate with ``A_n ~ Exp(lam)`` and ``B_{n+1}`` drawn given ``A_n``."""
    if not isinstance(model.kind, (Independent, Linear, CompoundPoisson, Brownian)):
        raise CapabilityError(f"cannot sample dependence kind {model.kind!r}")

    def one(rng):
        a = rng.exponential(1.0 / model.service_rate, config.iterations)
        b = _joint_preparation(model, rng, a)
        w = _recursion(b - a)
        return _collect(w, None, config, 0)

    return _estimate(_run(one, _streams(config), config.workers), config)
