"""Declarative scenario files and the CSV experiment runner.

A scenario is a line-oriented ``key = value`` file::

    id = ex1
    model = markov
    row = 0 1 0 0
    row = 0 0 1 0
    row = 0 0 0 1
    row = 1 0 0 0
    service.1.rate = 1
    prep.1.rate = 0.5
    prep.1.weights = 0.5 0.5
    ...
    sweep.param = u
    sweep.values = 0.5 1 2
    run = both
    sim.iterations = 1000000
    sim.seed = 7

Joint-transform models use ``model = joint`` with ``kind`` one of
``independent``, ``linear``, ``compound_poisson`` or ``brownian`` and the
keys ``service_rate``, ``c``, ``gamma``, ``jump.rate``/``jump.weights``,
``prep.rate``/``prep.weights``, ``drift`` and ``variance`` as applicable.
``#`` starts a comment.  Sweeps scale every preparation rate (``u``, Markov
models) or replace the linear coefficient (``c``) or the Poisson rate
(``gamma``).
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import joint, markov
from .distributions import MixedErlang
from .errors import AltQueueError, ModelValidationError
from .simulation import SimulationConfig, simulate_joint, simulate_markov

CSV_HEADER = (
    "scenario_id",
    "sweep_param",
    "sweep_value",
    "state",
    "atom",
    "mean_wait_analytic",
    "mean_wait_sim",
    "sim_stderr",
    "samples",
    "seed",
)
CORRELATION_HEADER = (
    "scenario_id",
    "sweep_param",
    "sweep_value",
    "lag",
    "autocorr_service",
    "autocorr_preparation",
    "crosscorrelation",
)
RUN_MODES = ("analytic", "simulate", "both")
JOINT_KINDS = ("independent", "linear", "compound_poisson", "brownian")
SWEEP_PARAMS = {"u": "markov", "c": "linear", "gamma": "compound_poisson"}


class ScenarioError(ModelValidationError):
    """Validation failure carrying ``(line, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


@dataclass(frozen=True)
class MarkovSpec:
    rows: tuple
    service: tuple  # of (rate, weights)
    preparation: tuple  # of (rate, weights)

    def build(self, u: float = 1.0) -> markov.MarkovModulatedModel:
        return markov.MarkovModulatedModel(
            markov.TransitionMatrix(np.array(self.rows, dtype=float)),
            [markov.StateServiceSpec.mixed_erlang(r, w) for r, w in self.service],
            [MixedErlang(r * u, w) for r, w in self.preparation],
        )


@dataclass(frozen=True)
class JointSpec:
    kind: str
    service_rate: float
    c: float | None = None
    gamma: float | None = None
    jump: tuple | None = None
    preparation: tuple | None = None
    drift: float | None = None
    variance: float | None = None

    def build(self, param: str | None = None, value: float | None = None) -> joint.JointLstModel:
        spec = self
        if param == "c":
            spec = replace(spec, c=value)
        elif param == "gamma":
            spec = replace(spec, gamma=value)
        lam = spec.service_rate
        if spec.kind == "linear":
            return joint.make_linear(spec.c, lam)
        if spec.kind == "independent":
            return joint.make_independent(MixedErlang(*spec.preparation), lam)
        if spec.kind == "compound_poisson":
            return joint.make_compound_poisson(spec.gamma, MixedErlang(*spec.jump), lam)
        return joint.make_brownian(spec.drift, spec.variance, lam)


@dataclass(frozen=True)
class Sweep:
    param: str
    values: tuple


@dataclass(frozen=True)
class Scenario:
    id: str
    model: MarkovSpec | JointSpec
    run: str = "analytic"
    sweep: Sweep | None = None
    sim: SimulationConfig = field(default_factory=SimulationConfig)
    output: str | None = None

    @property
    def kind(self) -> str:
        return "markov" if isinstance(self.model, MarkovSpec) else "joint"

    def points(self):
        """``(param, value)`` per sweep point, or a single ``(None, None)``."""
        if self.sweep is None:
            return [(None, None)]
        return [(self.sweep.param, v) for v in self.sweep.values]

    def build(self, param=None, value=None):
        if isinstance(self.model, MarkovSpec):
            return self.model.build(value if param == "u" else 1.0)
        return self.model.build(param, value)


# --------------------------------------------------------------------------
# parsing

_KEY = re.compile(r"^[A-Za-z_][\w.]*$")
_SIM_KEYS = {
    "sim.iterations": ("iterations", int),
    "sim.warmup": ("warmup", int),
    "sim.seed": ("seed", int),
    "sim.replications": ("replications", int),
    "sim.bins": ("histogram_bins", int),
    "sim.hist_max": ("histogram_max", float),
}
_JOINT_SCALARS = ("service_rate", "c", "gamma", "drift", "variance")


def _numbers(text, conv=float):
    return tuple(conv(x) for x in text.split())


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario; raises :class:`ScenarioError` listing every problem."""
    errors = []
    entries = {}
    rows = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'key = value', got {raw.strip()!r}"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY.match(key):
            errors.append((ln, f"malformed key {key!r}"))
            continue
        if key == "row":
            rows.append((ln, value))
        elif key in entries:
            errors.append((ln, f"duplicate key {key!r} (first on line {entries[key][0]})"))
        else:
            entries[key] = (ln, value)

    used = set()

    def take(key, conv=str, required=False, default=None):
        if key not in entries:
            if required:
                errors.append((0, f"missing required key {key!r}"))
            return default
        used.add(key)
        ln, value = entries[key]
        try:
            return conv(value)
        except (TypeError, ValueError):
            errors.append((ln, f"cannot parse {key} = {value!r}"))
            return default

    def line_of(key):
        return entries[key][0] if key in entries else 0

    sid = take("id", required=True, default="")
    kind = take("model", required=True, default="")
    run = take("run", default="analytic")
    if run not in RUN_MODES:
        errors.append((line_of("run"), f"run must be one of {', '.join(RUN_MODES)}, got {run!r}"))
    output = take("output")

    sim_kwargs = {}
    for key, (name, conv) in _SIM_KEYS.items():
        value = take(key, conv)
        if value is not None:
            sim_kwargs[name] = value
    sim = SimulationConfig()
    try:
        sim = SimulationConfig(**sim_kwargs)
    except ModelValidationError as exc:
        errors.append((min((line_of(k) for k in _SIM_KEYS if k in entries), default=0), str(exc)))

    model = None
    if kind == "markov":
        model = _parse_markov(rows, entries, take, line_of, errors)
    elif kind == "joint":
        if rows:
            errors.append((rows[0][0], "'row' entries only apply to markov models"))
        model = _parse_joint(entries, take, line_of, errors)
    elif kind:
        errors.append((line_of("model"), f"model must be 'markov' or 'joint', got {kind!r}"))

    sweep = None
    param = take("sweep.param")
    values = take("sweep.values", _numbers)
    if (param is None) != (values is None):
        errors.append((line_of("sweep.param") or line_of("sweep.values"), "sweep needs both sweep.param and sweep.values"))
    elif param is not None:
        ln = line_of("sweep.param")
        target = SWEEP_PARAMS.get(param)
        if target is None:
            errors.append((ln, f"unknown sweep parameter {param!r}"))
        elif model is not None:
            applies = (target == "markov" and isinstance(model, MarkovSpec)) or (
                isinstance(model, JointSpec) and model.kind == target
            )
            if not applies:
                errors.append((ln, f"sweep parameter {param!r} does not apply to this model"))
        vln = line_of("sweep.values")
        if not values:
            errors.append((vln, "sweep.values is empty"))
        elif any(v <= 0 for v in values):
            errors.append((vln, "sweep values must be strictly positive"))
        elif any(b <= a for a, b in zip(values, values[1:])):
            errors.append((vln, "sweep values must be strictly increasing"))
        sweep = Sweep(param, tuple(values))

    for key, (ln, _) in entries.items():
        if key not in used:
            errors.append((ln, f"unknown key {key!r}"))

    if not errors and model is not None:
        scenario = Scenario(sid, model, run, sweep, sim, output)
        try:
            scenario.build(*scenario.points()[0])
        except ModelValidationError as exc:
            errors.append((rows[0][0] if rows else 0, str(exc)))
    if errors:
        raise ScenarioError(sorted(errors, key=lambda e: e[0]))
    return scenario


def _parse_weights(take, key, line_of, errors):
    w = take(key, _numbers, default=(1.0,))
    if w is not None and (any(x < 0 or x > 1 for x in w) or abs(sum(w) - 1.0) > 1e-12):
        errors.append((line_of(key), f"{key} must be weights in [0, 1] summing to 1"))
    return w


def _parse_rate(take, key, line_of, errors, required=True):
    r = take(key, float, required=required)
    if r is not None and not r > 0:
        errors.append((line_of(key), f"{key} must be a positive rate, got {r!r}"))
    return r


def _parse_markov(rows, entries, take, line_of, errors):
    matrix = []
    for n, (ln, value) in enumerate(rows, start=1):
        try:
            probs = _numbers(value)
        except ValueError:
            errors.append((ln, f"row {n} is not a list of numbers"))
            continue
        if any(p < 0 or p > 1 for p in probs):
            errors.append((ln, f"row {n} has entries outside [0, 1]"))
        if abs(sum(probs) - 1.0) > 1e-12:
            errors.append((ln, f"row {n} sums to {sum(probs):.12g}, not 1"))
        matrix.append(probs)
    if not matrix:
        errors.append((0, "markov model needs 'row' entries"))
        return None
    m = len(matrix)
    for n, probs in enumerate(matrix, start=1):
        if len(probs) != m:
            errors.append((rows[n - 1][0], f"row {n} has {len(probs)} entries, expected {m}"))
    service, prep = [], []
    for j in range(1, m + 1):
        service.append((_parse_rate(take, f"service.{j}.rate", line_of, errors), _parse_weights(take, f"service.{j}.weights", line_of, errors)))
        prep.append((_parse_rate(take, f"prep.{j}.rate", line_of, errors), _parse_weights(take, f"prep.{j}.weights", line_of, errors)))
    return MarkovSpec(tuple(matrix), tuple(service), tuple(prep))


def _parse_joint(entries, take, line_of, errors):
    kind = take("kind", required=True, default="")
    if kind not in JOINT_KINDS:
        if kind:
            errors.append((line_of("kind"), f"kind must be one of {', '.join(JOINT_KINDS)}, got {kind!r}"))
        return None
    lam = _parse_rate(take, "service_rate", line_of, errors)
    spec = dict(kind=kind, service_rate=lam)
    if kind == "linear":
        spec["c"] = _parse_rate(take, "c", line_of, errors)
    elif kind == "independent":
        spec["preparation"] = (_parse_rate(take, "prep.rate", line_of, errors), _parse_weights(take, "prep.weights", line_of, errors))
    elif kind == "compound_poisson":
        spec["gamma"] = _parse_rate(take, "gamma", line_of, errors)
        spec["jump"] = (_parse_rate(take, "jump.rate", line_of, errors), _parse_weights(take, "jump.weights", line_of, errors))
    else:
        spec["drift"] = take("drift", float, required=True)
        spec["variance"] = take("variance", float, required=True)
        if spec["variance"] is not None and spec["variance"] < 0:
            errors.append((line_of("variance"), "variance must be nonnegative"))
    return JointSpec(**spec)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def format_scenario(scenario: Scenario) -> str:
    """Inverse of :func:`parse_scenario` (floats written with ``repr``)."""
    out = [f"id = {scenario.id}", f"model = {scenario.kind}"]
    m = scenario.model
    if isinstance(m, MarkovSpec):
        out += ["row = " + " ".join(_fmt(p) for p in row) for row in m.rows]
        for j, ((sr, sw), (pr, pw)) in enumerate(zip(m.service, m.preparation), start=1):
            out += [
                f"service.{j}.rate = {_fmt(sr)}",
                f"service.{j}.weights = " + " ".join(_fmt(w) for w in sw),
                f"prep.{j}.rate = {_fmt(pr)}",
                f"prep.{j}.weights = " + " ".join(_fmt(w) for w in pw),
            ]
    else:
        out += [f"kind = {m.kind}", f"service_rate = {_fmt(m.service_rate)}"]
        for key in ("c", "gamma", "drift", "variance"):
            value = getattr(m, key)
            if value is not None:
                out.append(f"{key} = {_fmt(value)}")
        for prefix, law in (("prep", m.preparation), ("jump", m.jump)):
            if law is not None:
                out += [f"{prefix}.rate = {_fmt(law[0])}", f"{prefix}.weights = " + " ".join(_fmt(w) for w in law[1])]
    if scenario.sweep is not None:
        out += [f"sweep.param = {scenario.sweep.param}", "sweep.values = " + " ".join(_fmt(v) for v in scenario.sweep.values)]
    out.append(f"run = {scenario.run}")
    for key, (name, _) in _SIM_KEYS.items():
        out.append(f"{key} = {_fmt(getattr(scenario.sim, name))}")
    if scenario.output is not None:
        out.append(f"output = {scenario.output}")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# running


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _annotate(exc: AltQueueError, param, value):
    where = f"{param}={value:.12g}: " if param else ""
    new = type(exc).__new__(type(exc))
    new.__dict__.update(exc.__dict__)
    new.args = (where + str(exc),)
    return new


def run_scenario(scenario: Scenario, mode: str | None = None) -> list:
    """Rows (lists of strings in :data:`CSV_HEADER` order), one block per sweep point."""
    mode = mode or scenario.run
    rows = []
    for param, value in scenario.points():
        try:
            rows.extend(_run_point(scenario, mode, param, value))
        except AltQueueError as exc:
            raise _annotate(exc, param, value) from exc
    return rows


def _run_point(scenario, mode, param, value):
    model = scenario.build(param, value)
    analytic = mode in ("analytic", "both")
    simulated = mode in ("simulate", "both")
    head = [scenario.id, param or "", _num(value)]
    sim = scenario.sim
    if isinstance(model, markov.MarkovModulatedModel):
        sol = markov.solve(model) if analytic else None
        est = simulate_markov(model, sim) if simulated else None
        rows = [
            head
            + [
                "",
                _num(sol.atom if sol else est.atom_estimate),
                _num(sol.mean if sol else None),
                _num(est.mean_wait if est else None),
                _num(est.standard_error if est else None),
                _num(est.samples_used if est else None),
                _num(est.seed_used if est else None),
            ]
        ]
        per_state = markov.mean_waiting_time(sol)[1] if sol else None
        for j in range(model.states):
            rows.append(
                head
                + [
                    str(j + 1),
                    _num(sol.atoms[j] if sol else est.per_state.atoms[j]),
                    _num(per_state[j] if sol else None),
                    _num(est.per_state.means[j] if est else None),
                    _num(est.per_state.mean_stderr[j] if est else None),
                    _num(est.samples_used if est else None),
                    _num(est.seed_used if est else None),
                ]
            )
        return rows
    sol = joint.solve_waiting_time(model) if analytic else None
    est = simulate_joint(model, sim) if simulated else None
    return [
        head
        + [
            "",
            _num(sol.atom if sol else est.atom_estimate),
            _num(sol.mean if sol else None),
            _num(est.mean_wait if est else None),
            _num(est.standard_error if est else None),
            _num(est.samples_used if est else None),
            _num(est.seed_used if est else None),
        ]
    ]


def correlation_rows(scenario: Scenario, lag: int = 1) -> list:
    """Closed-form correlations per sweep point (Markov scenarios only)."""
    if scenario.kind != "markov":
        raise ModelValidationError("correlations are defined for markov scenarios only")
    rows = []
    for param, value in scenario.points():
        model = scenario.build(param, value)
        try:
            vals = (
                markov.autocorrelation_service(model, lag),
                markov.autocorrelation_preparation(model, lag),
                markov.crosscorrelation(model),
            )
        except AltQueueError as exc:
            raise _annotate(exc, param, value) from exc
        rows.append([scenario.id, param or "", _num(value), str(lag)] + [_num(v) for v in vals])
    return rows


def to_csv(rows, header=CSV_HEADER) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()
