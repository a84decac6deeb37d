import csv
import io
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from corpus import random_transition, random_weights
from hypothesis import given, settings
from hypothesis import strategies as st

from altqueue import SimulationConfig, stationary_distribution
from altqueue.cli import main
from altqueue.scenario import (
    CORRELATION_HEADER,
    CSV_HEADER,
    JointSpec,
    MarkovSpec,
    Scenario,
    ScenarioError,
    Sweep,
    format_scenario,
    parse_scenario,
    run_scenario,
    to_csv,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

EX1 = """\
id = ex1
model = markov
row = 0 1 0 0
row = 0 0 1 0
row = 0 0 0 1
row = 1 0 0 0
service.1.rate = 1
service.2.rate = 100
service.3.rate = 1
service.4.rate = 100
prep.1.rate = 0.5
prep.2.rate = 10
prep.3.rate = 0.5
prep.4.rate = 10
sweep.param = u
sweep.values = {values}
"""

LINEAR = """\
id = lin
model = joint
kind = linear
service_rate = 1
c = 2
sweep.param = c
sweep.values = 1.5 2 2.5
"""


def run_cli(tmp_path, text, *args):
    path = tmp_path / "s.scn"
    path.write_text(text)
    out = tmp_path / "out.csv"
    code = main([args[0], "--scenario", str(path), "--out", str(out), *args[1:]])
    return code, (out.read_text() if out.exists() else None)


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- parsing ---------------------------------------------------------------


def test_example_one_parses():
    values = " ".join(f"{x:g}" for x in np.linspace(0.1, 2, 20))
    sc = parse_scenario(EX1.format(values=values))
    assert sc.kind == "markov" and len(sc.sweep.values) == 20
    np.testing.assert_allclose(stationary_distribution(np.array(sc.model.rows)), [0.25] * 4, atol=1e-15)


def test_linear_sweep_parses():
    sc = parse_scenario(LINEAR)
    assert sc.model == JointSpec("linear", 1.0, c=2.0)
    assert sc.sweep == Sweep("c", (1.5, 2.0, 2.5))


def test_row_sum_error_names_the_row():
    text = EX1.format(values="1").replace("row = 0 0 1 0", "row = 0 0 0.9 0")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    (line, msg), = info.value.errors
    assert line == 4 and "row 2" in msg and "0.9" in msg


@pytest.mark.parametrize(
    "edit, line, fragment",
    [
        (("service.2.rate = 100", "service.2.rate = -100"), 8, "positive"),
        (("prep.1.rate = 0.5", "prep.1.rte = 0.5"), 11, "unknown key"),
        (("sweep.values = 1", "sweep.values = 1 0.5"), 16, "increasing"),
        (("sweep.values = 1", "sweep.values = 0 1"), 16, "positive"),
        (("sweep.param = u", "sweep.param = c"), 15, "sweep"),
        (("model = markov", "model = mystery"), 2, "model"),
    ],
)
def test_errors_are_line_anchored(edit, line, fragment):
    text = EX1.format(values="1").replace(*edit)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert any(ln == line and fragment in msg for ln, msg in info.value.errors), info.value.errors


def test_all_errors_reported_together():
    text = EX1.format(values="1").replace("service.2.rate = 100", "service.2.rate = x").replace("prep.1.rate = 0.5", "bogus = 1")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert {ln for ln, _ in info.value.errors} >= {8, 11}


def test_comments_and_blank_lines_ignored():
    text = "# heading\n\n" + LINEAR.replace("c = 2\n", "c = 2   # coefficient\n")
    assert parse_scenario(text).model.c == 2.0


def test_shipped_scenarios_parse():
    files = sorted(SCENARIOS.glob("*.scn"))
    assert len(files) >= 6
    for f in files:
        parse_scenario(f.read_text())


# --- round trip ------------------------------------------------------------


positive = st.floats(0.01, 100.0, allow_nan=False)


@st.composite
def scenarios(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    sim = SimulationConfig(
        iterations=draw(st.integers(1000, 10**6)),
        warmup=draw(st.integers(0, 900)),
        seed=draw(st.integers(0, 2**64 - 1)),
        replications=draw(st.integers(1, 4)),
        histogram_bins=draw(st.integers(1, 30)),
        histogram_max=draw(positive),
    )
    values = tuple(sorted(set(draw(st.lists(positive, min_size=1, max_size=5)))))
    if draw(st.booleans()):
        m = int(rng.integers(1, 5))
        p = random_transition(rng, m)
        # rows as written must sum to one exactly after parsing
        p[:, -1] = 1.0 - p[:, :-1].sum(axis=1)
        p = np.clip(p, 0.0, 1.0)
        laws = lambda: tuple((draw(positive), random_weights(rng, int(rng.integers(1, 4)))) for _ in range(m))
        model = MarkovSpec(tuple(tuple(float(x) for x in row) for row in p), laws(), laws())
        sweep = Sweep("u", values) if draw(st.booleans()) else None
    else:
        kind = draw(st.sampled_from(["independent", "linear", "compound_poisson", "brownian"]))
        lam = draw(positive)
        law = (draw(positive), random_weights(rng, int(rng.integers(1, 4))))
        model = {
            "independent": JointSpec(kind, lam, preparation=law),
            "linear": JointSpec(kind, lam, c=draw(positive)),
            "compound_poisson": JointSpec(kind, lam, gamma=draw(positive), jump=law),
            "brownian": JointSpec(kind, lam, drift=draw(st.floats(-5, 5)), variance=draw(positive)),
        }[kind]
        param = {"linear": "c", "compound_poisson": "gamma"}.get(kind)
        sweep = Sweep(param, values) if param and draw(st.booleans()) else None
    return Scenario(
        id=draw(st.from_regex(r"[a-z][a-z0-9_]{0,10}", fullmatch=True)),
        model=model,
        run=draw(st.sampled_from(["analytic", "simulate", "both"])),
        sweep=sweep,
        sim=sim,
        output=draw(st.one_of(st.none(), st.just("out/result.csv"))),
    )


@settings(max_examples=200)
@given(scenarios())
def test_format_parse_round_trip(sc):
    try:
        again = parse_scenario(format_scenario(sc))
    except ScenarioError as exc:
        # the only generator-side rejection: rows that round to a bad sum
        assert all("sums to" in msg for _, msg in exc.errors)
        return
    assert again == sc
    assert format_scenario(again) == format_scenario(sc)


# --- running scenarios -----------------------------------------------------


def test_linear_sweep_values():
    rows = run_scenario(parse_scenario(LINEAR))
    assert [float(r[5]) for r in rows] == pytest.approx([1 / 3, 2 / 3, 1.0], abs=1e-11)
    assert all(r[6] == r[7] == r[8] == "" for r in rows)


def test_both_mode_agrees_with_simulation():
    text = LINEAR + "run = both\nsim.iterations = 400000\nsim.seed = 3\n"
    for row in table(to_csv(run_scenario(parse_scenario(text)))):
        assert abs(float(row["mean_wait_analytic"]) - float(row["mean_wait_sim"])) <= 3 * float(row["sim_stderr"])


def test_solve_joint_command(tmp_path):
    code, out = run_cli(tmp_path, LINEAR.replace("sweep.param = c\nsweep.values = 1.5 2 2.5\n", "").replace("c = 2", "c = 2.5"), "solve-joint")
    assert code == 0
    assert out.splitlines()[0] == ",".join(CSV_HEADER)
    (row,) = table(out)
    assert float(row["atom"]) == pytest.approx(1 / 3, abs=1e-11)
    assert float(row["mean_wait_analytic"]) == pytest.approx(1.0, abs=1e-11)
    assert row["state"] == "" and row["sweep_param"] == ""


def test_solve_markov_rows_per_state(tmp_path):
    code, out = run_cli(tmp_path, EX1.format(values="1 2"), "solve-markov")
    assert code == 0
    rows = table(out)
    assert [r["state"] for r in rows] == ["", "1", "2", "3", "4"] * 2
    agg, states = rows[0], rows[1:5]
    assert float(agg["atom"]) == pytest.approx(sum(float(r["atom"]) for r in states), abs=1e-10)
    assert float(agg["mean_wait_analytic"]) == pytest.approx(sum(float(r["mean_wait_analytic"]) for r in states), abs=1e-10)


def test_correlations_command(tmp_path):
    code, out = run_cli(tmp_path, EX1.format(values="0.1 1 10"), "correlations", "--lag", "1")
    assert code == 0
    assert out.splitlines()[0] == ",".join(CORRELATION_HEADER)
    for row in table(out):
        assert float(row["autocorr_service"]) == pytest.approx(-9801 / 29803, abs=1e-11)
        assert float(row["autocorr_preparation"]) == pytest.approx(-361 / 1163, abs=1e-11)
        assert float(row["crosscorrelation"]) == pytest.approx(0.3195, abs=5e-4)


def test_bipartite_crosscorrelation_is_zero():
    text = (SCENARIOS / "ex3_bipartite.scn").read_text()
    rows = table(main_capture(["correlations", "--scenario", str(SCENARIOS / "ex3_bipartite.scn")]))
    assert rows and all(r["crosscorrelation"] == "0" for r in rows)
    assert parse_scenario(text).sweep.param == "u"


def main_capture(argv):
    proc = subprocess.run([sys.executable, "-m", "altqueue", *argv], capture_output=True, text=True, check=True)
    return proc.stdout


@pytest.mark.parametrize(
    "text, command, code, fragment",
    [
        (EX1.format(values="1").replace("row = 1 0 0 0", "row = 1 0 0 0.5"), "solve-markov", 2, "line 6"),
        (LINEAR, "solve-markov", 2, "needs a markov"),
        (EX1.format(values="1").replace("row = 0 1 0 0", "row = 1 0 0 0"), "solve-markov", 2, "reducible"),
        (
            "id = s\nmodel = markov\nrow = 1\nservice.1.rate = 1\nprep.1.rate = 1\n",
            "correlations",
            2,
            "undefined",
        ),
    ],
)
def test_validation_exit_codes(tmp_path, capsys, text, command, code, fragment):
    got, out = run_cli(tmp_path, text, command)
    assert got == code and out is None
    assert fragment in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["sweep", "--scenario", str(tmp_path / "nope.scn")]) == 2
    assert "error" in capsys.readouterr().err


def test_unsupported_sampler_exits_2(tmp_path, capsys, monkeypatch):
    import altqueue.scenario as scenario_module
    from altqueue.errors import CapabilityError

    def refuse(*_):
        raise CapabilityError("no sampler for this law")

    monkeypatch.setattr(scenario_module, "simulate_joint", refuse)
    code, _ = run_cli(tmp_path, LINEAR, "simulate")
    assert code == 2 and "capability" in capsys.readouterr().err


def test_numerical_failure_exits_3(tmp_path, capsys, monkeypatch):
    import altqueue.joint as joint_module
    from altqueue.errors import NumericalFailure

    def fail(*_, **__):
        raise NumericalFailure("singular coefficient system", condition=float("inf"))

    monkeypatch.setattr(joint_module, "solve_waiting_time", fail)
    code, _ = run_cli(tmp_path, LINEAR, "solve-joint")
    err = capsys.readouterr().err
    assert code == 3 and "c=1.5" in err


def test_seed_override_and_byte_determinism(tmp_path):
    text = LINEAR + "run = simulate\nsim.iterations = 20000\nsim.seed = 1\n"
    _, a = run_cli(tmp_path, text, "sweep")
    _, b = run_cli(tmp_path, text, "sweep")
    _, c = run_cli(tmp_path, text, "sweep", "--seed", "2")
    assert a == b and a != c
    assert {r["seed"] for r in table(c)} == {"2"}
    assert all(r["mean_wait_analytic"] == "" for r in table(a))


def test_stdout_when_no_out(tmp_path, capsys):
    path = tmp_path / "s.scn"
    path.write_text(LINEAR)
    assert main(["solve-joint", "--scenario", str(path)]) == 0
    assert capsys.readouterr().out.startswith(",".join(CSV_HEADER))
