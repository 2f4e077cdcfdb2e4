import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porous_pinn import cli
from porous_pinn.errors import ConfigurationError
from porous_pinn.experiment import (
    COLLOCATION_COLUMNS,
    COST_COLUMNS,
    ErrorReport,
    RunManifest,
    compare_runs,
    expected_files,
    export_oracle,
    front_times,
    load_manifest,
    manifest_text,
    parse_manifest,
    read_csv,
    run_experiment,
    write_csv,
)
from porous_pinn.physics import ProblemConfig

TINY = """
[run]
mode = {mode}
seed = 1

[adam]
iterations = 20

[adaptivity]
iterations_per_step = 4
max_steps = 3
points_per_step = 5
bc_points_per_step = 1
dense_resolution = 15, 12

[schedule]
fixed_grid = 6, 6
adaptive_grid = 5, 5
qn_max_iter = 12
hidden_layers = 5, 5
n_test = 40
n_test_boundary = 6
"""


def test_default_manifest_is_the_reference_problem():
    m = parse_manifest("")
    p = m.problem
    assert (p.l, p.T, p.k, p.mu2, p.mu1, p.p_in, p.p_out) == (1, 0.5, 1, 1, 1e-5, 1, 0)
    assert m.adam.learning_rate == 1e-3 and m.adam.iterations == 5000
    assert m.schedule.fixed_grid == (50, 50) and m.schedule.adaptive_grid == (40, 40)


def test_omitted_beta1_defaults():
    assert parse_manifest("[adam]\nlearning_rate = 0.01\n").adam.beta1 == 0.9


@pytest.mark.parametrize("text,key", [
    ("[problem]\nmu1 = -1\n", "mu1"),
    ("[problem]\nk = abc\n", "k"),
    ("[adam]\nmomentum = 0.5\n", "momentum"),
    ("[solver]\nx = 1\n", "solver"),
    ("[run]\nmode = hybrid\n", "mode"),
])
def test_manifest_errors_name_the_key(text, key):
    with pytest.raises(ConfigurationError) as exc:
        parse_manifest(text)
    assert exc.value.key == key


def test_missing_manifest_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_manifest(tmp_path / "nope.ini")


def test_manifest_text_roundtrip(tmp_path):
    m = parse_manifest(TINY.format(mode="adaptive"), out=str(tmp_path))
    again = parse_manifest(manifest_text(m))
    assert again == m


def test_overrides_take_precedence():
    m = parse_manifest(TINY.format(mode="adaptive"), mode="fixed", seed=7, out="x")
    assert (m.mode, m.seed, str(m.out_dir)) == ("fixed", 7, "x")


floats = st.floats(allow_nan=False, allow_infinity=True, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-10**6, 10**6), floats, floats), max_size=20))
def test_csv_roundtrip_is_exact(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    write_csv(path, ("i", "a", "b"), rows)
    back = read_csv(path)
    assert [(int(r["i"]), float(r["a"]), float(r["b"])) for r in back] == rows


def test_front_times_restricted_to_domain():
    ts = front_times(ProblemConfig())
    assert ts[0] == 0.05 and ts[-1] == 0.45 and len(ts) == 81
    slow_exit = ProblemConfig(mu2=0.5)  # front leaves the domain at t ~ 0.25
    ts = front_times(slow_exit)
    assert ts.max() <= 0.250005 + 1e-12


def _report(**kw):
    base = dict(mode="fixed", seed=0, status="ok", front_linf=0.05, front_l2=0.02, pressure_l2=0.01,
                final_train_cost=1e-4, final_test_cost=2e-4, generalization_gap=1e-4, seconds=10.0,
                problem={"l": 1.0})
    base.update(kw)
    return ErrorReport(**base)


def test_compare_identical_reports():
    rows = compare_runs(_report(), _report())
    assert all(r.delta == 0 and r.winner is None for r in rows)


def test_compare_flags_smaller_front_error():
    rows = {r.metric: r for r in compare_runs(_report(), _report(mode="adaptive", front_linf=0.01))}
    assert rows["front_linf"].winner == "adaptive"
    assert rows["front_linf"].delta == pytest.approx(-0.04)


def test_compare_rejects_different_problems():
    with pytest.raises(ConfigurationError):
        compare_runs(_report(), _report(problem={"l": 2.0}))


def test_report_json_roundtrip():
    r = _report()
    assert ErrorReport.from_json(r.to_json()) == r


# end to end on tiny budgets ------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    out = {}
    for mode in ("fixed", "adaptive"):
        m = parse_manifest(TINY.format(mode=mode), out=str(root / mode))
        out[mode] = (m, run_experiment(m))
    return out


@pytest.mark.parametrize("mode", ["fixed", "adaptive"])
def test_run_writes_exactly_the_declared_files(tiny_runs, mode):
    m, report = tiny_runs[mode]
    n_events = len(list(m.out_dir.glob("collocation_*.csv")))
    assert sorted(p.name for p in m.out_dir.iterdir()) == expected_files(mode, n_events)
    assert report.status == "ok"
    for key in ("front_linf", "front_l2", "pressure_l2", "final_train_cost", "final_test_cost", "generalization_gap"):
        value = getattr(report, key)
        assert math.isfinite(value) and value >= 0
    if mode == "adaptive":
        assert n_events >= 1
    else:
        assert n_events == 0


def test_exported_schemas(tiny_runs):
    m, _ = tiny_runs["adaptive"]
    cost = read_csv(m.out_dir / "cost_history.csv")
    assert tuple(cost[0].keys()) == COST_COLUMNS
    assert int(cost[0]["n_f1"]) == 25
    snap = read_csv(m.out_dir / "collocation_000.csv")
    assert tuple(snap[0].keys()) == COLLOCATION_COLUMNS
    assert sum(int(r["is_new"]) for r in snap if r["set_name"] == "f1") <= 5
    press = read_csv(m.out_dir / "pressure.csv")
    assert sorted({float(r["t_snapshot"]) for r in press}) == [0.1, 0.2, 0.3, 0.4]
    assert json.loads((m.out_dir / "report.json").read_text())["mode"] == "adaptive"


def test_rerun_is_bit_identical(tiny_runs, tmp_path):
    m, _ = tiny_runs["adaptive"]
    again = RunManifest(**{**m.__dict__, "out_dir": tmp_path})
    run_experiment(again)
    for name in ("cost_history.csv", "front.csv", "pressure.csv", "collocation_000.csv"):
        assert (m.out_dir / name).read_bytes() == (tmp_path / name).read_bytes()


def test_oracle_export(tmp_path):
    export_oracle(ProblemConfig(), tmp_path)
    front = read_csv(tmp_path / "front_analytic.csv")
    assert len(front) == 81
    press = read_csv(tmp_path / "pressure_analytic.csv")
    assert float(press[0]["p_analytic"]) == 1.0


# command line -------------------------------------------------------------------

def test_cli_run_and_compare(tmp_path, capsys):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY.format(mode="fixed"))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 0
    assert cli.main(["run", "--config", str(cfg), "--mode", "adaptive", "--out", str(tmp_path / "a")]) == 0
    capsys.readouterr()
    assert cli.main(["compare", "--a", str(tmp_path / "f"), "--b", str(tmp_path / "a")]) == 0
    table = capsys.readouterr().out
    assert "front_linf" in table and "generalization_gap" in table


def test_cli_oracle(tmp_path):
    assert cli.main(["oracle", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "front_analytic.csv").is_file()


def test_cli_configuration_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[problem]\nmu1 = -1\n")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert "mu1" in capsys.readouterr().err
    assert cli.main(["compare", "--a", str(tmp_path / "none"), "--b", str(tmp_path / "none")]) == 1


def test_cli_bad_thread_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("POROUS_PINN_THREADS", "many")
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY.format(mode="fixed"))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 1


def test_cli_divergence_exit_code(tmp_path, monkeypatch):
    import porous_pinn.training as training

    real = training.adam_step

    def poisoned(params, grad, state, cfg):
        new, st_ = real(params, grad, state, cfg)
        return np.full_like(new, np.nan), st_

    monkeypatch.setattr(training, "adam_step", poisoned)
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY.format(mode="fixed"))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2
    report = json.loads((tmp_path / "d" / "report.json").read_text())
    assert report["status"] == "diverged"
