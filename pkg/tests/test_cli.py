import csv
import json
import shutil
from pathlib import Path

import pytest

from chemopersist.cli import main
from chemopersist.errors import BudgetExceeded, ConfigError, PreconditionViolated
from chemopersist.experiments import (
    NO_GUARANTEE,
    SweepSpec,
    perturbation_responses,
    pullback,
    pullback_config,
    random_h2_config,
    run_sweep,
    smoke_run_config,
)
from chemopersist.hypothesis import check_h2
from chemopersist.oracle import GOLDEN_PATH

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def configs(tmp_path):
    dst = tmp_path / "configs"
    shutil.copytree(CONFIGS, dst)
    return dst


def edit(path, old, new):
    text = path.read_text()
    assert old in text
    path.write_text(text.replace(old, new))
    return path


def test_run_smoke(configs, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(configs / "smoke.toml"), "--output-dir", str(out)]) == 0
    record = json.loads((out / "record.json").read_text())
    assert record["classification"]["kind"] == "Persistent"
    assert record["hypothesis"]["satisfied"] is True
    assert record["bound_checks"]["mass_envelope_ok"] is True
    with open(out / "snapshots.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "mass", "u_min", "u_max", "v_min", "v_max", "grad_v_max", "lap_v_max"]
    summary = (out / "summary.txt").read_text()
    assert "Persistent" in summary and record["config_hash"] in summary
    assert "classification" in capsys.readouterr().out


def test_run_reversed_window_exits_2(configs, tmp_path, capsys):
    cfg = edit(configs / "smoke.toml", "end = 50.0", "start = 5.0\nend = 1.0")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "time.end" in err and "line" in err


def test_run_with_tau_two_notes_precondition(configs, tmp_path):
    cfg = edit(configs / "smoke.toml", "tau = 1.0", "tau = 2.0")
    edit(cfg, "end = 50.0", "end = 2.0")
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    record = json.loads((out / "record.json").read_text())
    assert record["hypothesis"]["satisfied"] is False
    assert any("tau = 1" in n for n in record["hypothesis"]["notes"])
    assert "no theoretical guarantee" in (out / "summary.txt").read_text()


def test_seed_override_changes_initial_data(configs, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = edit(configs / "random_2d.toml", "end = 30.0", "end = 0.5")
    assert main(["run", str(cfg), "--output-dir", str(a), "--seed", "1"]) == 0
    assert main(["run", str(cfg), "--output-dir", str(b), "--seed", "2"]) == 0
    ra = json.loads((a / "record.json").read_text())
    rb = json.loads((b / "record.json").read_text())
    assert ra["config_hash"] != rb["config_hash"]


def test_check_exit_codes(configs, capsys):
    assert main(["check", str(configs / "smoke.toml")]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["hypothesis"]["margin_local"] == pytest.approx(0.75)
    assert payload["bounds"]["m1"] == pytest.approx(2.25)

    tau2 = edit(configs / "smoke.toml", "tau = 1.0", "tau = 2.0")
    assert main(["check", str(tau2)]) == 1
    assert "tau" in capsys.readouterr().out

    assert main(["check", str(configs / "steady.toml"), "--hypothesis", "h1"]) == 2
    assert "user-supplied" in capsys.readouterr().err


def test_solver_error_exits_3(configs, tmp_path, monkeypatch):
    from chemopersist import cli
    from chemopersist.errors import PositivityViolation

    def boom(config):
        raise PositivityViolation("u undershoot")

    monkeypatch.setattr(cli, "simulate", boom)
    assert main(["run", str(configs / "smoke.toml"), "--output-dir", str(tmp_path / "o")]) == 3


def test_sweep_chi_axis(configs, tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", str(configs / "sweep_chi.toml"), "--output-dir", str(out)]) == 0
    with open(out / "phase.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["params.chi"]) for r in rows] == [0.0, 1.0, 2.0]
    assert all(r["classification"] == "Persistent" for r in rows)
    assert all(r["guarantee"] == "H2 satisfied" for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["uniform_eta"] == min(float(r["eta_hat"]) for r in rows)
    assert len(list((out / "points").glob("point_*.json"))) == 3


def test_sweep_empty_axes_is_config_error(configs, tmp_path):
    spec = configs / "empty.toml"
    spec.write_text('[sweep]\nbase = "smoke.toml"\n')
    assert main(["sweep", str(spec), "--output-dir", str(tmp_path / "o")]) == 2


def test_sweep_budget(configs, tmp_path):
    spec = edit(configs / "sweep_chi.toml", "budget = 10000", "budget = 2")
    assert main(["sweep", str(spec), "--output-dir", str(tmp_path / "o")]) == 2
    with pytest.raises(BudgetExceeded):
        run_sweep(SweepSpec(smoke_run_config(), [("params.chi", [0.0, 1.0, 2.0])], budget=2, output_dir=tmp_path))


def test_sweep_labels_points_outside_hypothesis(tmp_path):
    base = smoke_run_config(cells=16, t_end=2.0)
    spec = SweepSpec(base, [("params.chi", [1.0, 8.0]), ("time.record_every", [0.1])], output_dir=tmp_path)
    rows = run_sweep(spec).rows
    assert rows[0]["guarantee"] == "H2 satisfied"
    assert rows[1]["guarantee"] == NO_GUARANTEE and rows[1]["margin_local"] < 0


def test_sweep_bad_axis_value(tmp_path):
    spec = SweepSpec(smoke_run_config(cells=16), [("params.tau", [-1.0])], output_dir=tmp_path)
    with pytest.raises(ConfigError):
        run_sweep(spec)


def test_pullback_command(configs, tmp_path, capsys):
    out = tmp_path / "pb"
    assert main(["pullback", str(configs / "pullback.toml"), "--depths", "10", "20", "40", "--output-dir", str(out)]) == 0
    result = json.loads((out / "pullback.json").read_text())
    assert len(result["cauchy_gaps"]) == 2 and result["converged"] and result["eta_entire"] > 0
    # too shallow to meet the final-gap criterion: reported as an assertion failure
    assert main(["pullback", str(configs / "pullback.toml"), "--depths", "5", "10", "--output-dir", str(out)]) == 1


def test_pullback_singleton_and_validation():
    result = pullback(pullback_config(), [5.0])
    assert result.cauchy_gaps == [] and result.eta_entire > 0
    with pytest.raises(PreconditionViolated):
        pullback(pullback_config(), [10.0, 5.0])


def test_pullback_constant_coefficients_reach_steady_state():
    result = pullback(pullback_config(amplitude=0.0), [10.0, 20.0, 40.0, 80.0])
    assert all(g < 1e-6 for g in result.cauchy_gaps[1:])
    assert max(abs(result.states_at_zero[-1].u - 1.0).max(), abs(result.states_at_zero[-1].v - 1.0).max()) < 1e-10


def test_oracle_command_detects_tampering(tmp_path, capsys):
    records = json.loads(GOLDEN_PATH.read_text())
    records[0]["value"] += 1.0
    path = tmp_path / "g.json"
    path.write_text(json.dumps(records))
    assert main(["oracle", "--goldens", str(path)]) == 1
    assert f"FAIL  {records[0]['case']}" in capsys.readouterr().out


def test_random_h2_configs_satisfy_h2():
    for seed in range(20):
        for dim in (1, 2):
            cfg = random_h2_config(seed, dim, t_end=5.0)
            assert check_h2(cfg.params, cfg.coeffs, cfg.domain, cfg.window).satisfied


def test_perturbation_response_scales_linearly():
    small, smaller = perturbation_responses(smoke_run_config(cells=32), [1e-3, 5e-4])
    assert 1.5 <= small / smaller <= 2.5
