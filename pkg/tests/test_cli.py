import json

import pytest

from hawkes_cumulants.cli import main


@pytest.fixture
def scalar_json(tmp_path):
    path = tmp_path / "scalar.json"
    path.write_text(json.dumps({"d": 1, "mu": [1.0],
                                "kernels": [{"i": 1, "j": 1, "type": "exp", "alpha": 0.5, "beta": 1.0}]}))
    return path


@pytest.fixture
def poisson_json(tmp_path):
    path = tmp_path / "poisson.json"
    path.write_text(json.dumps({"d": 2, "mu": [1.0, 2.0], "kernels": []}))
    return path


def test_trees(capsys):
    assert main(["trees", "--n", "4", "--count-only"]) == 0
    assert capsys.readouterr().out.strip() == "26"
    assert main(["trees", "--n", "3"]) == 0
    lines = capsys.readouterr().out.split()
    assert lines[0] == "4" and len(lines) == 5


def test_analytic(scalar_json, capsys):
    assert main(["analytic", "--model", str(scalar_json), "--types", "1,1"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 8.0
    assert main(["analytic", "--model", str(scalar_json), "--types", "1,1,1", "--per-tree"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == 64.0


def test_simulate_is_deterministic(scalar_json, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["simulate", "--model", str(scalar_json), "--T", "200", "--seed", "3", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "time,type,cluster_id,parent_row,generation"


def test_unstable_model_writes_nothing(tmp_path):
    model = tmp_path / "bad.json"
    model.write_text(json.dumps({"d": 1, "mu": [1.0],
                                 "kernels": [{"i": 1, "j": 1, "type": "exp", "alpha": 1.2, "beta": 1.0}]}))
    out = tmp_path / "ev.csv"
    assert main(["simulate", "--model", str(model), "--T", "10", "--seed", "1", "--out", str(out)]) == 3
    assert not out.exists()


def test_estimate_modes(scalar_json, tmp_path, capsys):
    events = tmp_path / "ev.csv"
    assert main(["simulate", "--model", str(scalar_json), "--T", "5000", "--seed", "1", "--out", str(events)]) == 0
    assert main(["estimate", "--events", str(events), "--types", "1,1", "--bin-width", "50"]) == 0
    est = json.loads(capsys.readouterr().out)
    assert abs(est["value"] - 8.0) < 4 * est["se"]
    out = tmp_path / "dens.csv"
    assert main(["estimate", "--events", str(events), "--types", "1,1", "--mode", "density",
                 "--lag-max", "2", "--lag-step", "0.5", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "lag_lo,lag_hi,value,se,n_samples"
    assert main(["estimate", "--events", str(events), "--types", "1,1,1", "--mode", "coincidence",
                 "--lag-max", "1", "--lag-step", "1"]) == 0
    assert len(json.loads(capsys.readouterr().out)["bins"]) == 4


def test_coincidence_needs_lineage(scalar_json, tmp_path):
    events = tmp_path / "thin.csv"
    assert main(["simulate", "--model", str(scalar_json), "--T", "300", "--seed", "1", "--sampler", "thinning",
                 "--out", str(events)]) == 0
    assert main(["estimate", "--events", str(events), "--types", "1,1", "--mode", "coincidence",
                 "--lag-max", "1", "--lag-step", "0.5"]) == 9


def test_verify_poisson(poisson_json, tmp_path):
    out = tmp_path / "report.json"
    assert main(["verify", "--model", str(poisson_json), "--seed", "0", "--T", "2e4", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["checks"] and all(c["pass"] for c in report["checks"])


def test_bad_arguments(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["analytic", "--model", str(tmp_path / "missing.json"), "--types", "1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["trees", "--n", "0"])


def test_density_grid_csv(scalar_json, tmp_path):
    out = tmp_path / "k.csv"
    assert main(["analytic", "--model", str(scalar_json), "--types", "1,1", "--density", "--csv", str(out),
                 "--lag-max", "1", "--lag-step", "0.5", "--dt", "0.01", "--horizon", "40", "--out",
                 str(tmp_path / "k.json")]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "lag,density" and len(rows) == 6
    lag, val = map(float, rows[-1].split(","))
    assert lag == 1.0 and val == pytest.approx(1.5 * 2.718281828459045 ** -0.5, rel=5e-3)
