import json
import subprocess
import sys

import pytest

from annuitize.cli import ConfigError, RunConfig, apply_overrides, main

BASE = {
    "market": {"theta": 0.094864, "alpha": 0.075891, "sigma": 0.15452},
    "prefs": {"rho": 0.05997, "nu": 0.25},
    "pricing": {"rho_hat": 0.05997, "mu_hat": 0.044623, "K": -1500.0},
    "mortality": {"mu_l": 0.044623, "delta": 0.024581, "lambda_l": 0.1},
}


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_table1(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", "--config", write(tmp_path, BASE))
    assert code == 0
    rec = json.loads(out)
    assert rec["command"] == "solve" and rec["config"]["market"] == BASE["market"]
    res = rec["results"]
    assert res["regime"] == "P33ii1"
    assert res["x_l"] == pytest.approx(63161.79, abs=0.01)
    assert res["x_h"] == pytest.approx(26436.86, abs=0.01)


def test_solve_constant(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", "--config", write(tmp_path, BASE),
                       "--constant", "--mu", "0.044623")
    assert code == 0
    res = json.loads(out)["results"]
    assert res["model"] == "constant" and res["region"] == "below"
    assert res["threshold"] == pytest.approx(68930.80, abs=0.01)


def test_mu_without_constant(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "--config", write(tmp_path, BASE), "--mu", "0.05")
    assert code == 2 and "--constant" in err


def test_missing_key(tmp_path, capsys):
    doc = json.loads(json.dumps(BASE))
    del doc["market"]["sigma"]
    code, out, err = run(capsys, "solve", "--config", write(tmp_path, doc))
    assert code == 2 and out == "" and "market.sigma" in err


def test_unknown_key(tmp_path, capsys):
    doc = json.loads(json.dumps(BASE))
    doc["market"]["kappa"] = 1.0
    code, _, err = run(capsys, "solve", "--config", write(tmp_path, doc))
    assert code == 2 and "market.kappa" in err


def test_bad_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    code, _, err = run(capsys, "solve", "--config", str(path))
    assert code == 2 and "invalid JSON" in err


def test_assumption_violation(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "--config", write(tmp_path, BASE),
                       "--override", "mortality.delta=-0.01")
    assert code == 2 and err.startswith("error:")


def test_override(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", "--config", write(tmp_path, BASE),
                       "--override", "pricing.K=0")
    res = json.loads(out)
    assert code == 0 and res["config"]["pricing"]["K"] == 0.0
    assert res["results"]["x_l"] is None


def test_apply_overrides_rejects_malformed():
    with pytest.raises(ConfigError):
        apply_overrides(BASE, ["market.sigma"])
    with pytest.raises(ConfigError):
        apply_overrides(BASE, ["sigma=0.1"])
    assert apply_overrides(BASE, ["sweep.parameter=Delta"])["sweep"] == {"parameter": "Delta"}


def test_config_round_trip():
    doc = dict(BASE, sim={"n_paths": 10_000}, verify={})
    cfg = RunConfig.from_dict(doc)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert cfg.block("sim")["seed"] == 0 and cfg.block("verify")["mc_horizon"] is None


def test_solve_value_table(tmp_path, capsys):
    doc = dict(BASE, grid={"x_lo": 1e3, "x_hi": 1e6, "n": 5})
    code, out, _ = run(capsys, "solve", "--config", write(tmp_path, doc))
    table = json.loads(out)["results"]["value_table"]
    assert code == 0 and len(table) == 5
    assert table[0]["x"] == pytest.approx(1e3) and table[0]["stop_l"] is True
    assert table[-1]["stop_l"] is False


def test_simulate_bad_paths(tmp_path, capsys):
    doc = dict(BASE, sim={"n_paths": 0})
    code, _, err = run(capsys, "simulate", "--config", write(tmp_path, doc))
    assert code == 3 and "n_paths" in err


def test_simulate_deterministic(tmp_path, capsys):
    doc = dict(BASE, sim={"n_paths": 10_000, "horizon": 5.0})
    cfg = write(tmp_path, doc)
    outs = []
    for i in range(2):
        target = str(tmp_path / f"out{i}.csv")
        assert run(capsys, "simulate", "--config", cfg, "--seed", "5", "--out", target)[0] == 0
        outs.append(open(target, "rb").read())
    assert outs[0] == outs[1]
    lines = outs[0].decode().splitlines()
    assert lines[0].startswith("n_paths,dt,frac_total")
    assert lines[1].endswith(",5")
    assert any(l.startswith("# life_expectancy") for l in lines)


def test_sweep_crossings(tmp_path, capsys):
    doc = dict(BASE, sweep={"parameter": "Delta", "lo": 0.0, "hi": 0.229350, "n_points": 200})
    code, out, _ = run(capsys, "sweep", "--config", write(tmp_path, doc))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "param,value,delta_l,delta_h,M_l,M_h,x_l,x_h,regime,status"
    assert len([l for l in lines if not l.startswith("#")]) == 201
    m = [l for l in lines if l.startswith("# crossing M = ")][0]
    assert float(m.rsplit("=", 1)[1]) == pytest.approx(0.01755, abs=1e-4)
    assert any(l.startswith("# crossing threshold = none") for l in lines)


def test_sweep_degenerate_range(tmp_path, capsys):
    doc = dict(BASE, sweep={"parameter": "Delta", "lo": 0.1, "hi": 0.1, "n_points": 10})
    code, _, err = run(capsys, "sweep", "--config", write(tmp_path, doc))
    assert code == 3 and "degenerate" in err


def test_sweep_requires_block(tmp_path, capsys):
    code, _, err = run(capsys, "sweep", "--config", write(tmp_path, BASE))
    assert code == 2 and "sweep" in err


@pytest.mark.parametrize(
    "overrides, expected",
    [([], 0), (["verify.threshold_scale=1.01"], 1), (["pricing.K=0"], 0)],
)
def test_verify(tmp_path, capsys, overrides, expected):
    doc = dict(BASE, verify={})
    args = ["verify", "--config", write(tmp_path, doc)]
    for o in overrides:
        args += ["--override", o]
    code, out, _ = run(capsys, *args)
    assert code == expected
    assert out.splitlines()[0] == "check,value,tol,status,detail"
    if expected == 1:
        assert ",FAIL," in out and "smooth_pasting" in out


def test_verify_constant(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "--config", write(tmp_path, BASE), "--constant")
    assert code == 0 and "moneys_worth" in out


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "annuitize", "solve", "--config", write(tmp_path, BASE)],
        capture_output=True, text=True, check=True,
    )
    assert json.loads(proc.stdout)["results"]["regime"] == "P33ii1"
