import csv
import json
from pathlib import Path

import pytest

from percolab.cli import main, read_tau_table
from percolab.config import ConfigError, parse_config

BASE = """
[model]
k = 1
d = 1
epsilon = 1.0
beta = {beta}

[box]
lo0 = -2
hi0 = 2
lo1 = -6
hi1 = 6

[run]
seed = 3
n_samples = {n}
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run(tmp_path, command, text, *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    return main([command, "--config", str(cfg), "--out", str(out), *extra]), out


def test_config_round_trip():
    text = BASE.format(beta=0.1, n=100) + "[simulate]\npoints = 0,1; 1,0\nsup_L = 1.5, 2.0\n"
    cfg = parse_config(text)
    again = parse_config(cfg.to_ini())
    assert again == cfg
    assert again.to_ini() == cfg.to_ini()


@pytest.mark.parametrize("mutation, needle", [
    (lambda t: t.replace("seed = 3\n", ""), "seed"),
    (lambda t: t.replace("beta = 0.1", "beta = 1.5"), "beta"),
    (lambda t: t + "[simulate]\npoints = 0,1\nbogus = 1\n", "bogus"),
    (lambda t: t + "[extras]\nx = 1\n", "extras"),
    (lambda t: t + "[simulate]\npoints = 9,9\n", "outside"),
    (lambda t: t + "[oracle]\nfixture_p = 1.3\n", "fixture_p"),
])
def test_config_errors(mutation, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(mutation(BASE.format(beta=0.1, n=100)))


def test_simulate_beta_zero_and_determinism(tmp_path):
    text = BASE.format(beta=0.0, n=500) + "[simulate]\npoints = 0,1; 1,0; 2,5\n"
    code, out = run(tmp_path, "simulate", text)
    assert code == 0
    rows = list(csv.DictReader(open(out / "simulate.csv")))
    assert {float(r["mean"]) for r in rows if r["quantity"] == "tau"} == {0.0}
    first = (out / "simulate.csv").read_bytes()
    code, out = run(tmp_path, "simulate", text)
    assert (out / "simulate.csv").read_bytes() == first
    man = json.loads((out / "manifest.json").read_text())
    assert set(man) == {"payload", "meta"} and "timestamp" in man["meta"]


def test_simulate_workers_and_seed_override(tmp_path):
    text = BASE.format(beta=0.2, n=9000) + "[simulate]\ntilt_m = 0.4\nsup_L = 2\n"
    _, out = run(tmp_path, "simulate", text, "--workers", "1")
    one = (out / "simulate.csv").read_bytes()
    _, out = run(tmp_path, "simulate", text, "--workers", "3")
    assert (out / "simulate.csv").read_bytes() == one
    _, out = run(tmp_path, "simulate", text, "--seed", "99")
    assert (out / "simulate.csv").read_bytes() != one


def test_exit_codes(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", BASE.format(beta=0.1, n=10).replace("k = 1\n", ""))
    assert code == 2
    assert "'k'" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write(tmp_path, BASE.format(beta=0.1, n=10))
    assert main(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")]) == 3


def test_oracle_check_small_suite(tmp_path):
    text = BASE.format(beta=0.1, n=1) + (
        "[oracle]\ninstances = 15\nmodel_instances = 6\nmc_instances = 3\nmc_samples = 20000\n")
    code, out = run(tmp_path, "oracle-check", text)
    assert code == 0
    lines = [json.loads(l) for l in (out / "oracle.jsonl").read_text().splitlines()]
    suites = [l["suite"] for l in lines]
    assert suites.count("hsl") == 21 and suites.count("fkg") == 21 and suites.count("fixture") == 4
    assert all(l["holds"] for l in lines if l["suite"] in ("hsl", "fkg", "fixture"))
    fx = {l["instance"]: l for l in lines if l["suite"] == "fixture"}
    assert fx["series"]["exact"] == pytest.approx(0.18, abs=1e-12)
    assert fx["parallel"]["exact"] == pytest.approx(0.3 + 0.6 - 0.18, abs=1e-12)


def test_oracle_cap_reported_per_instance(tmp_path):
    text = BASE.format(beta=0.1, n=1) + (
        "[oracle]\ninstances = 10\nmodel_instances = 0\nmc_instances = 0\ncap = 3\n")
    code, out = run(tmp_path, "oracle-check", text)
    lines = [json.loads(l) for l in (out / "oracle.jsonl").read_text().splitlines()]
    assert any("error" in l for l in lines)
    assert lines[-1]["suite"] == "summary"


def test_certify_and_failing_stage(tmp_path):
    code, out = run(tmp_path, "certify", BASE.format(beta=0.05, n=4000))
    assert code == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["verification"]["passed"] and cert["C"] > 0
    assert set(cert["provenance"]) >= {"n0", "m", "chi_m", "L0", "alpha", "C"}
    code, _ = run(tmp_path, "certify", BASE.format(beta=0.05, n=4000).replace("-2", "-1").replace(
        "hi0 = 2", "hi0 = 1") + "[certify]\nlambda = 0.1\n")
    assert code == 1


def test_certify_beta_zero(tmp_path):
    code, out = run(tmp_path, "certify", BASE.format(beta=0.0, n=200))
    cert = json.loads((out / "certificate.json").read_text())
    assert code == 0 and cert["chi_m"] == 1.0


def test_fit_from_simulate_table_and_empty(tmp_path):
    text = BASE.format(beta=0.0, n=100) + "[simulate]\npoints = 0,1; 0,2\n"
    _, out = run(tmp_path, "simulate", text)
    table = out / "simulate.csv"
    assert len(read_tau_table(table, 1)) == 2
    code, _ = run(tmp_path, "fit", BASE.format(beta=0.0, n=100) + f"[fit]\ntable = {table}\n")
    assert code == 1


def test_fit_inline(tmp_path, capsys):
    text = BASE.format(beta=0.05, n=20000) + (
        "[fit]\npoints = 0,1; 0,2; 0,3; 0,4; 1,0; 1,1; 1,2; 2,0; 2,1\n")
    code, out = run(tmp_path, "fit", text)
    assert code == 0
    fit = json.loads((out / "fit.json").read_text())
    assert {"m_hat", "q_hat", "c_hat", "residual_rms", "window"} <= set(fit)
    assert "q_hat" in capsys.readouterr().out
