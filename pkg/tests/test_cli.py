import json

import pytest

from sprintsim.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_analytic_defaults(capsys):
    code, doc = run(capsys, "analytic")
    assert code == 0
    assert round(doc["4C"], 2) == 8.24 and round(doc["t0"], 4) == -0.7167


def test_unknown_subcommand(capsys):
    assert main(["bogus"]) == 64
    assert main([]) == 64


def test_missing_config(capsys, tmp_path):
    code, doc = run(capsys, "analytic", "--config", str(tmp_path / "missing.json"))
    assert code == 1 and "missing.json" in doc["error"]


def test_invalid_config_value(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"gamma": 0}')
    code, doc = run(capsys, "analytic", "--config", str(cfg))
    assert code == 1 and "gamma" in doc["error"]


def test_fockops_from_csv(capsys, tmp_path):
    src = tmp_path / "d.csv"
    src.write_text("n,p\n0,0\n1,0.25\n2,0.75\n")
    code, doc = run(capsys, "fockops", "--input", str(src), "--op", "extract", "--out", str(tmp_path / "o"))
    assert code == 0 and doc["output"]["mean"] == pytest.approx(0.75)
    assert (tmp_path / "o" / "distribution.csv").read_text().startswith("n,p\n")
    code, _ = run(capsys, "fockops", "--input", str(src), "--out", str(tmp_path / "o"))
    assert code == 1
    code, _ = run(capsys, "fockops", "--input", str(src), "--out", str(tmp_path / "o"), "--force")
    assert code == 0


def test_pipeline(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"pulse": {"n_bar": 1.5}, "numerics": {"fock_a": 2, "fock_b": 2, "n_traj": 40}}))
    sim = tmp_path / "sim"
    code, doc = run(capsys, "simulate", "--config", str(cfg), "--out", str(sim), "--skip-truncation-check",
                    "--seed", "7")
    assert code == 0 and doc["seeds"]["master_seed"] == 7
    header = (sim / "flux.csv").read_text().splitlines()[0]
    assert header == "t_ns,flux_T,flux_R,flux_loss,flux_spont"
    assert (sim / "jumps.csv").read_text().splitlines()[0] == "trajectory_id,t_ns,channel"
    code, doc = run(capsys, "clicks", "--config", str(cfg), "--jumps", str(sim / "jumps.csv"),
                    "--out", str(tmp_path / "clk"))
    assert code == 0 and doc["repetitions"] == 40
    code, doc = run(capsys, "reconstruct", "--config", str(cfg), "--hist", str(tmp_path / "clk" / "clicks_T.csv"),
                    "--out", str(tmp_path / "rec"), "--bootstrap", "3")
    assert code == 0 and doc["converged"]
    assert (tmp_path / "rec" / "distribution.csv").read_text().startswith("n,p,lo,hi\n")
    assert "lambda" in json.loads((tmp_path / "rec" / "report.json").read_text())


def test_simulate_deterministic(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"numerics": {"fock_a": 2, "fock_b": 2, "n_traj": 20}}))
    for name, threads in (("a", "1"), ("b", "3")):
        code, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / name),
                      "--skip-truncation-check", "--threads", threads)
        assert code == 0
    for f in ("flux.csv", "jumps.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_truncation_failure_exit_code(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"p_imp": 0.0, "pulse": {"n_bar": 8.0},
                               "numerics": {"fock_a": 2, "fock_b": 2, "n_traj": 2}}))
    code, doc = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "s"))
    assert code == 2 and "fock" in doc["error"]
    assert not (tmp_path / "s").exists()


def test_infeasible_histogram(capsys, tmp_path):
    h = tmp_path / "h.csv"
    h.write_text("n,count\n0,0\n1,0\n2,0\n3,0\n4,0\n5,10\n")
    code, _ = run(capsys, "reconstruct", "--hist", str(h), "--out", str(tmp_path / "r"), "--kmax", "3",
                  "--bootstrap", "2")
    assert code == 1
