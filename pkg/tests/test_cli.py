from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from compound_freq.cli import build_parser, effective_options, main

FAST = ["--N", "3", "--Omega", "2", "--omega-step", "0.5", "--T", "6"]
MG = ["--model", "mackey-glass", "--gamma", "0.1", "--beta", "0.2", "--kappa", "10", "--tau", "4.5"]


def test_roots_json(capsys, tmp_path):
    out = tmp_path / "roots.json"
    assert main(["roots", *MG, "--count", "2", "--json", str(out)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert json.loads(out.read_text()) == d
    for z in d["roots"]:
        assert abs(complex(z["re"], abs(z["im"])) - complex(-0.99, 1.12)) < 0.01
    assert d["spectral_bound_m"] == pytest.approx(-1.98462, abs=1e-4)
    assert d["verified_count"] >= 2 and d["run"]["model"] == "mackey-glass"


def test_verify_exit_codes(tmp_path):
    assert main(["verify", *MG, *FAST, "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["verify", *MG, *FAST, "--tau", "8", "--out-dir", str(tmp_path / "b")]) == 1
    assert main(["verify", *MG, *FAST, "--nu0", "5", "--out-dir", str(tmp_path / "c")]) == 2
    # sweep reports success regardless of the verdict
    assert main(["sweep", *MG, *FAST, "--tau", "8", "--out-dir", str(tmp_path / "d")]) == 0
    assert json.loads((tmp_path / "d" / "report.json").read_text())["verdict"] == "Violated"


def test_usage_and_config_errors(tmp_path, capsys):
    assert main(["nonsense"]) == 3
    assert main(["verify", "--bogus"]) == 3
    assert main(["verify", "--m", "3", *MG]) == 3                    # experimental gate
    assert main(["verify", "--model", "suarez-schopf", "--alpha", "0.6", "--tau", "0.9"]) == 3
    assert main(["verify", "--config", str(tmp_path / "missing.toml")]) == 3
    bad = tmp_path / "bad.toml"
    bad.write_text("[model]\nflavour = 1\n")
    assert main(["verify", "--config", str(bad)]) == 3
    assert main(["verify", *MG, "--h", "0.3"]) == 3                   # not delay aligned
    assert "error" in capsys.readouterr().err


def test_numeric_error_exit(monkeypatch, tmp_path):
    from compound_freq import cli
    from compound_freq.errors import VerificationError

    def boom(*a, **k):
        raise VerificationError("count mismatch", found=1, counted=2, partial=[])
    monkeypatch.setattr(cli, "leading_roots", boom)
    assert main(["roots", *MG]) == 4


def test_outputs_and_echo_reproduce(tmp_path):
    out1 = tmp_path / "one"
    assert main(["verify", *MG, *FAST, "--out-dir", str(out1)]) == 0
    rows = list(csv.reader(open(out1 / "curve.csv")))
    assert rows[0] == ["omega", "alpha", "threshold"] and len(rows) == 10
    rep = json.loads((out1 / "report.json").read_text())
    assert rep["run"]["N"] == 3 and rep["run"]["gamma"] == 0.1 and rep["verdict"] == "Satisfied"
    # rerun from the echoed parameters
    out2 = tmp_path / "two"
    assert main(["verify", "--config", str(out1 / "report.json"), "--out-dir", str(out2)]) == 0
    rep2 = json.loads((out2 / "report.json").read_text())
    for r in (rep, rep2):
        r.pop("timings")
        r["run"].pop("out_dir")
    assert rep == rep2
    assert (out1 / "curve.csv").read_bytes() == (out2 / "curve.csv").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[model]\nmodel = "mackey-glass"\ngamma = 0.1\nbeta = 0.2\nkappa = 10.0\ntau = 4.5\n'
                   '[scheme]\nN = 5\nOmega = 2.0\nomega_step = 0.5\nT = 6.0\n')
    ns = build_parser().parse_args(["verify", "--config", str(cfg), "--N", "2"])
    opts = effective_options("verify", ns)
    assert opts["N"] == 2 and opts["Omega"] == 2.0 and opts["model"] == "mackey-glass"


def test_presets_and_experiment_files():
    ns = build_parser().parse_args(["demo-ss"])
    o = effective_options("demo-ss", ns)
    assert (o["alpha"], o["tau"], o["radius"], o["m"], o["nu0"], o["T"], o["Omega"], o["N"]) == \
        (0.6, 0.83, "auto", 2, 0.01, 15.0, 30.0, 30)
    o = effective_options("demo-mg", build_parser().parse_args(["demo-mg", "--N", "4"]))
    assert (o["gamma"], o["beta"], o["kappa"], o["tau"], o["N"]) == (0.1, 0.2, 10.0, 4.5, 4)
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "experiments"
    for name, model in (("fig2_suarez_schopf.toml", "suarez-schopf"), ("fig3_mackey_glass.toml", "mackey-glass")):
        ns = build_parser().parse_args(["verify", "--config", str(root / name)])
        o = effective_options("verify", ns)
        assert o["model"] == model and o["N"] == 30 and o["T"] == 15.0 and o["nu0"] == 0.01


def test_threads_env(monkeypatch):
    monkeypatch.setenv("COMPOUND_FREQ_THREADS", "2")
    o = effective_options("verify", build_parser().parse_args(["verify"]))
    assert o["threads"] == 2
    o = effective_options("verify", build_parser().parse_args(["verify", "--threads", "0"]))
    assert o["threads"] == 0
    monkeypatch.setenv("COMPOUND_FREQ_THREADS", "many")
    assert main(["verify"]) == 3


def test_scan_and_convergence(tmp_path, capsys):
    code = main(["scan", "--model", "suarez-schopf", "--param", "alpha=0.6", "--param", "tau=0.5,0.9",
                 *FAST, "--json", str(tmp_path / "scan.json")])
    assert code == 1                                   # tau = 0.9 is skipped
    d = json.loads((tmp_path / "scan.json").read_text())
    assert [p["status"] for p in d["points"]] == ["Satisfied", "Skipped"]
    assert main(["scan", "--model", "suarez-schopf"]) == 3
    assert main(["convergence", *MG, "--Ns", "2,3", "--Ts", "4,6", "--Omega", "1",
                 "--json", str(tmp_path / "conv.json")]) == 0
    rows = json.loads((tmp_path / "conv.json").read_text())["rows"]
    assert len(rows) == 4


def test_dump_solutions(tmp_path):
    d = tmp_path / "sol"
    assert main(["sweep", *MG, "--N", "1", "--Omega", "0.5", "--T", "4", "--dump-solutions", str(d),
                 "--out-dir", str(tmp_path)]) == 0
    names = sorted(p.name for p in d.iterdir())
    assert names == ["solution_fundamental.csv", "solution_k-1.csv", "solution_k0.csv", "solution_k1.csv"]
    assert (d / "solution_k0.csv").read_text().startswith("t,re,im")


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "compound_freq", "roots", *MG], capture_output=True, text=True)
    assert r.returncode == 0 and '"roots"' in r.stdout
