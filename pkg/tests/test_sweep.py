from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from compound_freq.dde import LinearDelaySystem
from compound_freq.scheme import SchemeConfig
from compound_freq.sweep import (NEAR_THRESHOLD_BAND, Verdict, check_precondition,
                                 convergence_report, frequency_sweep, omega_grid, region_scan)

SMALL = dict(m=2, N=3, T=6.0, Omega=4.0, omega_step=0.25)


def _mg_small():
    from compound_freq.models import build_system
    return build_system("mackey-glass", gamma=0.1, beta=0.2, kappa=10, tau=4.5)


def test_omega_grid():
    g = omega_grid(SchemeConfig(Omega=1.0, omega_step=0.25))
    assert g.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert len(omega_grid(SchemeConfig())) == 601


def test_precondition():
    sys = _mg_small()
    pre = check_precondition(sys, SchemeConfig(**SMALL))
    assert pre.ok and pre.spectral_bound == pytest.approx(-1.98462, abs=1e-4)
    assert not check_precondition(sys, SchemeConfig(**SMALL, nu0=5.0)).ok


def test_sweep_verdict_and_fields():
    sys = _mg_small()
    cfg = SchemeConfig(**SMALL, h=1 / 100)
    rep = frequency_sweep(sys, cfg)
    assert rep.verdict is Verdict.SATISFIED
    assert rep.margin == pytest.approx(rep.threshold - rep.alphas.max())
    assert rep.omegas[0] == -4.0 and rep.omegas[-1] == 4.0 and len(rep.omegas) == 33
    assert np.array_equal(rep.alphas, rep.alphas[::-1])         # mirrored
    assert rep.extreme_alpha == rep.alphas.max()
    assert rep.near_threshold == (0 < rep.margin < NEAR_THRESHOLD_BAND * rep.threshold)
    assert rep.tail is not None and rep.tail.gap < rep.tail.gap_half
    assert rep.outer_band_max == pytest.approx(rep.alphas[np.abs(rep.omegas) >= 2.0].max())
    assert set(rep.timings) >= {"spectrum", "integration", "sweep"}


def test_no_mirror_symmetric():
    sys = _mg_small()
    cfg = SchemeConfig(**SMALL, h=1 / 100, mirror=False)
    rep = frequency_sweep(sys, cfg, with_tail=False)
    assert rep.symmetry_defect <= 1e-10
    n = len(rep.omegas) // 2
    assert np.allclose(rep.alphas[:n + 1][::-1], rep.alphas[n:], rtol=1e-10, atol=0)
    mirrored = frequency_sweep(sys, cfg.replace(mirror=True), with_tail=False)
    assert np.allclose(mirrored.alphas, rep.alphas, rtol=1e-12, atol=0)


def test_paper_and_fast_sweeps_agree():
    sys = LinearDelaySystem(-1.5, 0.7, 1.0, tau0=0.5, b_tilde=1.0, lambda_bound=2.0)
    cfg = SchemeConfig(m=2, N=2, T=4.0, Omega=2.0, omega_step=0.5, h=1 / 20)
    a = frequency_sweep(sys, cfg, with_tail=False).alphas
    b = frequency_sweep(sys, cfg.replace(path="paper"), with_tail=False).alphas
    assert np.abs(a - b).max() < 1e-12


def test_violated_and_precondition_failed():
    sys = _mg_small().with_lambda(10.0)                        # threshold 0.1
    rep = frequency_sweep(sys, SchemeConfig(**SMALL, h=1 / 50), with_tail=False)
    assert rep.verdict is Verdict.VIOLATED and rep.margin < 0
    # an unstable pair: the sum of the two leading real parts is positive
    bad = LinearDelaySystem(0.5, -3.0, 1.0)
    rep2 = frequency_sweep(bad, SchemeConfig(**SMALL, h=1 / 50))
    assert rep2.verdict is Verdict.PRECONDITION_FAILED
    assert len(rep2.omegas) == 0 and math.isnan(rep2.margin)


def test_monotone_constraint():
    sys = LinearDelaySystem(-1.5, 0.7, 1.0, tau0=0.5, b_tilde=1.0, lambda_bound=2.0,
                            constraint_kind="monotone")
    rep = frequency_sweep(sys, SchemeConfig(m=2, N=2, T=4.0, Omega=2.0, omega_step=0.5, h=1 / 20),
                          with_tail=False)
    assert rep.margin == pytest.approx(rep.alphas.min() + 0.5)
    assert rep.curve_threshold == -0.5
    assert rep.verdict is (Verdict.SATISFIED if rep.margin > 0 else Verdict.VIOLATED)


def test_report_outputs(tmp_path):
    sys = _mg_small()
    rep = frequency_sweep(sys, SchemeConfig(**SMALL, h=1 / 50), with_tail=False)
    rep.write_csv(tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["omega", "alpha", "threshold"]
    assert len(rows) == len(rep.omegas) + 1
    assert float(rows[5][1]) == rep.alphas[4]                  # 17 significant digits round-trip
    om = [float(r[0]) for r in rows[1:]]
    assert om == sorted(om)
    rep.to_json(tmp_path / "r.json")
    d = json.load(open(tmp_path / "r.json"))
    assert d["verdict"] == "Satisfied" and d["config"]["N"] == 3 and d["system"]["tau0"] == 1.0
    assert d["tail"] is None


def test_sweep_deterministic():
    sys = _mg_small()
    cfg = SchemeConfig(**SMALL, h=1 / 50)
    a = frequency_sweep(sys, cfg).as_dict(timings=False)
    b = frequency_sweep(sys, cfg, threads=1).as_dict(timings=False)
    assert json.dumps(a) == json.dumps(b)


def test_convergence_report():
    sys = _mg_small()
    cfg = SchemeConfig(m=2, N=3, T=6.0, Omega=2.0, omega_step=0.5, h=1 / 50)
    rows = convergence_report(sys, cfg, Ns=[2, 3], Ts=[4.0, 6.0])
    assert [r.vary for r in rows] == ["N", "N", "T", "T"]
    assert all(r.sup_diff >= 0 for r in rows)
    assert rows[2].stabilized
    with pytest.raises(ValueError):
        convergence_report(sys, cfg, Ns=[3, 2], Ts=[4.0])


def test_region_scan_records_failures():
    cfg = SchemeConfig(m=2, N=2, T=4.0, Omega=1.0, omega_step=0.5, h=None)
    pts = [dict(alpha=0.6, tau=0.5), dict(alpha=0.6, tau=0.9)]
    res = region_scan("suarez-schopf", pts, cfg.replace(h=0.5 / 50))
    assert res[0].status == "Satisfied"
    assert res[1].status == "Skipped" and "PreconditionError" in res[1].reason
