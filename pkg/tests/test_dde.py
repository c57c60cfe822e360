from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from compound_freq.dde import (LinearDelaySystem, aligned_step, basis_solution, fourier_mode,
                               fundamental_initial_value, fundamental_solution, integrate,
                               solution_bundle, steps_in)
from compound_freq.errors import ConfigurationError, DomainError
from compound_freq.quadrature import simpson_weights


def test_system_validation():
    with pytest.raises(DomainError):
        LinearDelaySystem(-1.0, 0.5, tau=0.0)
    with pytest.raises(DomainError):
        LinearDelaySystem(-1.0, 0.5, tau=1.0, tau0=1.5)
    with pytest.raises(DomainError):
        LinearDelaySystem(-1.0, 0.5, tau=1.0, lambda_bound=0.0)
    with pytest.raises(DomainError):
        LinearDelaySystem(math.nan, 0.5, tau=1.0)
    s = LinearDelaySystem(-1.0, 0.5, 1.0, lambda_bound=4.0, constraint_kind="monotone")
    assert s.threshold == 0.25
    assert s.with_lambda(2.0).threshold == 0.5
    assert s.as_dict()["constraint_kind"] == "monotone"


def test_aligned_step_even_and_steps_in():
    for tau in (0.83, 1.0, 4.5, 0.0371):
        h = aligned_step(tau)
        n = steps_in(tau, h)
        assert n % 2 == 0
        assert abs(n * h - tau) < 1e-12 * tau
    assert steps_in(1.0, 1e-3) == 1000
    with pytest.raises(ConfigurationError):
        steps_in(1.0, 0.3)


def test_fourier_modes_orthonormal():
    tau = 0.83
    n = 400
    th = np.linspace(-tau, 0.0, n + 1)
    w = simpson_weights(n, tau / n)
    G = np.array([[np.sum(w * fourier_mode(k, tau)(th) * np.conj(fourier_mode(l, tau)(th)))
                   for k in range(-3, 4)] for l in range(-3, 4)])
    assert np.abs(G - np.eye(7)).max() < 1e-8


def test_method_of_steps_polynomial_exact():
    # x' = -x(t - 1), x = 1 on [-1, 0]: x = 1 - t on [0, 1], 1 - t + (t - 1)^2 / 2 on [1, 2]
    sys = LinearDelaySystem(0.0, -1.0, 1.0)
    tab = integrate(sys, 1.0, 1.0, T=2.0, h=0.05)
    t = tab.t_grid
    exact = np.where(t <= 0, 1.0, np.where(t <= 1, 1 - t, 1 - t + 0.5 * (t - 1) ** 2))
    assert np.abs(tab.values - exact).max() < 1e-13
    # dense output is exact for these low-degree pieces too
    ts = np.array([0.123, 0.77, 1.01, 1.555])
    ex = np.where(ts <= 1, 1 - ts, 1 - ts + 0.5 * (ts - 1) ** 2)
    assert np.abs(tab.eval(ts) - ex).max() < 1e-13


def test_rk4_fourth_order_on_ode_limit():
    sys = LinearDelaySystem(-0.7, 0.0, 1.0)
    errs = []
    for h in (0.1, 0.05, 0.025):
        tab = basis_solution(sys, 2, T=5.0, h=h)
        t = tab.t_grid[tab.n_tau:]
        exact = fourier_mode(2, 1.0)(0.0) * np.exp(-0.7 * t)
        errs.append(np.abs(tab.on_grid() - exact).max())
    assert errs[0] / errs[1] > 14 and errs[1] / errs[2] > 14


def test_hermite_dense_output_order():
    sys = LinearDelaySystem(-0.7, 0.0, 1.0)
    errs = []
    for h in (0.1, 0.05):
        tab = basis_solution(sys, 0, T=3.0, h=h)
        ts = np.linspace(0.013, 2.9, 37)
        errs.append(np.abs(tab.eval(ts) - np.exp(-0.7 * ts)).max())
    assert errs[0] / errs[1] > 12


def test_fundamental_jump_convention():
    sys = LinearDelaySystem(-1.0, 0.4, 1.0, b_tilde=-1.0)
    for m in (1, 2, 3):
        tab = fundamental_solution(sys, m, T=2.0, h=0.05)
        x0 = (-1) ** (m + 1) * math.sqrt(math.factorial(m)) * -1.0
        assert fundamental_initial_value(m, -1.0) == x0
        assert tab.values[tab.n_tau] == x0
        assert np.all(tab.values[: tab.n_tau] == 0)
        assert tab.left_values[tab.n_tau] == 0
        assert tab.eval(-0.5) == 0
        # just right of the jump the dense output follows the right branch
        assert abs(tab.eval(1e-9) - x0) < 1e-6
    with pytest.raises(DomainError):
        fundamental_initial_value(0, 1.0)


def test_conjugate_modes_exact():
    sys = LinearDelaySystem(-1.3, 0.8, 0.83, tau0=0.0)
    basis, _ = solution_bundle(sys, range(-4, 5), 2, 3.0, aligned_step(0.83, 0.01))
    for k in range(1, 5):
        assert np.array_equal(basis[-k].values, np.conj(basis[k].values))
        assert np.array_equal(basis[-k].derivs, np.conj(basis[k].derivs))
    assert np.all(basis[0].values.imag == 0)


def test_eval_domain_and_nodes():
    sys = LinearDelaySystem(-1.0, 0.5, 1.0)
    tab = basis_solution(sys, 1, T=2.0, h=0.1)
    q = 17
    assert tab.eval(tab.t_grid[q]) == tab.values[q]
    with pytest.raises(DomainError):
        tab.eval(2.5)
    with pytest.raises(DomainError):
        tab.eval(-1.5)
    assert tab.breakpoints == [0.0, 1.0, 2.0]


def test_bundle_matches_single_solves():
    sys = LinearDelaySystem(-1.0, 0.5, 1.0, tau0=0.5)
    basis, fund = solution_bundle(sys, [-1, 0, 3], 2, 2.0, 0.05)
    assert np.allclose(basis[3].values, basis_solution(sys, 3, 2.0, 0.05).values, atol=1e-15)
    assert np.allclose(fund.values, fundamental_solution(sys, 2, 2.0, 0.05).values, atol=1e-15)


def test_to_csv(tmp_path):
    sys = LinearDelaySystem(-1.0, 0.5, 1.0)
    tab = basis_solution(sys, 1, T=1.0, h=0.25)
    path = tmp_path / "sol.csv"
    tab.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "re", "im"]
    assert len(rows) == 1 + len(tab.values)
    assert complex(float(rows[3][1]), float(rows[3][2])) == tab.values[2]
