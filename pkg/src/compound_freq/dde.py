"""Scalar linear delay equation  x'(t) = a0 x(t) + a1 x(t - tau).

Solutions are computed by classical RK4 on a uniform grid whose step divides
the delay (method of steps), with a cubic Hermite continuous extension used
both for the delayed stage values and for dense output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

DEFAULT_STEP = 1e-3
_GRID_RTOL = 1e-9


class ConstraintKind(str, Enum):
    NORM_BOUND = "norm"
    MONOTONE_SECTOR = "monotone"


@dataclass(frozen=True)
class LinearDelaySystem:
    """Linear part x' = a0 x(t) + a1 x(t - tau) of a feedback delay system.

    The measurement is C phi = phi(-tau0), the control gain is ``b_tilde`` and
    the time-varying feedback gain is bounded by ``lambda_bound`` (the sector
    bound whose reciprocal is the frequency threshold).
    """

    a0: float
    a1: float
    tau: float
    tau0: float = 0.0
    b_tilde: float = 1.0
    lambda_bound: float = 1.0
    constraint_kind: ConstraintKind = ConstraintKind.NORM_BOUND

    def __post_init__(self):
        for name in ("a0", "a1", "tau", "tau0", "b_tilde", "lambda_bound"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.tau <= 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if not 0 <= self.tau0 <= self.tau:
            raise DomainError(f"tau0 must lie in [0, tau], got {self.tau0}")
        if self.lambda_bound <= 0:
            raise DomainError(f"lambda_bound must be positive, got {self.lambda_bound}")
        object.__setattr__(self, "constraint_kind", ConstraintKind(self.constraint_kind))

    @property
    def threshold(self) -> float:
        return 1.0 / self.lambda_bound

    def with_lambda(self, lambda_bound: float) -> "LinearDelaySystem":
        return LinearDelaySystem(self.a0, self.a1, self.tau, self.tau0, self.b_tilde,
                                 lambda_bound, self.constraint_kind)

    def as_dict(self) -> dict:
        return {
            "a0": self.a0, "a1": self.a1, "tau": self.tau, "tau0": self.tau0,
            "b_tilde": self.b_tilde, "lambda_bound": self.lambda_bound,
            "constraint_kind": self.constraint_kind.value,
        }


def aligned_step(tau: float, target: float = DEFAULT_STEP, even: bool = True) -> float:
    """Largest step close to ``target`` with tau/h an (even) integer."""
    if tau <= 0 or target <= 0:
        raise DomainError("tau and target step must be positive")
    n = max(1, round(tau / target))
    if even and n % 2:
        n += 1
    return tau / n


def steps_in(length: float, h: float, what: str = "interval") -> int:
    """Number of grid steps covering ``length``; the length must be a multiple of h."""
    q = length / h
    n = round(q)
    if abs(q - n) > _GRID_RTOL * max(1.0, q):
        raise ConfigurationError(f"{what} {length!r} is not an integer multiple of step {h!r}")
    return n


def fourier_mode(k: int, tau: float) -> Callable[[np.ndarray], np.ndarray]:
    """The orthonormal basis function tau^{-1/2} exp(2 pi i k theta / tau) on [-tau, 0].

    Negative modes are produced as exact conjugates of positive ones.
    """
    scale = tau ** -0.5
    w = 2.0 * math.pi * abs(k) / tau
    sign = 1.0 if k >= 0 else -1.0

    def phi(theta):
        arg = w * np.asarray(theta, dtype=float)
        return scale * (np.cos(arg) + 1j * (sign * np.sin(arg)))

    return phi


def fourier_mode_derivative(k: int, tau: float) -> Callable[[np.ndarray], np.ndarray]:
    phi = fourier_mode(k, tau)
    factor = 2j * math.pi * k / tau
    return lambda theta: factor * phi(theta)


@dataclass(frozen=True, eq=False)
class SolutionTable:
    """Node values of one solution on the delay-aligned grid over [-tau, T].

    ``values[q]`` and ``derivs[q]`` belong to t = -tau + q h.  At a node where
    the solution (or its derivative) jumps, the stored value is the right
    limit and the left limit is kept in ``left_values``/``left_derivs``.
    """

    label: int | str
    tau: float
    h: float
    n_tau: int
    values: np.ndarray
    derivs: np.ndarray
    left_values: dict = field(default_factory=dict)
    left_derivs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values.setflags(write=False)
        self.derivs.setflags(write=False)

    @property
    def is_fundamental(self) -> bool:
        return self.label == "fundamental"

    @property
    def n_total(self) -> int:
        return len(self.values) - 1

    @property
    def n_T(self) -> int:
        return self.n_total - self.n_tau

    @property
    def T(self) -> float:
        return self.n_T * self.h

    @property
    def t_grid(self) -> np.ndarray:
        return -self.tau + self.h * np.arange(self.n_total + 1)

    @property
    def breakpoints(self) -> list[float]:
        return [k * self.tau for k in range(int(self.n_T // self.n_tau) + 1)]

    def on_grid(self) -> np.ndarray:
        """Values at t = 0, h, ..., T."""
        return self.values[self.n_tau:]

    def shifted(self, offset: int) -> np.ndarray:
        """Node values x(t + offset*h) for t = 0, h, ..., T (zero-padded beyond T)."""
        start = self.n_tau + offset
        if start < 0:
            raise DomainError("shift reaches below -tau")
        out = np.zeros(self.n_T + 1, dtype=complex)
        seg = self.values[start:]
        out[: min(len(seg), len(out))] = seg[: len(out)]
        return out

    def eval(self, t):
        """Cubic Hermite dense output; node arguments return the stored value."""
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        t_arr = np.atleast_1d(t_arr)
        lo, hi = -self.tau, self.T
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(t_arr < lo - slack) or np.any(t_arr > hi + slack):
            raise DomainError(f"t outside [{lo}, {hi}]")
        u = (np.clip(t_arr, lo, hi) + self.tau) / self.h
        q_near = np.rint(u).astype(int)
        at_node = np.abs(u - q_near) <= 1e-9
        q = np.minimum(np.floor(u).astype(int), self.n_total - 1)
        s = u - q
        y0 = self.values[q]
        d0 = self.derivs[q]
        y1 = self.values[q + 1].copy()
        d1 = self.derivs[q + 1].copy()
        for node, v in self.left_values.items():
            y1[q + 1 == node] = v
        for node, d in self.left_derivs.items():
            d1[q + 1 == node] = d
        out = _hermite(s, self.h, y0, y1, d0, d1)
        out[at_node] = self.values[q_near[at_node]]
        return out[0] if scalar else out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "re", "im"])
            for t, v in zip(self.t_grid, self.values):
                w.writerow([f"{t:.12g}", f"{v.real:.17g}", f"{v.imag:.17g}"])


def _hermite(s, h, y0, y1, d0, d1):
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def _numeric_derivative(f, tau):
    eps = 1e-6 * tau

    def d(theta):
        theta = np.asarray(theta, dtype=float)
        return (f(theta + eps) - f(theta - eps)) / (2 * eps)

    return d


def _integrate_batch(sys: LinearDelaySystem, hist_nodes, hist_mid, x0, n_tau: int,
                     n_T: int, h: float):
    """RK4 method of steps for a stack of histories (rows).

    Returns full-grid values/derivatives (right limits) and the left-limit
    derivative at t = tau.
    """
    a0, a1 = sys.a0, sys.a1
    B = hist_nodes.shape[0]
    x = np.empty((B, n_T + 1), dtype=complex)
    f = np.empty((B, n_T + 1), dtype=complex)
    x[:, 0] = x0
    f[:, 0] = a0 * x0 + a1 * hist_nodes[:, 0]
    f_left_tau = None
    half = 0.5 * h
    sixth = h / 6.0
    eighth = h / 8.0
    for n in range(n_T):
        c = n - n_tau
        if c < 0:
            j = c + n_tau
            d0 = hist_nodes[:, j]
            dm = hist_mid[:, j]
            d1 = hist_nodes[:, j + 1]
        else:
            d0 = x[:, c]
            d1 = x[:, c + 1]
            f_end = f_left_tau if (c + 1 == n_tau and f_left_tau is not None) else f[:, c + 1]
            dm = 0.5 * (d0 + d1) + eighth * (f[:, c] - f_end)
        xn = x[:, n]
        k1 = a0 * xn + a1 * d0
        k2 = a0 * (xn + half * k1) + a1 * dm
        k3 = a0 * (xn + half * k2) + a1 * dm
        k4 = a0 * (xn + h * k3) + a1 * d1
        xn1 = xn + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x[:, n + 1] = xn1
        # right-limit derivative at the new node: delayed argument is the start of the next cell
        c_next = c + 1
        delayed = hist_nodes[:, c_next + n_tau] if c_next < 0 else x[:, c_next]
        f[:, n + 1] = a0 * xn1 + a1 * delayed
        if c_next == 0:
            f_left_tau = a0 * xn1 + a1 * d1
    return x, f, f_left_tau


def _build_tables(sys, labels, hist_funcs, hist_dfuncs, x0s, T, h):
    n_tau = steps_in(sys.tau, h, "delay")
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")
    n_T = max(1, math.ceil(T / h - _GRID_RTOL * max(1.0, T / h)))
    theta = -sys.tau + h * np.arange(n_tau + 1)
    theta_mid = theta[:-1] + 0.5 * h
    hist_nodes = np.array([np.broadcast_to(np.asarray(g(theta), dtype=complex), theta.shape)
                           for g in hist_funcs])
    hist_mid = np.array([np.broadcast_to(np.asarray(g(theta_mid), dtype=complex), theta_mid.shape)
                         for g in hist_funcs])
    hist_derivs = np.array([np.broadcast_to(np.asarray(d(theta), dtype=complex), theta.shape)
                            for d in hist_dfuncs])
    x0 = np.asarray(x0s, dtype=complex)
    x, f, f_left_tau = _integrate_batch(sys, hist_nodes, hist_mid, x0, n_tau, n_T, h)
    tables = []
    for b, label in enumerate(labels):
        values = np.concatenate([hist_nodes[b, :-1], x[b]])
        derivs = np.concatenate([hist_derivs[b, :-1], f[b]])
        left_v, left_d = {}, {}
        if hist_nodes[b, -1] != x0[b]:
            left_v[n_tau] = complex(hist_nodes[b, -1])
        if hist_derivs[b, -1] != f[b, 0]:
            left_d[n_tau] = complex(hist_derivs[b, -1])
        if f_left_tau is not None and f_left_tau[b] != f[b, n_tau]:
            left_d[2 * n_tau] = complex(f_left_tau[b])
        tables.append(SolutionTable(label, sys.tau, h, n_tau, values, derivs, left_v, left_d))
    return tables


def integrate(sys: LinearDelaySystem, history, x0: complex, T: float, h: float,
              history_deriv=None, label: int | str = "custom") -> SolutionTable:
    """Solve on [0, T] from ``history`` on [-tau, 0] and the value ``x0`` at t = 0.

    ``history`` is a callable of theta (vectorised) or a constant.  ``x0`` may
    differ from history(0), as for the fundamental solution.
    """
    if not callable(history):
        const = complex(history)
        history = lambda th, c=const: np.full(np.shape(th), c, dtype=complex)  # noqa: E731
        history_deriv = history_deriv or (lambda th: np.zeros(np.shape(th), dtype=complex))
    if history_deriv is None:
        history_deriv = _numeric_derivative(history, sys.tau)
    return _build_tables(sys, [label], [history], [history_deriv], [x0], T, h)[0]


def fundamental_initial_value(m: int, b_tilde: float) -> float:
    """(-1)^(m+1) sqrt(m!) b_tilde: the jump of the scaled fundamental solution."""
    if m < 1:
        raise DomainError(f"compound order m must be >= 1, got {m}")
    return (-1.0) ** (m + 1) * math.sqrt(math.factorial(m)) * b_tilde


def _zero(theta):
    return np.zeros(np.shape(theta), dtype=complex)


def fundamental_solution(sys: LinearDelaySystem, m: int, T: float, h: float) -> SolutionTable:
    x0 = fundamental_initial_value(m, sys.b_tilde)
    return _build_tables(sys, ["fundamental"], [_zero], [_zero], [x0], T, h)[0]


def basis_solution(sys: LinearDelaySystem, k: int, T: float, h: float) -> SolutionTable:
    phi = fourier_mode(k, sys.tau)
    return _build_tables(sys, [k], [phi], [fourier_mode_derivative(k, sys.tau)],
                         [phi(0.0)], T, h)[0]


def solution_bundle(sys: LinearDelaySystem, modes: Sequence[int], m: int, T: float,
                    h: float) -> tuple[dict[int, SolutionTable], SolutionTable]:
    """All basis solutions for ``modes`` plus the fundamental one, integrated together."""
    modes = list(modes)
    labels = modes + ["fundamental"]
    funcs = [fourier_mode(k, sys.tau) for k in modes] + [_zero]
    dfuncs = [fourier_mode_derivative(k, sys.tau) for k in modes] + [_zero]
    x0s = [complex(g(0.0)) for g in funcs[:-1]] + [fundamental_initial_value(m, sys.b_tilde)]
    tables = _build_tables(sys, labels, funcs, dfuncs, x0s, T, h)
    return dict(zip(modes, tables[:-1])), tables[-1]
