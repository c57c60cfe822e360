"""Suarez-Schopf and Mackey-Glass presets.

Suarez-Schopf:  y' = y(t) - alpha y(t - tau) - y(t)^3, linearised over the
attractor with the sector centre Lambda_R = 3 R^2 / 2.

Mackey-Glass (delay normalised to 1):  y' = -tau gamma y + tau beta f(y(t-1)),
f(y) = y / (1 + |y|^kappa), with the slope sector [-(kappa-1)^2/(4 kappa), 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .dde import ConstraintKind, LinearDelaySystem
from .errors import BoundaryError, BracketError, DomainError, NotFoundError, PreconditionError
from .spectrum import Box, count_roots_in


@dataclass(frozen=True)
class SuarezSchopfParams:
    alpha: float
    tau: float
    R: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.tau <= 0 or self.R <= 0:
            raise DomainError("tau and R must be positive")


@dataclass(frozen=True)
class MackeyGlassParams:
    gamma: float
    beta: float
    kappa: float
    tau: float

    def __post_init__(self):
        if self.gamma <= 0 or self.beta <= self.gamma:
            raise DomainError("need 0 < gamma < beta")
        if self.kappa <= 1:
            raise DomainError(f"kappa must exceed 1, got {self.kappa}")
        if self.tau <= 0:
            raise DomainError(f"tau must be positive, got {self.tau}")


def ss_lambda(R: float) -> float:
    return 1.5 * R * R


def suarez_schopf_system(p: SuarezSchopfParams, lambda_bound: float | None = None) -> LinearDelaySystem:
    """Linear part (1 - Lambda) x(t) - alpha x(t - tau) with C phi = phi(0), B = -1.

    ``lambda_bound`` overrides Lambda_R = 3 R^2 / 2 (it moves a0 as well).
    """
    lam = ss_lambda(p.R) if lambda_bound is None else float(lambda_bound)
    return LinearDelaySystem(a0=1.0 - lam, a1=-p.alpha, tau=p.tau, tau0=0.0, b_tilde=-1.0,
                             lambda_bound=lam, constraint_kind=ConstraintKind.NORM_BOUND)


def _ss_C(alpha, tau):
    at = alpha * tau
    return at / (1.0 - at) * (4.0 / 3.0) * (1.0 - alpha) * math.sqrt((1.0 - alpha) / 3.0)


def ss_cubic(R: float, alpha: float, tau: float) -> float:
    return -R**3 + (1.0 - alpha) * R + _ss_C(alpha, tau)


def ss_attractor_radius(alpha: float, tau: float) -> float:
    """Radius R0 of a ball containing the attractor (requires 2 alpha tau < 1)."""
    if not 0 < alpha < 1 or tau <= 0:
        raise DomainError("need 0 < alpha < 1 and tau > 0")
    if 2.0 * alpha * tau >= 1.0:
        raise PreconditionError(f"radius estimate needs 2*alpha*tau < 1, got {2 * alpha * tau:.6g}")
    lo, hi = math.sqrt(1.0 - alpha), math.sqrt(1.0 + alpha)
    f_lo, f_hi = ss_cubic(lo, alpha, tau), ss_cubic(hi, alpha, tau)
    # for small alpha the cubic can still be positive at sqrt(1 + alpha); -R^3 wins eventually
    for _ in range(60):
        if not (f_lo >= 0.0 and f_hi >= 0.0 and math.isfinite(f_hi)):
            break
        hi *= 2.0
        f_hi = ss_cubic(hi, alpha, tau)
    if not (f_lo >= 0.0 > f_hi):
        raise BracketError(f"cubic has no sign change on [{lo:.6g}, {hi:.6g}]")
    if f_lo == 0.0:
        return lo
    return float(bisect(ss_cubic, lo, hi, args=(alpha, tau), xtol=1e-14, rtol=4 * np.finfo(float).eps,
                        maxiter=200))


def ss_sum_region_bound(alpha: float) -> float:
    """Upper delay bound log((1 + sqrt(1 - a^2)) / a) / sqrt(1 - a^2) of the stability region."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    r = math.sqrt((1.0 - alpha) * (1.0 + alpha))
    return math.log((1.0 + r) / alpha) / r


def mg_lambda(p: MackeyGlassParams) -> float:
    return 0.5 * p.tau * p.beta * ((p.kappa - 1.0) ** 2 / (4.0 * p.kappa) + 1.0)


def mackey_glass_system(p: MackeyGlassParams, lambda_bound: float | None = None) -> LinearDelaySystem:
    """-tau gamma x(t) + (tau beta - Lambda) x(t - 1) with C phi = phi(-1), B = 1."""
    lam = mg_lambda(p) if lambda_bound is None else float(lambda_bound)
    return LinearDelaySystem(a0=-p.tau * p.gamma, a1=p.tau * p.beta - lam, tau=1.0, tau0=1.0,
                             b_tilde=1.0, lambda_bound=lam,
                             constraint_kind=ConstraintKind.NORM_BOUND)


def mg_nonlinearity(y, kappa: float):
    y = np.asarray(y, dtype=float)
    return y / (1.0 + np.abs(y) ** kappa)


def mg_equilibrium(gamma: float, beta: float, kappa: float) -> float:
    if beta <= gamma:
        raise DomainError("need beta > gamma for a nontrivial equilibrium")
    return (beta / gamma - 1.0) ** (1.0 / kappa)


def mg_equilibrium_slope(gamma: float, beta: float, kappa: float) -> float:
    """f'(y*) at the positive equilibrium y* = (beta/gamma - 1)^(1/kappa)."""
    if beta <= gamma:
        raise DomainError("need beta > gamma for a nontrivial equilibrium")
    r = beta / gamma
    return (1.0 + (1.0 - kappa) * (r - 1.0)) / (r * r)


def mg_paper_tau0() -> float:
    """The printed delay estimate arccos(-1/4) / (0.4 (1 - 1/16))."""
    return math.acos(-0.25) / (0.4 * (1.0 - 1.0 / 16.0))


def _unstable(gamma, b, tau):
    sys = LinearDelaySystem(a0=-gamma, a1=b, tau=tau)
    top = sys.a0 + abs(sys.a1) + 1.0
    im = abs(sys.a0) + abs(sys.a1) + 1.0
    try:
        return count_roots_in(sys, Box(0.0, top, im)) > 0
    except BoundaryError:
        return count_roots_in(sys, Box(1e-7, top, im)) > 0


def hopf_crossing_delay(gamma: float, b: float, tau_max: float = 100.0, tol: float = 1e-8) -> float:
    """Smallest delay at which x' = -gamma x + b x(t - tau) gains a root with Re >= 0."""
    if not b < -gamma:
        raise DomainError(f"a crossing needs b < -gamma (b={b}, gamma={gamma})")
    step = 0.05
    lo = step
    if _unstable(gamma, b, lo):
        raise NotFoundError("already unstable at the smallest scanned delay")
    hi = None
    t = lo
    while t < tau_max:
        t2 = min(t + step, tau_max)
        if _unstable(gamma, b, t2):
            lo, hi = t, t2
            break
        t = t2
    if hi is None:
        raise NotFoundError(f"no stability loss for tau <= {tau_max}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _unstable(gamma, b, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def mg_hopf_crossing_delay(gamma: float, beta: float, kappa: float, **kw) -> float:
    """Delay at which the equilibrium linearisation -gamma x + beta f'(y*) x(t - tau) loses stability."""
    b = beta * mg_equilibrium_slope(gamma, beta, kappa)
    return hopf_crossing_delay(gamma, b, **kw)


MODEL_FAMILIES = ("suarez-schopf", "mackey-glass")


def build_system(model: str, *, radius="auto", lambda_bound: float | None = None,
                 **params) -> LinearDelaySystem:
    """System for a named family; ``radius`` ("auto" or a number) applies to Suarez-Schopf."""
    if model == "suarez-schopf":
        alpha, tau = _take(params, "alpha"), _take(params, "tau")
        R = params.pop("R", None)
        if R is None:
            R = ss_attractor_radius(alpha, tau) if radius in (None, "auto") else float(radius)
        _reject_extra(params)
        return suarez_schopf_system(SuarezSchopfParams(alpha, tau, float(R)), lambda_bound)
    if model == "mackey-glass":
        p = MackeyGlassParams(_take(params, "gamma"), _take(params, "beta"),
                              _take(params, "kappa"), _take(params, "tau"))
        _reject_extra(params)
        return mackey_glass_system(p, lambda_bound)
    raise DomainError(f"unknown model {model!r}; expected one of {MODEL_FAMILIES}")


def _reject_extra(params):
    if params:
        raise DomainError(f"unexpected model parameters: {sorted(params)}")


def _take(params, name):
    if params.get(name) is None:
        raise DomainError(f"missing model parameter {name!r}")
    return float(params.pop(name))
