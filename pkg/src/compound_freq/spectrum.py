"""Characteristic roots of  p - a0 - a1 exp(-p tau) = 0.

Roots are located by Newton's method from a lattice of seeds and audited by
an argument-principle count on the boundary of the search rectangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dde import LinearDelaySystem
from .errors import (BoundaryError, IncompleteSpectrumError, InsufficientSpectrumError,
                     NumericError, VerificationError)

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 100
DEDUPE = 1e-8
BOUNDARY_TOL = 1e-8
MAX_REFINE = 3


@dataclass(frozen=True)
class Box:
    re_min: float
    re_max: float
    im_max: float

    def contains(self, z: complex) -> bool:
        return self.re_min < z.real < self.re_max and abs(z.imag) < self.im_max

    def as_dict(self) -> dict:
        return {"re_min": self.re_min, "re_max": self.re_max, "im_max": self.im_max}


@dataclass(frozen=True)
class Spectrum:
    """Roots inside ``search_box``, leading first.

    ``complete`` is set when the listed roots are provably all roots of the
    equation (only for a1 == 0, where there is exactly one).
    """

    roots: tuple[complex, ...]
    search_box: Box
    verified_count: int
    complete: bool = False
    certified: int = field(default=0)

    def leading(self, count: int) -> list[complex]:
        return list(self.roots[:count])

    def as_dict(self) -> dict:
        return {
            "roots": [{"re": z.real, "im": z.imag} for z in self.roots],
            "search_box": self.search_box.as_dict(),
            "verified_count": self.verified_count,
        }


def characteristic_value(sys: LinearDelaySystem, p):
    """a0 + a1 exp(-p tau) - p (vectorised over p)."""
    p = np.asarray(p, dtype=complex)
    out = sys.a0 + sys.a1 * np.exp(-p * sys.tau) - p
    return complex(out) if out.ndim == 0 else out


def _derivative(sys, p):
    return -sys.a1 * sys.tau * np.exp(-p * sys.tau) - 1.0


def real_part_bound(sys: LinearDelaySystem) -> float:
    """Largest x with x - a0 = |a1| exp(-x tau); every root has Re p <= x."""
    a0, a1 = sys.a0, abs(sys.a1)
    if a1 == 0.0:
        return a0
    hi = a0 + a1 * math.exp(min(max(-a0 * sys.tau, 0.0), 700.0))
    g = lambda x: x - a0 - a1 * math.exp(-x * sys.tau)
    return float(brentq(g, a0, hi, xtol=1e-12)) if g(hi) > 0 else hi


def default_box(sys: LinearDelaySystem) -> Box:
    a0, a1 = sys.a0, abs(sys.a1)
    top = real_part_bound(sys)
    return Box(min(-(abs(a0) + a1 + 5.0), top - 5.0), top + 1.0, max(20.0, 4.0 * math.pi / sys.tau))


def sort_roots(roots) -> list[complex]:
    return sorted(roots, key=lambda z: (-z.real, abs(z.imag), z.imag < 0))


def _newton(sys, seeds):
    z = np.asarray(seeds, dtype=complex).copy()
    done = np.zeros(z.shape, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(NEWTON_MAXIT):
            f = characteristic_value(sys, z)
            step = f / _derivative(sys, z)
            z = np.where(done, z, z - step)
            done |= np.abs(step) <= NEWTON_TOL * (1.0 + np.abs(z))
            done &= np.isfinite(z)
            if done.all():
                break
        # polish: a few extra steps do not hurt converged points
        for _ in range(2):
            ok = np.isfinite(z)
            zz = np.where(ok, z, 0)
            z = np.where(ok, zz - characteristic_value(sys, zz) / _derivative(sys, zz), z)
    good = np.isfinite(z)
    res = np.full(z.shape, np.inf)
    res[good] = np.abs(characteristic_value(sys, z[good]))
    good &= res < 1e-10 * (1.0 + np.abs(z))
    return z[good]


def _dedupe(roots):
    out: list[complex] = []
    for z in sorted(roots, key=lambda w: (w.real, w.imag)):
        if all(abs(z - w) > DEDUPE * (1.0 + abs(z)) for w in out):
            out.append(complex(z))
    return out


def _seed_lattice(sys, box, refine):
    d_re = 0.5 / 2**refine
    d_im = min(1.0, math.pi / sys.tau) / 2**refine
    re = np.arange(box.re_min, box.re_max + d_re, d_re)
    im = np.arange(0.0, box.im_max + d_im, d_im)
    return (re[:, None] + 1j * im[None, :]).ravel()


def _find_in_box(sys, box, refine):
    found = _newton(sys, _seed_lattice(sys, box, refine))
    # the equation has real coefficients: close the set under conjugation
    found = np.concatenate([found, np.conj(found)])
    roots = [z for z in _dedupe(found) if box.contains(z)]
    # snap nearly-real roots onto the axis so conjugate pairs do not double count
    roots = [complex(z.real, 0.0) if abs(z.imag) < DEDUPE * (1 + abs(z)) else z for z in roots]
    return sort_roots(_dedupe(roots))


def count_roots_in(sys: LinearDelaySystem, box: Box, max_samples: int = 400_000) -> int:
    """Winding number of the characteristic function around ``box`` (counter-clockwise)."""
    corners = [complex(box.re_min, -box.im_max), complex(box.re_max, -box.im_max),
               complex(box.re_max, box.im_max), complex(box.re_min, box.im_max)]
    total = 0.0
    used = 0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        n0 = max(64, int(abs(b - a) * max(4.0, 4.0 * sys.tau)))
        s = np.linspace(0.0, 1.0, n0 + 1)
        while True:
            z = a + (b - a) * s
            f = characteristic_value(sys, z)
            if np.any(np.abs(f) < BOUNDARY_TOL):
                raise BoundaryError(f"characteristic function vanishes near the contour at "
                                    f"{z[np.argmin(np.abs(f))]:.6g}")
            dphi = np.angle(f[1:] / f[:-1])
            bad = np.abs(dphi) >= math.pi / 2
            if not bad.any():
                break
            mids = 0.5 * (s[:-1][bad] + s[1:][bad])
            s = np.sort(np.concatenate([s, mids]))
            if len(s) > max_samples:
                raise NumericError("argument-principle contour refinement exceeded the sample budget")
        used += len(s)
        total += dphi.sum()
    return int(round(total / (2.0 * math.pi)))


def _certified_leading(sys, roots, box):
    """How many leading roots are provably the leading roots of the whole equation.

    A root with Re = x satisfies |Im| <= |p - a0| = |a1| exp(-x tau), so every
    root with real part >= x lies in the box once that bound is below im_max
    and x > re_min.
    """
    n = 0
    for z in roots:
        if z.real <= box.re_min:
            break
        if abs(sys.a1) * math.exp(-z.real * sys.tau) >= box.im_max:
            break
        n += 1
    return n


def leading_roots(sys: LinearDelaySystem, count: int = 2, box: Box | None = None) -> Spectrum:
    """Roots inside ``box`` (default: ``default_box``), Newton-found and count-verified."""
    if count < 1:
        raise ValueError("count must be >= 1")
    box = box or default_box(sys)
    complete = sys.a1 == 0.0
    roots: list[complex] = []
    counted = -1
    for refine in range(MAX_REFINE + 1):
        roots = _find_in_box(sys, box, refine)
        counted = count_roots_in(sys, box)
        if counted == len(roots):
            break
    else:
        raise VerificationError(f"Newton found {len(roots)} roots but the argument principle "
                                f"counts {counted}", found=len(roots), counted=counted,
                                partial=roots)
    certified = len(roots) if complete else _certified_leading(sys, roots, box)
    spec = Spectrum(tuple(roots), box, counted, complete, certified)
    if len(roots) < count and not complete:
        raise IncompleteSpectrumError(f"only {len(roots)} roots found in the search box, "
                                      f"{count} requested", partial=spec)
    return spec


def compound_spectral_bound(spec: Spectrum, m: int) -> float:
    """Sum of the real parts of the m leading roots; -inf when fewer than m roots exist."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(spec.roots) < m:
        if spec.complete:
            return -math.inf
        raise InsufficientSpectrumError(f"{len(spec.roots)} roots known, {m} needed, and the "
                                        "search box is not known to contain the whole spectrum")
    if not spec.complete and spec.certified < m:
        raise InsufficientSpectrumError(f"only {spec.certified} leading roots are certified; "
                                        f"enlarge the search box to cover {m}")
    return float(sum(z.real for z in spec.roots[:m]))
