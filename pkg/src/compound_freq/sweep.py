"""Frequency sweeps, verdicts, convergence tables and parameter scans."""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path as FsPath
from typing import Callable, Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .dde import ConstraintKind, LinearDelaySystem
from .errors import CompoundFreqError
from .scheme import (KernelTable, Path, SchemeConfig, SchemeTables, TailGap, alpha_of, build_WTN,
                     solve_tables, tail_gap)
from .spectrum import compound_spectral_bound, leading_roots

NEAR_THRESHOLD_BAND = 0.05
STABILIZED = 1e-2


class Verdict(str, Enum):
    SATISFIED = "Satisfied"
    VIOLATED = "Violated"
    PRECONDITION_FAILED = "PreconditionFailed"


@dataclass(frozen=True)
class Precondition:
    ok: bool
    spectral_bound: float
    leading_roots: tuple = ()


def check_precondition(sys: LinearDelaySystem, cfg: SchemeConfig) -> Precondition:
    """-nu0 must exceed the sum of the m leading real parts."""
    spec = leading_roots(sys, count=cfg.m)
    bound = compound_spectral_bound(spec, cfg.m)
    return Precondition(-cfg.nu0 > bound, bound, tuple(spec.leading(cfg.m)))


def omega_grid(cfg: SchemeConfig) -> np.ndarray:
    """Non-negative frequencies 0, step, ..., Omega."""
    n = int(math.floor(cfg.Omega / cfg.omega_step + 1e-9))
    return cfg.omega_step * np.arange(n + 1)


@dataclass
class FrequencySweepReport:
    omegas: np.ndarray
    alphas: np.ndarray
    threshold: float
    verdict: Verdict
    margin: float
    spectral_bound: float
    nu0: float
    constraint_kind: ConstraintKind
    near_threshold: bool = False
    argmax_omega: float = math.nan
    extreme_alpha: float = math.nan
    tail: TailGap | None = None
    outer_band_max: float = math.nan
    symmetry_defect: float | None = None
    leading_roots: tuple = ()
    system: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def tail_gap_at_argmax(self) -> float:
        return self.tail.gap if self.tail is not None else math.nan

    @property
    def curve_threshold(self) -> float:
        """Level the curve is compared with: 1/Lambda, or -1/Lambda for the sector form."""
        return self.threshold if self.constraint_kind is ConstraintKind.NORM_BOUND else -self.threshold

    def as_dict(self, curve: bool = True, timings: bool = True) -> dict:
        d = {
            "verdict": self.verdict.value,
            "margin": self.margin,
            "near_threshold": self.near_threshold,
            "threshold": self.threshold,
            "constraint_kind": self.constraint_kind.value,
            "spectral_bound": self.spectral_bound,
            "nu0": self.nu0,
            "leading_roots": [{"re": z.real, "im": z.imag} for z in self.leading_roots],
            "argmax_omega": self.argmax_omega,
            "extreme_alpha": self.extreme_alpha,
            "tail_gap_at_argmax": self.tail_gap_at_argmax,
            "tail": self.tail.as_dict() if self.tail is not None else None,
            "outer_band_max": self.outer_band_max,
            "symmetry_defect": self.symmetry_defect,
            "system": self.system,
            "config": self.config,
            "grid": self.grid,
        }
        if curve:
            d["omegas"] = self.omegas.tolist()
            d["alphas"] = self.alphas.tolist()
        if timings:
            d["timings"] = self.timings
        return d

    def to_json(self, path, **kw) -> None:
        with open(path, "w") as fh:
            json.dump(_jsonable(self.as_dict(**kw)), fh, indent=2)

    def write_csv(self, path) -> None:
        write_curve_csv(path, self.omegas, self.alphas, self.curve_threshold)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, Enum):
        return obj.value
    return obj


def write_curve_csv(path, omegas, alphas, threshold) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "alpha", "threshold"])
        for om, a in zip(omegas, alphas):
            w.writerow([f"{om:.17g}", f"{a:.17g}", f"{threshold:.17g}"])


def _alphas(sys, cfg, ps, tables, progress):
    if cfg.path is Path.PAPER:
        Ws = np.array([build_WTN(sys, cfg, p, tables) for p in ps])
    else:
        kernel = KernelTable(sys, cfg, tables)
        Ws = kernel.matrices(ps, progress)
    return np.asarray(alpha_of(Ws, sys.constraint_kind), dtype=float)


def frequency_sweep(sys: LinearDelaySystem, cfg: SchemeConfig, tables: SchemeTables | None = None,
                    progress: Callable | None = None, threads: int | None = None,
                    with_tail: bool = True) -> FrequencySweepReport:
    """alpha_{T,N}(-nu0 + i omega) over omega in [-Omega, Omega] and the resulting verdict."""
    timings: dict = {}
    t0 = time.perf_counter()
    pre = check_precondition(sys, cfg)
    timings["spectrum"] = time.perf_counter() - t0
    grid = cfg.grid(sys)
    common = dict(threshold=sys.threshold, spectral_bound=pre.spectral_bound, nu0=cfg.nu0,
                  constraint_kind=sys.constraint_kind, leading_roots=pre.leading_roots,
                  system=sys.as_dict(), config=cfg.as_dict(), grid=grid.as_dict())
    if not pre.ok:
        return FrequencySweepReport(np.zeros(0), np.zeros(0), verdict=Verdict.PRECONDITION_FAILED,
                                    margin=math.nan, timings=timings, **common)

    limits = threadpool_limits(limits=threads) if threads else _null_context()
    with limits:
        t0 = time.perf_counter()
        if tables is None:
            tables = solve_tables(sys, cfg, grid)
        timings["integration"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        pos = omega_grid(cfg)
        if cfg.mirror:
            a_pos = _alphas(sys, cfg, -cfg.nu0 + 1j * pos, tables, progress)
            omegas = np.concatenate([-pos[:0:-1], pos])
            alphas = np.concatenate([a_pos[:0:-1], a_pos])
            defect = None
        else:
            omegas = np.concatenate([-pos[:0:-1], pos])
            alphas = _alphas(sys, cfg, -cfg.nu0 + 1j * omegas, tables, progress)
            n = len(pos) - 1
            a_neg, a_pos = alphas[:n + 1][::-1], alphas[n:]
            scale = np.maximum(np.abs(a_pos), np.finfo(float).tiny)
            defect = float(np.max(np.abs(a_pos - a_neg) / scale))
        timings["sweep"] = time.perf_counter() - t0

        if sys.constraint_kind is ConstraintKind.NORM_BOUND:
            i_ext = int(np.argmax(alphas))
            margin = sys.threshold - float(alphas[i_ext])
        else:
            i_ext = int(np.argmin(alphas))
            margin = float(alphas[i_ext]) + sys.threshold
        verdict = Verdict.SATISFIED if margin > 0 else Verdict.VIOLATED
        near = bool(0 < margin < NEAR_THRESHOLD_BAND * sys.threshold)
        band = np.abs(omegas) >= 0.5 * cfg.Omega - 1e-12
        outer = float(np.max(alphas[band])) if band.any() else math.nan

        tail = None
        if with_tail and grid.T >= 2.0:
            t0 = time.perf_counter()
            # the diagnostic is evaluated on the fast path; both paths share weights
            tail = tail_gap(sys, cfg.replace(path=Path.FAST), -cfg.nu0 + 1j * abs(omegas[i_ext]),
                            tables, grid)
            timings["tail_gap"] = time.perf_counter() - t0

    return FrequencySweepReport(omegas, alphas, verdict=verdict, margin=margin, near_threshold=near,
                                argmax_omega=float(omegas[i_ext]), extreme_alpha=float(alphas[i_ext]),
                                tail=tail, outer_band_max=outer, symmetry_defect=defect,
                                timings=timings, **common)


class _null_context:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


@dataclass(frozen=True)
class ConvergenceRow:
    vary: str
    N_from: int
    N_to: int
    T_from: float
    T_to: float
    sup_diff: float
    stabilized: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def convergence_report(sys: LinearDelaySystem, cfg: SchemeConfig, Ns: Sequence[int],
                       Ts: Sequence[float], progress: Callable | None = None) -> list[ConvergenceRow]:
    """Sup-norm differences between curves for consecutive N (fixed T) and consecutive T (fixed N).

    Solutions are integrated once for the largest N and T; smaller runs use
    the leading part of the same tables.
    """
    Ns, Ts = list(Ns), list(Ts)
    if not Ns or not Ts:
        raise ValueError("Ns and Ts must be non-empty")
    if Ns != sorted(Ns) or Ts != sorted(Ts):
        raise ValueError("Ns and Ts must be ascending")
    big = cfg.replace(N=max(Ns), T=max(Ts))
    tables = solve_tables(sys, big)
    curves = {}
    for N, T in itertools.product(Ns, Ts):
        if progress:
            progress(N, T)
        rep = frequency_sweep(sys, cfg.replace(N=N, T=T), tables=tables, with_tail=False)
        curves[N, T] = rep.alphas
    rows = []
    for T in Ts:
        for N1, N2 in zip(Ns, Ns[1:]):
            d = _sup(curves[N1, T], curves[N2, T])
            rows.append(ConvergenceRow("N", N1, N2, T, T, d, d < STABILIZED))
    for N in Ns:
        for T1, T2 in zip(Ts, Ts[1:]):
            d = _sup(curves[N, T1], curves[N, T2])
            rows.append(ConvergenceRow("T", N, N, T1, T2, d, d < STABILIZED))
    return rows


def _sup(a, b):
    if len(a) == 0 or len(b) == 0:
        return math.nan
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


@dataclass(frozen=True)
class ScanPoint:
    params: dict
    status: str              # a Verdict value, "Skipped" or "Error"
    margin: float = math.nan
    near_threshold: bool = False
    reason: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def region_scan(model_family: str, param_grid: Iterable[dict], cfg: SchemeConfig,
                progress: Callable | None = None) -> list[ScanPoint]:
    """Independent sweeps over a grid of model parameters; failures are recorded, not raised."""
    from .models import build_system

    out = []
    for params in param_grid:
        params = dict(params)
        if progress:
            progress(params)
        try:
            sys = build_system(model_family, **params)
        except CompoundFreqError as exc:
            out.append(ScanPoint(params, "Skipped", reason=f"{type(exc).__name__}: {exc}"))
            continue
        try:
            rep = frequency_sweep(sys, cfg, with_tail=False)
        except CompoundFreqError as exc:
            out.append(ScanPoint(params, "Error", reason=f"{type(exc).__name__}: {exc}"))
            continue
        out.append(ScanPoint(params, rep.verdict.value, rep.margin, rep.near_threshold))
    return out
