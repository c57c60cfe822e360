"""Finite-rank, finite-horizon approximation W_{T,N}(p) of the compound transfer operator.

For the m-fold compound of  x' = a0 x(t) + a1 x(t - tau)  with measurement
phi -> phi(-tau0) and control gain b_tilde, the kernel is

    M1_k(theta) = int_0^T e^{-pt} (1/m!) det[x_a(t + vartheta_b)] dt,

with rows a = (k_1, ..., k_{m-1}, fundamental) and columns
vartheta = (-tau0, theta_1, ..., theta_{m-1}).  The matrix is

    W[l, k] = m * int M1_k(theta) conj(U1_l(theta)) dtheta,
    U1_l = m^{-1/2} det[phi_{l_a}(theta_b)] / sqrt((m-1)!).

Two evaluation paths share one set of quadrature weights:

* PAPER evaluates M1 on the theta grid and then integrates against U1.
* FAST swaps the two sums (finite Fubini).  The inner theta sums do not depend
  on p and are computed once per solution with an FFT correlation plus sparse
  corrections near breakpoints, after which every p costs one matrix product.

For m = 2 the t-rule of each term is split at the jump of the fundamental
solution and at the kinks it propagates, so the two terms of the 2x2
determinant carry different t-weights.  For m >= 3 (experimental) a plain
Simpson rule is used in t and the FAST path relies on the discrete Andreief
identity.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.signal import fftconvolve

from .dde import (ConstraintKind, LinearDelaySystem, SolutionTable, aligned_step, fourier_mode,
                  solution_bundle, steps_in)
from .errors import ConfigurationError, ContractError, DomainError
from .linalg import hermitian_symmetrize, largest_singular_value, smallest_hermitian_eigenvalue
from .quadrature import UNIT, piecewise_units, simpson_units


class Path(str, Enum):
    PAPER = "paper"
    FAST = "fast"


@dataclass(frozen=True)
class SchemeConfig:
    m: int = 2
    N: int = 30
    T: float = 15.0
    Omega: float = 30.0
    nu0: float = 0.01
    omega_step: float = 0.05
    h: float | None = None
    theta_stride: int | None = None
    path: Path = Path.FAST
    mirror: bool = True
    experimental: bool = False

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if self.m < 1:
            raise ConfigurationError(f"m must be >= 1, got {self.m}")
        if self.m >= 3 and not self.experimental:
            raise ConfigurationError("m >= 3 is experimental; enable it explicitly")
        if self.N < 0:
            raise ConfigurationError(f"N must be >= 0, got {self.N}")
        for name in ("T", "Omega", "omega_step"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive, got {v}")
        if not math.isfinite(self.nu0):
            raise ConfigurationError("nu0 must be finite")
        if self.h is not None and not self.h > 0:
            raise ConfigurationError(f"h must be positive, got {self.h}")
        if self.theta_stride is not None and self.theta_stride < 1:
            raise ConfigurationError(f"theta_stride must be >= 1, got {self.theta_stride}")

    def replace(self, **kw) -> "SchemeConfig":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["path"] = self.path.value
        return d

    def grid(self, sys: LinearDelaySystem) -> "Grid":
        h = self.h if self.h is not None else aligned_step(sys.tau)
        n_tau = steps_in(sys.tau, h, "delay")
        n0 = steps_in(sys.tau0, h, "measurement delay")
        # horizon snapped to an even number of steps (Simpson parity)
        n_T = max(2, 2 * round(self.T / (2.0 * h)))
        stride = self.theta_stride or _default_stride(n_tau, self.m)
        return Grid(sys.tau, h, n_tau, n0, n_T, stride, self.m, propagating=sys.a1 != 0.0)


def _default_stride(n_tau: int, m: int) -> int:
    if m <= 2:
        return 1
    # coarse theta grid for the experimental orders: about 8 intervals
    best = 1
    for d in range(1, n_tau + 1):
        if n_tau % d == 0 and (n_tau // d) % 2 == 0 and n_tau // d >= 8:
            best = d
    return best


@dataclass(frozen=True)
class Grid:
    """Delay-aligned node layout: t_i = i h on [0, T], theta_j = -tau + j stride h."""

    tau: float
    h: float
    n_tau: int
    n0: int
    n_T: int
    stride: int
    m: int = 2
    propagating: bool = True   # a1 != 0: kinks repeat every tau with one more derivative

    def __post_init__(self):
        if self.n_T % 2:
            raise ConfigurationError(f"t-grid needs an even number of intervals, got {self.n_T}")
        if self.m >= 2:
            if self.n_tau % self.stride:
                raise ConfigurationError(f"theta_stride {self.stride} does not divide tau/h = {self.n_tau}")
            if (self.n_tau // self.stride) % 2:
                raise ConfigurationError(f"theta-grid needs an even number of intervals, "
                                         f"got {self.n_tau // self.stride}")

    @property
    def n_theta(self) -> int:
        return self.n_tau // self.stride

    @property
    def T(self) -> float:
        return self.n_T * self.h

    @property
    def t(self) -> np.ndarray:
        return self.h * np.arange(self.n_T + 1)

    @property
    def theta(self) -> np.ndarray:
        return -self.tau + self.stride * self.h * np.arange(self.n_theta + 1)

    def with_n_T(self, n_T: int) -> "Grid":
        return dataclasses.replace(self, n_T=n_T)

    def theta_weights(self) -> np.ndarray:
        """Simpson in theta, split at theta = -tau0 when that is a grid point."""
        splits = []
        if (self.n_tau - self.n0) % self.stride == 0:
            splits.append((self.n_tau - self.n0) // self.stride)
        return piecewise_units(self.n_theta, 0, self.n_theta, splits) * (self.stride * self.h / UNIT)

    def base_units(self) -> np.ndarray:
        return simpson_units(self.n_T)

    def _chain(self, origin: int, first: int) -> dict[int, int]:
        """Kinks origin + n n_tau with smoothness order first + n (-1 = jump, 0 = C0, ...)."""
        pts = {}
        for n, q in enumerate(range(origin, self.n_T + 1, self.n_tau)):
            if n and not self.propagating:
                break
            pts[q] = first + n
        return pts

    def _edges(self, start: int, chains) -> list[int]:
        """Piece boundaries from ``start`` to n_T at the kinks of a product.

        A cut one cell from another edge would force a trapezoid cell; the
        smoother of the two cuts is dropped instead (only C1-or-better cuts).
        """
        order: dict[int, int] = {}
        for chain in chains:
            for q, o in chain.items():
                order[q] = min(o, order.get(q, o))
        start = min(start, self.n_T)
        cuts = sorted(q for q in order if start < q < self.n_T)
        while True:
            edges = [start, *cuts, self.n_T]
            drop = None
            for a, b in zip(edges[:-1], edges[1:]):
                if b - a != 1:
                    continue
                cand = [q for q in (a, b) if q in cuts and order[q] >= 1]
                if cand:
                    drop = max(cand, key=lambda q: (order[q], q))
                    break
            if drop is None:
                return edges
            cuts.remove(drop)

    def _units(self, edges) -> np.ndarray:
        return piecewise_units(self.n_T, edges[0], edges[-1], edges[1:-1])

    @staticmethod
    def _cells(edges) -> list[int]:
        """Left nodes of pieces that are a single cell long (trapezoid pieces)."""
        return [a for a, b in zip(edges[:-1], edges[1:]) if b - a == 1]

    def _term_edges(self, j: int):
        s_j = self.n_tau - j * self.stride
        e_a = self._edges(s_j, [self._chain(s_j, -1), self._chain(self.n0, 0)])
        e_b = self._edges(self.n0, [self._chain(s_j, 0), self._chain(self.n0, -1)])
        return e_a, e_b

    def term_units(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """t-weights (units of h/24) of the two determinant terms at theta_j, m = 2.

        Term A holds x_k(t - tau0) x_inf(t + theta_j) (support t >= -theta_j),
        term B holds x_k(t + theta_j) x_inf(t - tau0) (support t >= tau0).
        Each is split wherever either factor has a kink.
        """
        e_a, e_b = self._term_edges(j)
        return self._units(e_a), self._units(e_b)

    def term_cells(self, j: int) -> tuple[list[int], list[int]]:
        e_a, e_b = self._term_edges(j)
        return self._cells(e_a), self._cells(e_b)

    def _fundamental_edges(self):
        return self._edges(self.n0, [self._chain(self.n0, -1)])

    def fundamental_units(self) -> np.ndarray:
        """t-weights for m = 1: support t >= tau0, kinks at tau0 + n tau."""
        return self._units(self._fundamental_edges())

    def fundamental_cells(self) -> list[int]:
        return self._cells(self._fundamental_edges())

    def as_dict(self) -> dict:
        return {"h": self.h, "n_tau": self.n_tau, "n0": self.n0, "n_T": self.n_T, "T": self.T,
                "theta_stride": self.stride, "n_theta": self.n_theta}


def multi_indices(N: int, m: int) -> list[tuple[int, ...]]:
    """Increasing (m-1)-tuples from {-N..N} in lexicographic order."""
    return list(itertools.combinations(range(-N, N + 1), m - 1))


@dataclass(frozen=True)
class SchemeTables:
    basis: dict
    fundamental: SolutionTable

    def get(self, k) -> SolutionTable:
        if k == "fundamental":
            return self.fundamental
        try:
            return self.basis[k]
        except KeyError:
            raise ContractError(f"no solution table for basis index {k}") from None


def solve_tables(sys: LinearDelaySystem, cfg: SchemeConfig, grid: Grid | None = None) -> SchemeTables:
    grid = grid or cfg.grid(sys)
    basis, fund = solution_bundle(sys, range(-cfg.N, cfg.N + 1), cfg.m, grid.n_T * grid.h, grid.h)
    return SchemeTables(basis, fund)


def _node_values(table: SolutionTable, grid: Grid) -> np.ndarray:
    if table.n_tau != grid.n_tau or abs(table.h - grid.h) > 1e-12 * grid.h:
        raise ContractError("solution table grid does not match the scheme grid")
    if table.n_T < grid.n_T:
        raise ContractError(f"solution table covers {table.T} < T = {grid.T}")
    return table.values[: grid.n_tau + grid.n_T + 1]


def _delayed(values: np.ndarray, grid: Grid) -> np.ndarray:
    """x(t_i - tau0) for i = 0..n_T."""
    start = grid.n_tau - grid.n0
    return values[start: start + grid.n_T + 1]


def _theta_basis(N: int, grid: Grid) -> np.ndarray:
    """conj(phi_l(theta_j)) for l = -N..N (rows)."""
    th = grid.theta
    return np.array([np.conj(fourier_mode(l, grid.tau)(th)) for l in range(-N, N + 1)])


# ---------------------------------------------------------------------------
# pointwise building blocks


def wedge_eval(tables: Sequence[SolutionTable], t: float, thetas: Sequence[float]) -> complex:
    """(1/m!) det[x_i(t + theta_j)] for m tables and m shifts.

    Columns are put in a canonical order first, so transposing two shifts
    negates the result exactly.
    """
    m = len(tables)
    if len(thetas) != m:
        raise ContractError("wedge_eval needs as many shifts as tables")
    order = sorted(range(m), key=lambda j: thetas[j])
    sign = _perm_sign(order)
    M = np.array([[tab.eval(t + thetas[j]) for j in order] for tab in tables], dtype=complex)
    if m == 1:
        det = M[0, 0]
    elif m == 2:
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    else:
        det = np.linalg.det(M)
    return complex(sign * det / math.factorial(m))


def _perm_sign(order) -> int:
    sign = 1
    seen = [False] * len(order)
    for i in range(len(order)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


class CellCorrection:
    """Simpson half-step correction on single-cell pieces.

    A piece one cell long only has its two end nodes, so the node weights
    fall back to the trapezoid rule there.  This adds
    (2h/3) (f(mid) - (f(a) + f(b)) / 2), with the midpoint value taken from
    the Hermite dense output, turning the cell into Simpson's rule.  Rows
    are control indices, columns theta nodes (m = 2) or a single column (m = 1).
    """

    def __init__(self, grid: Grid, tables: SchemeTables, cfg: SchemeConfig):
        self.grid = grid
        self.m = cfg.m
        h = grid.h
        fund = tables.fundamental
        fvals = _node_values(fund, grid)
        cols, signs, times, prods = [], [], [], []
        if cfg.m == 1:
            for a in grid.fundamental_cells():
                t3 = h * np.array([a, a + 0.5, a + 1])
                f = np.array([fvals[grid.n_tau - grid.n0 + a], fund.eval(t3[1] - grid.n0 * h),
                              fvals[grid.n_tau - grid.n0 + a + 1]])
                cols.append(0), signs.append(1.0), times.append(t3), prods.append(f[None, :])
        elif cfg.m == 2:
            ks = list(range(-cfg.N, cfg.N + 1))
            tabs = [tables.get(k) for k in ks]
            vals = np.array([_node_values(t, grid) for t in tabs])
            d0 = grid.n_tau - grid.n0
            for j in range(grid.n_theta + 1):
                off = j * grid.stride
                th = grid.theta[j]
                cells_a, cells_b = grid.term_cells(j)
                for sign, cells in ((1.0, cells_a), (-1.0, cells_b)):
                    for a in cells:
                        t3 = h * np.array([a, a + 0.5, a + 1])
                        tm = t3[1]
                        if sign > 0:     # x_k(t - tau0) x_inf(t + theta_j)
                            xk = np.column_stack([vals[:, d0 + a], [t.eval(tm - grid.n0 * h) for t in tabs],
                                                  vals[:, d0 + a + 1]])
                            xf = np.array([fvals[off + a], fund.eval(tm + th), fvals[off + a + 1]])
                        else:            # x_k(t + theta_j) x_inf(t - tau0)
                            xk = np.column_stack([vals[:, off + a], [t.eval(tm + th) for t in tabs],
                                                  vals[:, off + a + 1]])
                            xf = np.array([fvals[d0 + a], fund.eval(tm - grid.n0 * h), fvals[d0 + a + 1]])
                        cols.append(j), signs.append(sign), times.append(t3), prods.append(xk * xf[None, :])
        self.cols = np.array(cols, dtype=int)
        self.times = np.array(times).reshape(-1, 3)
        coef = (2.0 * h / 3.0) * np.array([-0.5, 1.0, -0.5]) / math.factorial(cfg.m)
        self.coef = np.array(signs)[:, None] * coef[None, :]
        self.prods = np.array(prods) if prods else np.zeros((0, 1, 3), dtype=complex)

    def __len__(self) -> int:
        return len(self.cols)

    def contributions(self, ps) -> np.ndarray:
        """Per-cell kernel increments, shape (len(ps), cells, rows)."""
        ps = np.atleast_1d(np.asarray(ps, dtype=complex))
        D = np.exp(-ps[:, None, None] * self.times[None]) * self.coef[None]
        return np.einsum("prq,rkq->prk", D, self.prods)

    def kernel_delta(self, p: complex, shape) -> np.ndarray:
        out = np.zeros(shape, dtype=complex)
        if len(self):
            c = self.contributions([p])[0]                 # (cells, rows)
            np.add.at(out.T, self.cols, c)
        return out


def _exp_weights(p: complex, grid: Grid) -> np.ndarray:
    return np.exp(-p * grid.t)


def measurement_kernel(sys: LinearDelaySystem, cfg: SchemeConfig, p: complex,
                       tables: SchemeTables, grid: Grid | None = None) -> np.ndarray:
    """M1 sampled on the theta grid.

    Shapes: m = 1 -> (1,); m = 2 -> (2N+1, n_theta+1) with rows k = -N..N;
    m >= 3 -> (K,) + (n_theta+1,)*(m-1) with K = len(multi_indices(N, m)).
    """
    grid = grid or cfg.grid(sys)
    e = _exp_weights(p, grid)
    fund = _node_values(tables.fundamental, grid)
    h24 = grid.h / UNIT
    if cfg.m == 1:
        w = grid.fundamental_units() * h24
        out = np.array([np.sum(e * w * _delayed(fund, grid))])
        return out + CellCorrection(grid, tables, cfg).kernel_delta(p, (1, 1))[:, 0]
    if cfg.m == 2:
        ks = range(-cfg.N, cfg.N + 1)
        V = np.array([_node_values(tables.get(k), grid) for k in ks])
        Vd = V[:, grid.n_tau - grid.n0: grid.n_tau - grid.n0 + grid.n_T + 1]
        fd = _delayed(fund, grid)
        n = grid.n_T + 1
        out = np.empty((len(ks), grid.n_theta + 1), dtype=complex)
        for j in range(grid.n_theta + 1):
            u_a, u_b = grid.term_units(j)
            off = j * grid.stride
            term_a = Vd @ (e * (u_a * h24) * fund[off: off + n])
            term_b = V[:, off: off + n] @ (e * (u_b * h24) * fd)
            out[:, j] = 0.5 * (term_a - term_b)
        return out + CellCorrection(grid, tables, cfg).kernel_delta(p, out.shape)
    return _kernel_generic(cfg, grid, e, tables)


def _kernel_generic(cfg, grid, e, tables):
    m = cfg.m
    K = multi_indices(cfg.N, m)
    w = e * grid.base_units() * (grid.h / UNIT)
    n = grid.n_T + 1
    nth = grid.n_theta + 1
    fund = _node_values(tables.fundamental, grid)
    vals = {k: _node_values(tables.get(k), grid) for k in range(-cfg.N, cfg.N + 1)}
    out = np.empty((len(K),) + (nth,) * (m - 1), dtype=complex)
    for ki, kk in enumerate(K):
        rows = [vals[k] for k in kk] + [fund]
        delayed = np.array([_delayed(r, grid) for r in rows])
        for jj in itertools.product(range(nth), repeat=m - 1):
            cols = [delayed] + [np.array([r[j * grid.stride: j * grid.stride + n] for r in rows])
                                for j in jj]
            A = np.stack(cols, axis=1)                      # (a, b, i)
            dets = np.linalg.det(np.moveaxis(A, -1, 0))     # (i,)
            out[(ki,) + jj] = np.sum(w * dets) / math.factorial(m)
    return out


def _U_conj(cfg, grid):
    """conj(U_l) on the theta product grid, rows l in multi-index order."""
    m = cfg.m
    L = multi_indices(cfg.N, m)
    P = _theta_basis(cfg.N, grid)                         # (2N+1, nth), conjugated
    nth = grid.n_theta + 1
    norm = 1.0 / math.sqrt(math.factorial(m - 1))
    out = np.empty((len(L),) + (nth,) * (m - 1), dtype=complex)
    for li, ll in enumerate(L):
        rows = P[[l + cfg.N for l in ll]]                   # (m-1, nth)
        for jj in itertools.product(range(nth), repeat=m - 1):
            out[(li,) + jj] = np.linalg.det(rows[:, list(jj)]) * norm
    return out


def _build_paper(sys, cfg, p, tables, grid):
    m = cfg.m
    M1 = measurement_kernel(sys, cfg, p, tables, grid)
    if m == 1:
        return M1.reshape(1, 1).astype(complex)
    wth = grid.theta_weights()
    if m == 2:
        G = _theta_basis(cfg.N, grid) * wth[None, :]
        return math.sqrt(2.0) * (G @ M1.T)
    U = _U_conj(cfg, grid)
    W3 = wth
    for _ in range(m - 2):
        W3 = np.multiply.outer(W3, wth)
    Lflat = (U * W3[None]).reshape(U.shape[0], -1)
    Mflat = M1.reshape(M1.shape[0], -1)
    return math.sqrt(m) * (Lflat @ Mflat.T)


# ---------------------------------------------------------------------------
# Fubini path


class KernelTable:
    """Inner theta sums I[i, l] = sum_j wtheta_j conj(U_l(theta_j)) r_ij x(t_i + theta_j).

    ``r_ij`` is the ratio between the per-term t-weight and the plain Simpson
    weight at t_i; it differs from 1 only near breakpoints, which is what
    makes the FFT + sparse-correction split cheap.  Arrays are time-major,
    shape (n_T + 1, 2N + 1).  Inner sums of basis solutions are computed on
    demand and optionally cached.
    """

    def __init__(self, sys: LinearDelaySystem, cfg: SchemeConfig, tables: SchemeTables,
                 grid: Grid | None = None, cache_mb: float = 0.0):
        self.sys = sys
        self.cfg = cfg
        self.grid = grid = grid or cfg.grid(sys)
        self.tables = tables
        self.m = cfg.m
        self.w0 = grid.base_units() * (grid.h / UNIT)
        self._cache: dict = {}
        self._cells: CellCorrection | None = None
        self._cache_budget = int(cache_mb * 2**20)
        fund = _node_values(tables.fundamental, grid)
        self.fund_delayed = _delayed(fund, grid).copy()
        if self.m == 1:
            ratio = grid.fundamental_units() / grid.base_units()
            self.z_fund = (ratio * self.fund_delayed)[:, None]
            return
        wth = grid.theta_weights()
        self.G = _theta_basis(cfg.N, grid) * wth[None, :]          # (L1, nth)
        n_tau = grid.n_tau
        up = np.zeros((self.G.shape[0], n_tau + 1), dtype=complex)
        up[:, :: grid.stride] = self.G
        self._G_rev = up[:, ::-1].copy()
        if self.m == 2:
            self._pat_a, self._pat_b = self._patterns()
            self.I_fund = self._inner(fund, self._pat_a)
        else:
            self._pat_a = self._pat_b = None
            self.I_fund = self._inner(fund, None)

    # sparse correction patterns -------------------------------------------------
    def _patterns(self):
        g = self.grid
        u0 = g.base_units()
        rows_a, cols_a, d_a = [], [], []
        rows_b, cols_b, d_b = [], [], []
        for j in range(g.n_theta + 1):
            u_a, u_b = g.term_units(j)
            s_j = g.n_tau - j * g.stride
            for u, start, rows, cols, dd in ((u_a, s_j, rows_a, cols_a, d_a),
                                             (u_b, g.n0, rows_b, cols_b, d_b)):
                idx = np.nonzero(u != u0)[0]
                idx = idx[idx >= start]
                rows.append(idx)
                cols.append(np.full(idx.shape, j))
                dd.append(u[idx] / u0[idx] - 1.0)
        return (self._csr_pattern(rows_a, cols_a, d_a), self._csr_pattern(rows_b, cols_b, d_b))

    def _csr_pattern(self, rows, cols, data):
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        d = np.concatenate(data)
        order = np.lexsort((c, r))
        r, c, d = r[order], c[order], d[order]
        indptr = np.zeros(self.grid.n_T + 2, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        indptr = np.cumsum(indptr)
        src = r + c * self.grid.stride
        return (indptr, c.astype(np.int32), d, src)

    def _inner(self, values, pattern):
        g = self.grid
        X = values[: g.n_tau + g.n_T + 1]
        conv = fftconvolve(X[None, :], self._G_rev, axes=1)
        base = conv[:, g.n_tau: g.n_tau + g.n_T + 1].T               # (n_T+1, L1)
        if pattern is None:
            return np.ascontiguousarray(base)
        indptr, indices, d, src = pattern
        S = sparse.csr_matrix((d * X[src], indices, indptr), shape=(g.n_T + 1, g.n_theta + 1))
        return np.ascontiguousarray(base + S @ self.G.T)

    def inner(self, k: int) -> np.ndarray:
        """Inner sums of the basis solution x_k, shape (n_T + 1, 2N + 1)."""
        if k in self._cache:
            return self._cache[k]
        if -k in self._cache:
            out = np.conj(self._cache[-k][:, ::-1])
        else:
            out = self._inner(_node_values(self.tables.get(k), self.grid), self._pat_b)
        if self._cache_budget > 0 and (len(self._cache) + 1) * out.nbytes <= self._cache_budget:
            self._cache[k] = out
        return out

    def delayed(self, k) -> np.ndarray:
        return _delayed(_node_values(self.tables.get(k), self.grid), self.grid)

    # per-column time kernels ------------------------------------------------------
    def z_column(self, k: int, I_k: np.ndarray | None = None) -> np.ndarray:
        """Z with W[:, k] = sum_i w0_i e^{-p t_i} Z[i, :], m = 2."""
        if I_k is None:
            I_k = self.inner(k)
        xk = self.delayed(k)
        return (xk[:, None] * self.I_fund - self.fund_delayed[:, None] * I_k) / math.sqrt(2.0)

    def z_columns(self, progress: Callable | None = None):
        """Yield (column index, Z) for every column of W in order of use."""
        cfg = self.cfg
        if self.m == 1:
            yield 0, self.z_fund
            return
        if self.m == 2:
            N = cfg.N
            for k in range(0, N + 1):
                I_k = self.inner(k)
                yield k + N, self.z_column(k, I_k)
                if k:
                    yield -k + N, self.z_column(-k, np.conj(I_k[:, ::-1]))
                if progress:
                    progress(k, N)
            return
        yield from self._z_generic()

    def _z_generic(self):
        cfg, m = self.cfg, self.m
        N = cfg.N
        I = {k: self._inner(_node_values(self.tables.get(k), self.grid), None)
             for k in range(-N, N + 1)}
        I["fundamental"] = self.I_fund
        L = multi_indices(N, m)
        # Andreief: the theta sums of det * conj(det) collapse to (m-1)! det[I];
        # with the 1/m!, m^{1/2} and (m-1)!^{-1/2} normalisations this leaves 1/sqrt(m!)
        coef = 1.0 / math.sqrt(math.factorial(m))
        for ki, kk in enumerate(L):
            rows = list(kk) + ["fundamental"]
            Z = np.zeros((self.grid.n_T + 1, len(L)), dtype=complex)
            for a, ra in enumerate(rows):
                others = [r for b, r in enumerate(rows) if b != a]
                xa = self.fund_delayed if ra == "fundamental" else self.delayed(ra)
                for li, ll in enumerate(L):
                    cols = [l + N for l in ll]
                    sub = np.stack([I[r][:, cols] for r in others], axis=1)   # (i, a', c)
                    Z[:, li] += (-1) ** a * xa * np.linalg.det(sub)
            yield ki, coef * Z

    def matrices(self, ps, progress: Callable | None = None) -> np.ndarray:
        """W_{T,N}(p) for every p in ``ps``, shape (len(ps), L, K)."""
        ps = np.atleast_1d(np.asarray(ps, dtype=complex))
        E = np.exp(-np.outer(ps, self.grid.t)) * self.w0[None, :]
        size = 1 if self.m == 1 else len(multi_indices(self.cfg.N, self.m))
        W = np.empty((len(ps), size, size), dtype=complex)
        for col, Z in self.z_columns(progress):
            W[:, :, col] = E @ Z
        if self.m <= 2:
            if self._cells is None:
                self._cells = CellCorrection(self.grid, self.tables, self.cfg)
            if len(self._cells):
                c = self._cells.contributions(ps)                  # (P, cells, K)
                if self.m == 1:
                    W[:, 0, 0] += c.sum(axis=(1, 2))
                else:
                    G = math.sqrt(2.0) * self.G[:, self._cells.cols]  # (L, cells)
                    W += np.einsum("lr,prk->plk", G, c)
        return W


# ---------------------------------------------------------------------------
# public entry points


def _check_tables(cfg, tables):
    if cfg.m >= 2:
        for k in range(-cfg.N, cfg.N + 1):
            tables.get(k)


def build_WTN(sys: LinearDelaySystem, cfg: SchemeConfig, p: complex, tables: SchemeTables,
              kernel: KernelTable | None = None, grid: Grid | None = None) -> np.ndarray:
    """W_{T,N}(p): rows are measurement multi-indices, columns control multi-indices."""
    _check_tables(cfg, tables)
    grid = grid or (kernel.grid if kernel is not None else cfg.grid(sys))
    if cfg.path is Path.PAPER:
        return _build_paper(sys, cfg, complex(p), tables, grid)
    kernel = kernel or KernelTable(sys, cfg, tables, grid)
    return kernel.matrices([p])[0]


def build_WTN_many(sys: LinearDelaySystem, cfg: SchemeConfig, ps, tables: SchemeTables,
                   kernel: KernelTable | None = None, progress: Callable | None = None) -> np.ndarray:
    _check_tables(cfg, tables)
    ps = np.atleast_1d(np.asarray(ps, dtype=complex))
    if cfg.path is Path.PAPER:
        grid = cfg.grid(sys)
        return np.array([_build_paper(sys, cfg, p, tables, grid) for p in ps])
    kernel = kernel or KernelTable(sys, cfg, tables)
    return kernel.matrices(ps, progress)


def alpha_of(W, kind: ConstraintKind):
    """sigma_max(W) (norm bound) or min eig of (W + W*)/2 (monotone sector); batched."""
    kind = ConstraintKind(kind)
    if kind is ConstraintKind.NORM_BOUND:
        return largest_singular_value(W)
    return smallest_hermitian_eigenvalue(hermitian_symmetrize(W))


def alpha(sys: LinearDelaySystem, cfg: SchemeConfig, p: complex, tables: SchemeTables,
          kernel: KernelTable | None = None) -> float:
    return float(alpha_of(build_WTN(sys, cfg, p, tables, kernel), sys.constraint_kind))


@dataclass(frozen=True)
class TailGap:
    gap: float                 # max |W_T - W_{T/2}|
    gap_half: float            # max |W_{T/2} - W_{T/4}|
    rate: float                # fitted exponential decay rate (nan when undetermined)
    horizons: tuple[float, float, float]

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def tail_gap(sys: LinearDelaySystem, cfg: SchemeConfig, p: complex, tables: SchemeTables,
             grid: Grid | None = None) -> TailGap:
    """Empirical truncation diagnostic from the horizons T/4, T/2 and T."""
    grid = grid or cfg.grid(sys)
    if grid.T < 2.0:
        raise ContractError(f"tail_gap needs T >= 2, got {grid.T}")
    n_half = 2 * (grid.n_T // 4)
    n_quarter = 2 * (grid.n_T // 8)
    if n_quarter < 2:
        raise DomainError("grid too coarse for the tail diagnostic")
    Ws = []
    grids = (grid.with_n_T(n_quarter), grid.with_n_T(n_half), grid)
    for g in grids:
        Ws.append(build_WTN(sys, cfg, p, tables, grid=g))
    gap = float(np.max(np.abs(Ws[2] - Ws[1])))
    gap_half = float(np.max(np.abs(Ws[1] - Ws[0])))
    # gap ~ exp(-rate T/2) and gap_half ~ exp(-rate T/4)
    dt = grids[1].T - grids[0].T
    if gap > 0 and gap_half > 0 and dt > 0:
        rate = math.log(gap_half / gap) / dt
    else:
        rate = math.nan
    return TailGap(gap, gap_half, rate, tuple(g.T for g in grids))
