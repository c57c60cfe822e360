"""Jacobi methods for small dense complex matrices.

Both routines work on a stack of matrices (leading batch axis) and use a
round-robin ordering, so that every rotation of one round touches disjoint
column pairs and the whole round is a handful of vectorised numpy operations.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError, NumericError

ComplexMatrix = np.ndarray

REL_TOL = 1e-13
MAX_SWEEPS = 30
HERMITIAN_TOL = 1e-10
CHUNK = 32  # matrices per vectorised batch; keeps the working set cache-sized


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint pairs covering every pair (p, q), p < q, exactly once."""
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def _rotation(alpha, beta, gamma):
    """Unitary 2x2 factor (c, s, e) diagonalising [[alpha, gamma], [conj(gamma), beta]].

    New column p is c*a_p - s*e*a_q and new column q is s*a_p + c*e*a_q with
    e = exp(-i arg gamma).
    """
    g = np.abs(gamma)
    safe = g > 0
    g_safe = np.where(safe, g, 1.0)
    zeta = (beta - alpha) / (2.0 * g_safe)
    t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
    t = np.where(safe, t, 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    e = np.where(safe, np.conj(gamma) / g_safe, 1.0)
    return c, s, e


def _as_stack(M) -> tuple[np.ndarray, bool]:
    A = np.asarray(M, dtype=complex)
    if A.ndim == 2:
        return A[None], True
    if A.ndim != 3:
        raise DomainError(f"expected a matrix or a stack of matrices, got shape {A.shape}")
    return A, False


def _check_finite(A):
    if A.size == 0:
        raise DomainError("empty matrix")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")


def _offdiag_norm(G):
    n = G.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.abs(G[..., mask]) ** 2, axis=-1))


def singular_values(M, tol: float = REL_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """All singular values (descending) by one-sided Jacobi; batched over a leading axis.

    The QR step only reshapes the problem (R has the singular values of A)
    and makes the Jacobi sweeps converge faster on graded matrices.
    """
    A, single = _as_stack(M)
    _check_finite(A)
    sv = np.concatenate([_jacobi_sv(A[i:i + CHUNK], tol, max_sweeps)
                         for i in range(0, A.shape[0], CHUNK)])
    return sv[0] if single else sv


def _jacobi_sv(A, tol, max_sweeps):
    if A.shape[-1] > A.shape[-2]:
        A = np.conj(np.swapaxes(A, -1, -2))
    # Preconditioning: columns sorted by norm, then A P = Q R.  Jacobi runs on
    # the columns of R^H, i.e. on the rows of conj(R), kept contiguous.
    order = np.argsort(-np.linalg.norm(A, axis=-2), axis=-1, kind="stable")
    R = np.linalg.qr(np.take_along_axis(A, order[:, None, :], axis=-1), mode="r")
    C = np.ascontiguousarray(np.conj(R))
    n = C.shape[-2]
    fro = np.linalg.norm(C, axis=(-2, -1))
    # the Gram matrix scales like ||A||^2, hence the squared Frobenius norm
    limit = tol * fro * fro
    rounds = _round_robin(n)
    active = np.arange(C.shape[0])
    for _ in range(max_sweeps + 1):
        W = C[active]
        off = _offdiag_norm(np.conj(W) @ np.swapaxes(W, -1, -2))
        keep = off > limit[active]
        active = active[keep]
        if active.size == 0:
            break
        if _ == max_sweeps:
            worst = float(np.max(off[keep] / np.where(fro[active] > 0, fro[active] ** 2, 1.0)))
            raise NumericError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps "
                               f"(relative off-norm {worst:.3e})", achieved=worst)
        W = W[keep]
        for p, q in rounds:
            ap = W[:, p, :]
            aq = W[:, q, :]
            alpha = np.einsum("bkr,bkr->bk", ap.conj(), ap).real
            beta = np.einsum("bkr,bkr->bk", aq.conj(), aq).real
            gamma = np.einsum("bkr,bkr->bk", ap.conj(), aq)
            c, s, e = _rotation(alpha, beta, gamma)
            c = c[:, :, None]
            se = (s * e)[:, :, None]
            ce = (c[:, :, 0] * e)[:, :, None]
            s = s[:, :, None]
            W[:, p, :] = c * ap - se * aq
            W[:, q, :] = s * ap + ce * aq
        C[active] = W
    return -np.sort(-np.linalg.norm(C, axis=-1), axis=-1)


def largest_singular_value(M, **kw):
    """sigma_max of a matrix (float) or of each matrix in a stack (array)."""
    sv = singular_values(M, **kw)
    return float(sv[0]) if sv.ndim == 1 else sv[:, 0]


def hermitian_symmetrize(M) -> ComplexMatrix:
    A = np.asarray(M, dtype=complex)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"hermitian_symmetrize needs square matrices, got shape {A.shape}")
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def hermitian_eigenvalues(H, tol: float = REL_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """All eigenvalues (ascending) of Hermitian matrices by two-sided cyclic Jacobi."""
    A, single = _as_stack(H)
    _check_finite(A)
    if A.shape[-1] != A.shape[-2]:
        raise DomainError(f"Hermitian eigenproblem needs square matrices, got shape {A.shape[1:]}")
    fro = np.linalg.norm(A, axis=(-2, -1))
    asym = np.linalg.norm(A - np.conj(np.swapaxes(A, -1, -2)), axis=(-2, -1))
    if np.any(asym > HERMITIAN_TOL * fro):
        raise ContractError("matrix is not Hermitian within tolerance; symmetrize first")
    ev = np.concatenate([_jacobi_eig(hermitian_symmetrize(A[i:i + CHUNK]), fro[i:i + CHUNK],
                                     tol, max_sweeps)
                         for i in range(0, A.shape[0], CHUNK)])
    return ev[0] if single else ev


def _jacobi_eig(A, fro, tol, max_sweeps):
    n = A.shape[-1]
    limit = tol * fro
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = _offdiag_norm(A)
        if np.all(off <= limit):
            break
        for p, q in rounds:
            alpha = A[:, p, p].real
            beta = A[:, q, q].real
            gamma = A[:, p, q]
            c, s, e = _rotation(alpha, beta, gamma)
            # columns: A <- A J
            ap = A[:, :, p]
            aq = A[:, :, q]
            cc, ss, ee = c[:, None, :], s[:, None, :], e[:, None, :]
            A[:, :, p] = cc * ap - ss * ee * aq
            A[:, :, q] = ss * ap + cc * ee * aq
            # rows: A <- J^H A
            rp = A[:, p, :]
            rq = A[:, q, :]
            cc, ss, ee = c[:, :, None], s[:, :, None], np.conj(e)[:, :, None]
            A[:, p, :] = cc * rp - ss * ee * rq
            A[:, q, :] = ss * rp + cc * ee * rq
    else:
        off = _offdiag_norm(A)
        if not np.all(off <= limit):
            worst = float(np.max(off / np.where(fro > 0, fro, 1.0)))
            raise NumericError(f"Hermitian Jacobi did not converge in {max_sweeps} sweeps "
                               f"(relative off-norm {worst:.3e})", achieved=worst)
    return np.sort(np.einsum("...ii->...i", A).real, axis=-1)


def smallest_hermitian_eigenvalue(H, **kw):
    ev = hermitian_eigenvalues(H, **kw)
    return float(ev[0]) if ev.ndim == 1 else ev[:, 0]
