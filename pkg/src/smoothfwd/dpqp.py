"""Banded equality-constrained QP solved by stagewise elimination.

minimize  1/2 D'QD + D'C + 1/2 s'Ms + s'D_lin
subject to  a_j + s_j + sum_k D_k B[k, j] = 0

Q is symmetric positive definite with small bandwidth d. Eliminating D_n..D_1
in turn keeps the band structure, accumulates a c x c coupling matrix G for
the multipliers, and leaves a dense c x c solve; the step is then recovered
moving forward. Work is O(n (d^2 + c^2)), memory O(n (d + c)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .linearize import QuadraticModel


class IndefiniteModelError(RuntimeError):
    """A pivot was not strictly positive; carries the 1-based stage."""

    def __init__(self, stage: int):
        super().__init__(f"nonpositive pivot while eliminating stage {stage}")
        self.stage = stage


class DegenerateConstraintsError(RuntimeError):
    """Singular multiplier system (duplicated or degenerate constraints)."""


@dataclass
class DPWorkspace:
    """Eliminated rows (band/B/C overwritten in place) plus accumulators."""

    qband: np.ndarray  # row q of the stage-q eliminated system lives in column q
    B: np.ndarray
    C: np.ndarray
    G: np.ndarray      # c x c multiplier coupling, PSD-negative
    a_acc: np.ndarray
    b_acc: float
    d: int
    counters: dict

    @property
    def pivots(self) -> np.ndarray:
        return self.qband[0]


@dataclass
class DPSolution:
    delta: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    workspace: DPWorkspace


def bandwidth(q: np.ndarray) -> int:
    """Count of nonzeros left of the diagonal, maximized over rows.

    0 for diagonal, 1 for tridiagonal, 2 for the combined smoothness Hessian.
    """
    q = np.asarray(q)
    best = 0
    for k in range(q.shape[0]):
        best = max(best, int(np.count_nonzero(q[k, :k])))
    return best


def dense_to_band(q: np.ndarray, d: int) -> np.ndarray:
    n = q.shape[0]
    band = np.zeros((d + 1, n))
    for i in range(d + 1):
        band[i, : n - i] = np.diagonal(q, -i)
    return band


def band_to_dense(band: np.ndarray) -> np.ndarray:
    d = band.shape[0] - 1
    n = band.shape[1]
    q = np.zeros((n, n))
    for i in range(d + 1):
        idx = np.arange(n - i)
        q[idx + i, idx] = band[i, : n - i]
        q[idx, idx + i] = band[i, : n - i]
    return q


@njit(cache=True)
def _backward_kernel(qband, B, C, G, a_acc, d, tol):
    n = qband.shape[1]
    c = B.shape[1]
    b_acc = 0.0
    cnt_q = 0
    cnt_c = 0
    cnt_b = 0
    cnt_g = 0
    cnt_a = 0
    for q in range(n - 1, -1, -1):
        p = qband[0, q]
        if not p > tol:
            return q, b_acc, cnt_q, cnt_c, cnt_b, cnt_g, cnt_a
        for j in range(c):
            bqj = B[q, j]
            for k in range(j, c):
                G[j, k] -= bqj * B[q, k] / p
                cnt_g += 1
        for j in range(c):
            a_acc[j] -= C[q] * B[q, j] / p
            cnt_a += 1
        b_acc -= 0.5 * C[q] * C[q] / p
        for i in range(1, d + 1):
            r = q - i
            if r < 0:
                break
            ratio = qband[i, r] / p
            C[r] -= ratio * C[q]
            cnt_c += 1
            for j in range(c):
                B[r, j] -= ratio * B[q, j]
                cnt_b += 1
            for jj in range(i, d + 1):
                s = q - jj
                if s < 0:
                    break
                qband[jj - i, s] -= ratio * qband[jj, s]
                cnt_q += 1
    for j in range(c):
        for k in range(j + 1, c):
            G[k, j] = G[j, k]
    return -1, b_acc, cnt_q, cnt_c, cnt_b, cnt_g, cnt_a


@njit(cache=True)
def _forward_kernel(qband, B, C, lam, d):
    n = qband.shape[1]
    c = B.shape[1]
    delta = np.zeros(n)
    for q in range(n):
        acc = C[q]
        for j in range(c):
            acc += B[q, j] * lam[j]
        for i in range(1, d + 1):
            r = q - i
            if r >= 0:
                acc += qband[i, r] * delta[r]
        delta[q] = -acc / qband[0, q]
    return delta


def backward_pass(model: QuadraticModel, pivot_tol: float = 0.0) -> DPWorkspace:
    """Eliminate stages n..1; fails fast on a nonpositive pivot."""
    qband = np.ascontiguousarray(model.qband, dtype=np.float64).copy()
    B = np.ascontiguousarray(model.B, dtype=np.float64).copy()
    C = np.ascontiguousarray(model.C, dtype=np.float64).copy()
    c = model.c
    G = np.zeros((c, c))
    a_acc = np.array(model.a, dtype=np.float64).copy()
    fail, b_acc, cnt_q, cnt_c, cnt_b, cnt_g, cnt_a = _backward_kernel(
        qband, B, C, G, a_acc, model.d, pivot_tol
    )
    if fail >= 0:
        raise IndefiniteModelError(fail + 1)
    counters = {
        "band_updates": cnt_q,
        "linear_updates": cnt_c,
        "jacobian_updates": cnt_b,
        "residual_updates": cnt_a,
        "coupling_updates": cnt_g,
    }
    return DPWorkspace(qband=qband, B=B, C=C, G=G, a_acc=a_acc, b_acc=b_acc,
                       d=model.d, counters=counters)


def solve_multipliers(
    ws: DPWorkspace,
    M: np.ndarray,
    D: np.ndarray,
    free: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Multipliers and slacks from the accumulated c x c system.

    Free rows use the slack stationarity M_j s_j + lam_j + D_j = 0 in
    premultiplied form (lam_j + D_j - M_j (G lam)_j = M_j a_j); frozen rows
    (no slack) keep the raw constraint row -(G lam)_j = a_j.
    """
    c = ws.a_acc.size
    if free is None:
        free = np.ones(c, dtype=bool)
    if c == 0:
        return np.zeros(0), np.zeros(0)
    A = np.zeros((c, c))
    rhs = np.empty(c)
    for j in range(c):
        if free[j]:
            A[j] = -M[j] * ws.G[j]
            A[j, j] += 1.0
            rhs[j] = M[j] * ws.a_acc[j] - D[j]
        else:
            A[j] = -ws.G[j]
            rhs[j] = ws.a_acc[j]
    try:
        lam = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConstraintsError(str(exc)) from None
    sigma = np.zeros(c)
    sigma[free] = -(lam[free] + D[free]) / M[free]
    return lam, sigma


def forward_pass(ws: DPWorkspace, lam: np.ndarray) -> np.ndarray:
    """Recover the step stage by stage from the eliminated rows."""
    return _forward_kernel(ws.qband, ws.B, ws.C, np.asarray(lam, dtype=np.float64), ws.d)


def dp_solve(model: QuadraticModel, pivot_tol: float = 0.0) -> DPSolution:
    """Backward elimination, multiplier solve, forward recovery."""
    ws = backward_pass(model, pivot_tol)
    lam, sigma = solve_multipliers(ws, model.M, model.D, model.free)
    delta = forward_pass(ws, lam)
    return DPSolution(delta=delta, sigma=sigma, lam=lam, workspace=ws)
