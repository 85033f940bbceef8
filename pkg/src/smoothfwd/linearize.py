"""Second-order model of the barrier Lagrangian at the current iterate.

One Newton step minimizes

    1/2 D'QD + D'B lam + D'C + lam'a + s'lam + 1/2 s'Ms + s'D_lin

over the curve step D and the log-price slacks s. Q collects the (exact)
smoothness Hessian plus the positivity-barrier curvature and has bandwidth 2;
B and a are the constraint Jacobian and residuals; M, D_lin come from the
spread barrier. Constraint curvature is deliberately not folded into Q: the
constraints enter linearized, and the outer iteration absorbs the rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import CurveProblem, ForwardCurve, eval_W

BANDWIDTH = 2  # first+second difference stencils reach two stages out


class InfeasibleIterateError(RuntimeError):
    """Iterate on or outside a barrier boundary; never clamped silently."""


@dataclass(frozen=True)
class BarrierWeights:
    """Log-barrier weights: mu_pos guards f > 0, mu_spread guards the price band."""

    mu_pos: float
    mu_spread: float

    def __post_init__(self):
        if self.mu_pos < 0 or self.mu_spread < 0:
            raise ValueError("barrier weights must be >= 0")


@dataclass
class QuadraticModel:
    """Banded Newton subproblem data (lower band storage: qband[i, r] = Q[r+i, r])."""

    n: int
    c: int
    d: int
    qband: np.ndarray  # (d+1, n)
    C: np.ndarray      # (n,)
    B: np.ndarray      # (n, c)
    a: np.ndarray      # (c,)
    M: np.ndarray      # (c,) diagonal entries; 0 on frozen rows
    D: np.ndarray      # (c,)
    free: np.ndarray   # (c,) bool, False where the slack was eliminated
    b_const: float = 0.0

    def q_dense(self) -> np.ndarray:
        """Materialize the symmetric Q (small instances / tests)."""
        q = np.zeros((self.n, self.n))
        for i in range(self.d + 1):
            for r in range(self.n - i):
                q[r + i, r] = self.qband[i, r]
                q[r, r + i] = self.qband[i, r]
        return q


def smoothness_hessian_band(xi: np.ndarray, gamma: float, phi: float) -> np.ndarray:
    """Exact Hessian of the smoothness measure, lower-banded (3, n).

    The measure is quadratic in f, so this is also its full second-order
    expansion; assembled from the per-interval first-difference stencil and
    the per-center second-difference stencil.
    """
    n = xi.size
    band = np.zeros((BANDWIDTH + 1, n))
    if gamma != 0.0 and n >= 2:
        g = gamma / xi[:-1]
        band[0, :-1] += g
        band[0, 1:] += g
        band[1, :-1] -= g
    if phi != 0.0 and n >= 3:
        xim, xir = xi[:-2], xi[1:-1]
        scale = phi * xir
        u = 2.0 / ((xim + xir) * xir)   # coefficient on f_{k+1}
        w = 2.0 / ((xim + xir) * xim)   # coefficient on f_{k-1}
        y = u + w                        # coefficient on -f_k
        band[0, :-2] += scale * w * w
        band[0, 1:-1] += scale * y * y
        band[0, 2:] += scale * u * u
        band[1, :-2] -= scale * y * w
        band[1, 1:-1] -= scale * u * y
        band[2, :-2] += scale * u * w
    return band


def band_matvec(band: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = Q x for symmetric lower-banded Q."""
    d = band.shape[0] - 1
    y = band[0] * x
    for i in range(1, d + 1):
        y[i:] += band[i, :-i] * x[:-i]
        y[:-i] += band[i, :-i] * x[i:]
    return y


def default_free_mask(problem: CurveProblem, spread_barrier_enabled: bool = True) -> np.ndarray:
    """Bonds whose log price is a variable: positive spread, barrier on."""
    if not spread_barrier_enabled:
        return np.zeros(problem.m, dtype=bool)
    return np.array([b.spread > 0.0 for b in problem.bounds], dtype=bool)


def _constraint_columns(problem: CurveProblem, f: np.ndarray, rho: np.ndarray):
    """Per-bond residual a_j, Jacobian column B[:, j] and coupon sum v_j."""
    n = problem.n
    xi = problem.grid.xi
    cum = np.concatenate(([0.0], np.cumsum(f * xi)))
    B = np.zeros((n, problem.m))
    a = np.empty(problem.m)
    v = np.empty(problem.m)
    for j, sched in enumerate(problem.schedules):
        last = sched.last_stage
        head = cum[last - 1]
        terms = sched.alphas * np.exp(head - cum[sched.stages - 1])
        v_j = float(terms.sum())
        a[j] = rho[j] + head - np.log(v_j)
        v[j] = v_j
        # B[r, j] = xi_r * (1 - sum of coupon weights whose flow starts at or before r)
        col = np.zeros(last - 1)
        if sched.n_payments > 1:
            np.add.at(col, sched.stages[:-1] - 1, terms[:-1] / v_j)
        B[: last - 1, j] = xi[: last - 1] * (1.0 - np.cumsum(col))
    return B, a, v


def build_model(
    problem: CurveProblem,
    f: np.ndarray,
    rho: np.ndarray,
    weights: BarrierWeights,
    free: np.ndarray | None = None,
    ridge: float = 0.0,
) -> QuadraticModel:
    """Assemble the Newton subproblem at a strictly interior iterate.

    ``ridge`` adds a diagonal shift to Q; used only when the positivity
    barrier is off and the smoothness Hessian alone is singular.
    """
    f = np.asarray(f, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    n, m = problem.n, problem.m
    if free is None:
        free = default_free_mask(problem)
    w = problem.weights

    band = smoothness_hessian_band(problem.grid.xi, w.gamma, w.phi)
    C = band_matvec(band, f)

    if weights.mu_pos > 0.0:
        if np.any(f <= 0.0):
            raise InfeasibleIterateError("positivity barrier requires f > 0 at the iterate")
        band[0] += weights.mu_pos / f**2
        C -= weights.mu_pos / f
    if ridge != 0.0:
        band[0] += ridge

    B, a, _v = _constraint_columns(problem, f, rho)

    M = np.zeros(m)
    D = np.zeros(m)
    if weights.mu_spread > 0.0 and np.any(free):
        rho_b, rho_a = problem.rho_bounds_arrays()
        ga = rho_a[free] - rho[free]
        gb = rho[free] - rho_b[free]
        if np.any(ga <= 0.0) or np.any(gb <= 0.0):
            raise InfeasibleIterateError("spread barrier requires rho strictly inside (rho_b, rho_a)")
        M[free] = weights.mu_spread * (1.0 / ga**2 + 1.0 / gb**2)
        D[free] = weights.mu_spread * (1.0 / ga - 1.0 / gb)

    b_const = _barrier_value(problem, f, rho, weights, free) + eval_W(ForwardCurve(problem.grid, f), w)
    return QuadraticModel(
        n=n, c=m, d=BANDWIDTH, qband=band, C=C, B=B, a=a, M=M, D=D,
        free=np.asarray(free, dtype=bool), b_const=b_const,
    )


def _barrier_value(problem, f, rho, weights, free) -> float:
    total = 0.0
    if weights.mu_pos > 0.0:
        if np.any(f <= 0.0):
            raise InfeasibleIterateError("positivity barrier requires f > 0")
        total -= weights.mu_pos * float(np.sum(np.log(f)))
    if weights.mu_spread > 0.0 and np.any(free):
        rho_b, rho_a = problem.rho_bounds_arrays()
        ga = rho_a[free] - rho[free]
        gb = rho[free] - rho_b[free]
        if np.any(ga <= 0.0) or np.any(gb <= 0.0):
            raise InfeasibleIterateError("spread barrier requires rho strictly inside (rho_b, rho_a)")
        total -= weights.mu_spread * float(np.sum(np.log(gb) + np.log(ga)))
    return total


def eval_Z(
    problem: CurveProblem,
    f: np.ndarray,
    rho: np.ndarray,
    weights: BarrierWeights,
    lam: np.ndarray,
    free: np.ndarray | None = None,
) -> float:
    """Barrier Lagrangian: W + lam'a - mu*sum(ln f) - mu_tilde*sum(ln gaps)."""
    f = np.asarray(f, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if free is None:
        free = default_free_mask(problem)
    value = eval_W(ForwardCurve(problem.grid, f), problem.weights)
    value += float(np.dot(np.asarray(lam), problem.residuals(f, rho)))
    return value + _barrier_value(problem, f, rho, weights, free)


def dump_model_csv(model: QuadraticModel, directory) -> None:
    """Debug dump of the model blocks as CSV files (format not stable)."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "model_qband.csv", model.qband.T, delimiter=",",
               header="diag,sub1,sub2", comments="")
    np.savetxt(out / "model_C.csv", model.C, delimiter=",", header="C", comments="")
    np.savetxt(out / "model_B.csv", model.B, delimiter=",")
    stacked = np.column_stack([model.a, model.M, model.D, model.free.astype(float)])
    np.savetxt(out / "model_constraints.csv", stacked, delimiter=",",
               header="a,M,D,free", comments="")
