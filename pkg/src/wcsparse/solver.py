"""Iterative sparse-recovery solvers.

The core method alternates a generalized-gradient step on the separable
penalty with a projection back onto {x : Ax = y}.  With an exact
pseudo-inverse the projection is the exact affine projection; with an
approximate pseudo-inverse A^T B the same update is applied verbatim,
giving the approximate-projection variant.  OMP and IRLS baselines are
included for benchmarking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .penalty import Penalty
from .pinv import NumericalError, SensingModel

_FINITE_CHECK_PERIOD = 512


@dataclass(frozen=True)
class SolverConfig:
    kappa: float
    max_iters: int
    early_stop_tol: float = 0.0   # halt when ||x(n+1)-x(n)|| < tol; 0 disables
    trace_every: int = 0          # diagnostic sampling period; 0 disables

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    dist_to_truth: float    # ||x(n) - x*||_2, nan when truth not supplied
    residual: float         # ||y - A x(n)||_2
    objective: float        # J(x(n))


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    iters_run: int
    final_residual: float
    trace: list[TracePoint] = field(default_factory=list)


def _trace_point(n, x, model, pen, y, x_star):
    dist = float(np.linalg.norm(x - x_star)) if x_star is not None else math.nan
    return TracePoint(
        iteration=n,
        dist_to_truth=dist,
        residual=float(np.linalg.norm(y - model.A @ x)),
        objective=pen.J_eval(x),
    )


def _projected_gradient_loop(model: SensingModel, pen: Penalty, y: np.ndarray,
                             cfg: SolverConfig, x_star) -> RecoveryResult:
    a, b = model.A, model.B
    kappa = cfg.kappa
    x = a.T @ (b @ y)
    trace = []
    if cfg.trace_every > 0:
        trace.append(_trace_point(0, x, model, pen, y, x_star))
    n = 0
    # non-finite values are detected and raised explicitly, so numpy's
    # overflow/invalid warnings are redundant inside the loop
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, cfg.max_iters + 1):
            xt = x - kappa * pen.J_grad(x)
            x_next = xt + a.T @ (b @ (y - a @ xt))
            if cfg.early_stop_tol > 0.0:
                if np.linalg.norm(x_next - x) < cfg.early_stop_tol:
                    x = x_next
                    if cfg.trace_every > 0:
                        trace.append(_trace_point(n, x, model, pen, y, x_star))
                    break
            x = x_next
            if cfg.trace_every > 0 and n % cfg.trace_every == 0:
                trace.append(_trace_point(n, x, model, pen, y, x_star))
            if n % _FINITE_CHECK_PERIOD == 0 and not np.all(np.isfinite(x)):
                raise NumericalError("divergence")
    if not np.all(np.isfinite(x)):
        raise NumericalError("divergence")
    return RecoveryResult(
        x_hat=x,
        iters_run=n,
        final_residual=float(np.linalg.norm(y - a @ x)),
        trace=trace,
    )


def pgg_solve(model: SensingModel, pen: Penalty, y: np.ndarray,
              cfg: SolverConfig, x_star: np.ndarray | None = None) -> RecoveryResult:
    """Projected generalized gradient method with exact affine projection.

    x(0) = A^+ y, then per iteration a gradient step on the penalty followed
    by re-projection onto {x : Ax = y}.  Stops on max_iters (or the optional
    displacement tolerance).
    """
    if model.proj_mode != "exact":
        raise ValueError("pgg_solve requires an exact-mode sensing model")
    return _projected_gradient_loop(model, pen, np.asarray(y, dtype=float), cfg, x_star)


def apgg_solve(model: SensingModel, pen: Penalty, y: np.ndarray,
               cfg: SolverConfig, x_star: np.ndarray | None = None) -> RecoveryResult:
    """Approximate-projection variant using the fixed handle A^T B.

    x(0) = A^T B y and
    x(n+1) = A^T B y + (I - A^T B A)(x(n) - kappa * grad J(x(n))),
    applied as two matrix-vector products per iteration; the N x N operator
    is never formed.
    """
    if model.proj_mode != "approx":
        raise ValueError("apgg_solve requires an approx-mode sensing model")
    if not model.zeta < 1.0:
        raise ValueError("approximate pseudo-inverse must satisfy zeta < 1")
    return _projected_gradient_loop(model, pen, np.asarray(y, dtype=float), cfg, x_star)


def default_max_iters(C3: float, M0: float, d: float, alpha: float,
                      N: int, kappa: float) -> int:
    """Worst-case iteration count 4*C3*M0 / (d*alpha^2*N*kappa), rounded up."""
    if min(C3, M0, d, alpha, N, kappa) <= 0:
        raise ValueError("all arguments must be positive")
    return math.ceil(4.0 * C3 * M0 / (d * alpha * alpha * N * kappa))


# ---------------------------------------------------------------------------
# baselines

def omp_solve(a: np.ndarray, y: np.ndarray, K: int) -> RecoveryResult:
    """Orthogonal matching pursuit: K greedy max-correlation picks, each
    followed by a least-squares re-fit on the active set.  Correlation ties
    break toward the lowest index.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = a.shape
    if not 1 <= K <= m:
        raise ValueError("K must satisfy 1 <= K <= M")
    support: list[int] = []
    resid = y.copy()
    coef = np.zeros(0)
    for _ in range(K):
        corr = np.abs(a.T @ resid)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        sub = a[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support):
            raise NumericalError("degenerate support")
        resid = y - sub @ coef
    x = np.zeros(n)
    x[support] = coef
    return RecoveryResult(x_hat=x, iters_run=K,
                          final_residual=float(np.linalg.norm(resid)))


DEFAULT_EPS_SCHEDULE = tuple(10.0 ** (-k) for k in range(1, 9))


def irls_solve(a: np.ndarray, y: np.ndarray, p: float,
               eps_schedule=DEFAULT_EPS_SCHEDULE,
               inner_iters: int = 10) -> RecoveryResult:
    """Iteratively reweighted least squares for the lp objective (0 <= p < 1
    and the p = 1 convex limit).

    Each inner step solves x = W A^T (A W A^T)^{-1} y with weights
    W = diag((x_i^2 + eps)^{1 - p/2}); eps anneals down the schedule.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    schedule = list(eps_schedule)
    if not schedule:
        raise ValueError("eps schedule must be nonempty")
    m = a.shape[0]
    # minimum-norm feasible start
    try:
        x = a.T @ np.linalg.solve(a @ a.T, y)
    except np.linalg.LinAlgError:
        raise NumericalError("singular reweighted system") from None
    iters = 0
    for eps in schedule:
        for _ in range(inner_iters):
            w = (x * x + eps) ** (1.0 - p / 2.0)
            wa = a * w          # A W, shape M x N
            try:
                lam = np.linalg.solve(wa @ a.T, y)
            except np.linalg.LinAlgError:
                raise NumericalError("singular reweighted system") from None
            x = w * (a.T @ lam)
            iters += 1
    if not np.all(np.isfinite(x)):
        raise NumericalError("divergence")
    return RecoveryResult(x_hat=x, iters_run=iters,
                          final_residual=float(np.linalg.norm(y - a @ x)))
