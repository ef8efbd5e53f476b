"""Convergence constants, non-convexity thresholds, and small-scale
brute-force oracles for null-space constants and penalized minimization.

The constants feed the a-priori error bounds of the projected
generalized-gradient solvers; the oracles are exhaustive (enumeration or
grid search) and intentionally limited to tiny instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np
from scipy.optimize import linprog

from .penalty import Penalty
from .pinv import SensingModel, spectral_norm


# ---------------------------------------------------------------------------
# convergence constants

@dataclass(frozen=True)
class ConvergenceConstants:
    gamma: float
    M0: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    C7: float
    d: float
    threshold: float

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma, "M0": self.M0,
            "C1": self.C1, "C2": self.C2, "C3": self.C3, "C4": self.C4,
            "C5": self.C5, "C6": self.C6, "C7": self.C7,
            "d": self.d, "threshold": self.threshold,
        }


def constants(pen: Penalty, model: SensingModel, gamma: float, M0: float,
              N: int) -> ConvergenceConstants:
    """All solver error-bound constants for a (penalty, matrix) pair.

    gamma is the null-space constant (assumed or computed); M0 bounds the
    distance from the initial solution to the sparse signal.
    """
    if not 0 <= gamma < 1:
        raise ValueError("null space condition violated")
    if not M0 > 0:
        raise ValueError("M0 must be positive")
    alpha = pen.alpha()
    sqn = math.sqrt(N)
    zeta = model.zeta
    c1 = (pen.eval(M0) / M0) * (1.0 - gamma) / (1.0 + gamma)
    c2 = (alpha * sqn + c1) / (c1 * model.sigma_min)
    c5 = 2.0 * zeta * alpha * sqn * model.norm_A / (1.0 - zeta)
    c6 = (2.0 * model.norm_B * c5 / c1) * (
        2.0 * (1.0 + zeta) * alpha * sqn * model.norm_A + (3.0 + zeta) * c5)
    c7 = (4.0 * model.norm_B / c1) * (alpha * sqn * model.norm_A + c5)
    c3 = max(2.0 * c2 * c5, 2.0 * model.d * alpha * alpha * N / c1 + c6)
    c4 = max(2.0 * c2, c7)
    threshold = (1.0 / M0) * (1.0 - gamma) / (5.0 + 3.0 * gamma)
    return ConvergenceConstants(gamma=gamma, M0=M0, C1=c1, C2=c2, C3=c3,
                                C4=c4, C5=c5, C6=c6, C7=c7, d=model.d,
                                threshold=threshold)


def check_theorem_threshold(pen: Penalty, consts: ConvergenceConstants):
    """Whether the penalty's non-convexity is below the convergence
    threshold; returns (ok, margin)."""
    margin = consts.threshold - pen.nonconvexity()
    return margin >= 0.0, margin


def error_bound_pgg(consts: ConvergenceConstants, alpha: float, N: int,
                    kappa: float, noise_norm: float) -> float:
    """A-priori recovery error bound for the exact-projection solver."""
    return 4.0 * alpha * alpha * N / consts.C1 * kappa + 8.0 * consts.C2 * noise_norm


def error_bound_apgg(consts: ConvergenceConstants, kappa: float,
                     noise_norm: float) -> float:
    """A-priori recovery error bound for the approximate-projection solver."""
    return 2.0 * consts.C3 * kappa + 2.0 * consts.C4 * noise_norm


def error_bound_compressible(consts: ConvergenceConstants, kappa: float,
                             noise_norm: float, tau: float,
                             norm_A: float) -> float:
    """Error bound when the signal is only tau-close to its best K-term
    approximation."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return error_bound_apgg(consts, kappa, noise_norm) + (2.0 * consts.C4 * norm_A + 1.0) * tau


# ---------------------------------------------------------------------------
# null-space constant oracles

@dataclass(frozen=True)
class NscEstimate:
    value: float
    K: int
    exact: bool
    samples: int = 0


def _null_basis(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space (columns), via SVD."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    _, sv, vh = np.linalg.svd(a)
    tol = max(a.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol))
    return vh[rank:].T


def nsc_l1_exact(a: np.ndarray, K: int) -> NscEstimate:
    """Exact l1 null-space constant by support/sign enumeration plus an LP
    over the null-space coordinates.

    For each support S (|S| <= K) and sign pattern s, maximizes s^T z_S
    subject to ||z_{S^c}||_1 <= 1 over z in the null space; the constant is
    the maximum objective (inf when some null vector vanishes off S).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m, n = a.shape
    if n - m > 8 or n > 14 or K > 4:
        raise ValueError("instance too large for exact oracle")
    v = _null_basis(a)
    r = v.shape[1]
    if r == 0:
        return NscEstimate(value=0.0, K=K, exact=True)
    best = 0.0
    for size in range(1, K + 1):
        for sup in combinations(range(n), size):
            sup = list(sup)
            comp = [i for i in range(n) if i not in sup]
            for signs in product((1.0, -1.0), repeat=size - 1):
                s = np.array((1.0,) + signs)
                # variables: c (r), u (len(comp));  maximize s^T (V_S c)
                n_u = len(comp)
                cost = np.concatenate([-(s @ v[sup]), np.zeros(n_u)])
                # |(Vc)_i| <= u_i  and  sum u <= 1
                a_ub = np.zeros((2 * n_u + 1, r + n_u))
                b_ub = np.zeros(2 * n_u + 1)
                a_ub[:n_u, :r] = v[comp]
                a_ub[:n_u, r:] = -np.eye(n_u)
                a_ub[n_u:2 * n_u, :r] = -v[comp]
                a_ub[n_u:2 * n_u, r:] = -np.eye(n_u)
                a_ub[-1, r:] = 1.0
                b_ub[-1] = 1.0
                bounds = [(None, None)] * r + [(0, None)] * n_u
                res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds,
                              method="highs")
                if res.status == 3:
                    return NscEstimate(value=math.inf, K=K, exact=True)
                if res.status != 0:
                    raise RuntimeError(f"null-space LP failed: {res.message}")
                best = max(best, -res.fun)
    return NscEstimate(value=best, K=K, exact=True)


def nsc_j_lower_probe(a: np.ndarray, K: int, pen: Penalty, beta_grid,
                      samples: int, seed: int = 0,
                      include_vectors=None) -> NscEstimate:
    """Sampling lower bound on the penalty's null-space constant.

    Takes the supremum of J(beta z_S) / J(beta z_{S^c}) over sampled null
    vectors, the best size-K support for each, and beta in the grid.  The
    small-beta limit of the ratio is the l1 ratio, so with beta -> 0 in the
    grid the probe approaches the l1 constant from below.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    v = _null_basis(a)
    r = v.shape[1]
    if r == 0:
        return NscEstimate(value=0.0, K=K, exact=False, samples=0)
    rng = np.random.default_rng(seed)
    vectors = [v @ rng.standard_normal(r) for _ in range(samples)]
    if include_vectors is not None:
        vectors.extend(np.asarray(z, dtype=float) for z in include_vectors)
    best = 0.0
    for z in vectors:
        nz = np.linalg.norm(z)
        if nz == 0.0:
            continue
        z = z / nz
        for beta in beta_grid:
            vals = np.sort(pen.eval(beta * z))[::-1]
            top = float(np.sum(vals[:K]))
            rest = float(np.sum(vals[K:]))
            if rest <= 0.0:
                best = math.inf
            else:
                best = max(best, top / rest)
    return NscEstimate(value=best, K=K, exact=False, samples=len(vectors))


def gamma_l0_certify(a: np.ndarray, K: int) -> bool:
    """True iff M >= 2K + 1 and every 2K-column submatrix of A has full
    column rank, which is equivalent to the l0 null-space constant being
    below one."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m, n = a.shape
    if m < 2 * K + 1:
        return False
    if math.comb(n, 2 * K) > 1_000_000:
        raise ValueError("enumeration budget exceeded")
    norm_a = spectral_norm(a)
    for cols in combinations(range(n), 2 * K):
        sv = np.linalg.svd(a[:, cols], compute_uv=False)
        if sv[-1] <= 1e-10 * norm_a:
            return False
    return True


# ---------------------------------------------------------------------------
# tiny-scale brute-force minimization over the feasible set

@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over a box in null-space coordinates."""

    radius: float
    points: int = 201

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.points - 1)

    def max_offset(self, dim: int) -> float:
        """Largest distance from any box point to its nearest grid point."""
        return self.spacing * math.sqrt(dim) / 2.0


def jmin_bruteforce(a: np.ndarray, y: np.ndarray, pen: Penalty,
                    grid: GridSpec) -> np.ndarray:
    """Grid search for the penalized minimizer over {x : Ax = y}.

    The feasible set is parameterized as x_p + V c with x_p the least-norm
    solution and V an orthonormal null-space basis; c ranges over the grid
    box.  Limited to N <= 6 and null-space dimension <= 3.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    y = np.asarray(y, dtype=float)
    m, n = a.shape
    if n > 6:
        raise ValueError("instance too large for brute-force oracle")
    xp, *_ = np.linalg.lstsq(a, y, rcond=None)
    if np.linalg.norm(a @ xp - y) > 1e-8 * max(1.0, np.linalg.norm(y)):
        raise ValueError("infeasible measurement vector")
    v = _null_basis(a)
    r = v.shape[1]
    if r > 3:
        raise ValueError("null-space dimension too large for brute-force oracle")
    if r == 0:
        return xp
    axis = np.linspace(-grid.radius, grid.radius, grid.points)
    best_val = math.inf
    best_c = np.zeros(r)
    # chunk over the first axis to bound memory
    tail = np.array(list(product(*([axis] * (r - 1))))) if r > 1 else np.zeros((1, 0))
    for c0 in axis:
        cs = np.column_stack([np.full(len(tail), c0), tail]) if r > 1 else np.array([[c0]])
        xs = xp[None, :] + cs @ v.T
        vals = np.sum(pen.eval(xs), axis=1)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_c = cs[i]
    return xp + v @ best_c


def analysis_report(pen: Penalty, model: SensingModel, gamma: float, M0: float,
                    kappa: float = 0.0, noise_norm: float = 0.0,
                    tau: float = 0.0) -> dict:
    """JSON-ready constants-and-bounds report for a problem instance."""
    consts = constants(pen, model, gamma, M0, model.N)
    ok, margin = check_theorem_threshold(pen, consts)
    report = consts.to_json()
    report["theorem3_ok"] = bool(ok)
    report["threshold_margin"] = margin
    report["bounds"] = {
        "pgg": error_bound_pgg(consts, pen.alpha(), model.N, kappa, noise_norm),
        "apgg": error_bound_apgg(consts, kappa, noise_norm),
        "compressible": error_bound_compressible(consts, kappa, noise_norm,
                                                 tau, model.norm_A),
    }
    return report
