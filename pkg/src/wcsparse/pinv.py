"""Exact and iteratively refined pseudo-inverse handles for a wide sensing
matrix, plus the spectral quantities the solvers and error bounds consume.

The approximate pseudo-inverse always has the form A^T B with B an M x M
approximation of (A A^T)^{-1}.  Its quality is measured by
zeta = ||I - A A^T B||_2 and d = ||I - A^T B A||_2^2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """Numerical failure (rank deficiency, divergence, degenerate systems)."""


# ---------------------------------------------------------------------------
# spectral utilities

_POWER_MAX_ITERS = 10_000
_POWER_RTOL = 1e-13  # well inside the 1e-8 contract; keeps measured
                     # contraction factors accurate to ~1e-12


def _power_largest_eig(apply_psd, n: int) -> float:
    """Largest eigenvalue of a PSD operator on R^n by power iteration.

    Deterministic all-ones start; falls back to canonical basis vectors if
    an iterate lands in the kernel.  Converges on the Rayleigh quotient to
    relative tolerance 1e-8, capped at 10 000 iterations.
    """
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    fallback = 0
    for _ in range(_POWER_MAX_ITERS):
        w = apply_psd(v)
        nw = np.linalg.norm(w)
        if nw == 0.0 or not np.isfinite(nw):
            if fallback >= n:
                return 0.0
            v = np.zeros(n)
            v[fallback] = 1.0
            fallback += 1
            continue
        new_lam = float(v @ w)
        v = w / nw
        if abs(new_lam - lam) <= _POWER_RTOL * max(abs(new_lam), 1e-300):
            return max(new_lam, 0.0)
        lam = new_lam
    return max(lam, 0.0)


def spectral_norm(mx: np.ndarray) -> float:
    """Largest singular value via power iteration on M^T M."""
    mx = np.asarray(mx, dtype=float)
    if mx.size == 0 or not mx.any():
        return 0.0
    scale = np.max(np.abs(mx))
    s = mx / scale

    def apply_gram(v):
        return s.T @ (s @ v)

    return scale * float(np.sqrt(_power_largest_eig(apply_gram, mx.shape[1])))


def sigma_min_nonzero(a: np.ndarray) -> float:
    """Smallest singular value exceeding 1e-10 * ||A||_2 (full SVD)."""
    a = np.asarray(a, dtype=float)
    if not a.any():
        raise ValueError("sigma_min_nonzero of a zero matrix")
    sv = np.linalg.svd(a, compute_uv=False)
    nz = sv[sv > 1e-10 * sv[0]]
    return float(nz[-1])


def _residual_operator_norm(a: np.ndarray, b: np.ndarray) -> float:
    """||I - A^T B A||_2 without materializing the N x N matrix.

    I - A^T B A is symmetric when B is (B here is always a polynomial in
    A A^T, hence symmetric); its spectral norm is the square root of the
    top eigenvalue of the squared operator.
    """
    n = a.shape[1]

    def apply_once(v):
        return v - a.T @ (b @ (a @ v))

    def apply_sq(v):
        return apply_once(apply_once(v))

    return float(np.sqrt(_power_largest_eig(apply_sq, n)))


# ---------------------------------------------------------------------------
# sensing model

@dataclass(frozen=True)
class SensingModel:
    """A sensing matrix with a cached (exact or approximate) pseudo-inverse.

    The pseudo-inverse is applied as A^T (B v); the N x M matrix is never
    stored.  Immutable and safe for concurrent reads.
    """

    A: np.ndarray
    proj_mode: str          # "exact" | "approx"
    k: int                  # refinement steps (approx mode only)
    B: np.ndarray           # M x M, (A A^T)^{-1} or its approximation
    zeta: float             # ||I - A A^T B||_2 (0 in exact mode)
    d: float                # ||I - A^T B A||_2^2
    sigma_min: float
    norm_A: float
    norm_B: float

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    def apply_pinv(self, v: np.ndarray) -> np.ndarray:
        """A^T B v (the exact or approximate pseudo-inverse applied to v)."""
        return self.A.T @ (self.B @ v)


def _finish_model(a, mode, k, b, zeta):
    return SensingModel(
        A=a,
        proj_mode=mode,
        k=k,
        B=b,
        zeta=zeta,
        d=_residual_operator_norm(a, b) ** 2,
        sigma_min=sigma_min_nonzero(a),
        norm_A=spectral_norm(a),
        norm_B=spectral_norm(b),
    )


def exact_pinv(a: np.ndarray) -> SensingModel:
    """Exact-mode model with B = (A A^T)^{-1}.

    Raises NumericalError("singular Gram matrix") if A lacks full row rank.
    """
    a = np.asarray(a, dtype=float)
    gram = a @ a.T
    try:
        c = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise NumericalError("singular Gram matrix") from None
    # guard against numerically near-singular Gram matrices Cholesky accepts
    diag = np.diag(c)
    if diag.min() < 1e-10 * diag.max():
        raise NumericalError("singular Gram matrix")
    ident = np.eye(a.shape[0])
    b = np.linalg.solve(gram, ident)
    b = 0.5 * (b + b.T)
    return _finish_model(a, "exact", 0, b, 0.0)


def _ben_israel_step_size(a: np.ndarray, gram: np.ndarray) -> float:
    """Step inside the admissible interval (0, 2/||A A^T||_1).

    2 / (||A A^T||_1 + sigma_min(A)^2) is strictly admissible, equals 1 for
    orthonormal rows, and reproduces the contraction factors reported for
    Gaussian ensembles.
    """
    col_sum = float(np.abs(gram).sum(axis=0).max())
    smin2 = sigma_min_nonzero(a) ** 2
    return 2.0 / (col_sum + smin2)


def ben_israel(a: np.ndarray, k: int) -> SensingModel:
    """Approximate pseudo-inverse by k quadratic refinement steps.

    The recursion Y_j = Y_{j-1}(2I - A Y_{j-1}) from Y_0 = step * A^T is
    carried on the M x M factor G_j (Y_j = A^T G_j), so memory stays
    O(M^2) per step.  zeta and d are measured on the result.
    """
    a = np.asarray(a, dtype=float)
    if k < 0:
        raise ValueError("k must be nonnegative")
    m = a.shape[0]
    gram = a @ a.T
    step = _ben_israel_step_size(a, gram)
    ident = np.eye(m)
    g = step * ident
    for _ in range(k):
        g = g @ (2.0 * ident - gram @ g)
    zeta = spectral_norm(ident - gram @ g)
    if zeta >= 1.0:
        raise NumericalError("pseudo-inverse refinement failed to contract")
    return _finish_model(a, "approx", k, g, zeta)


def ben_israel_trace(a: np.ndarray, k: int) -> list[dict]:
    """Per-step (k, zeta, d) report of the refinement iteration."""
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    gram = a @ a.T
    step = _ben_israel_step_size(a, gram)
    ident = np.eye(m)
    g = step * ident
    rows = []
    for j in range(k + 1):
        zeta = spectral_norm(ident - gram @ g)
        d = _residual_operator_norm(a, g) ** 2
        rows.append({"k": j, "zeta": zeta, "d": d})
        if j < k:
            g = g @ (2.0 * ident - gram @ g)
    return rows


# ---------------------------------------------------------------------------
# matrix I/O: binary row-major little-endian float64 with an 8-byte header

_HEADER = struct.Struct("<II")


def write_matrix(path, mx: np.ndarray) -> None:
    mx = np.ascontiguousarray(np.atleast_2d(np.asarray(mx, dtype=float)))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(mx.shape[0], mx.shape[1]))
        fh.write(mx.astype("<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"matrix file {path}: expected {rows * cols} values, got {data.size}")
    return data.reshape(rows, cols).astype(float)


def write_matrix_csv(path, mx: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(mx), delimiter=",", fmt="%.17g")


def read_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
