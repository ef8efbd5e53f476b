"""Randomized recovery experiments: instance generation, metrics, sweeps.

Every trial's randomness is derived from the experiment's base seed and
the trial's position (cell indices, sparsity, trial number, stream), so
records are a pure function of the experiment spec and runs are
embarrassingly parallel in principle.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .analysis import constants
from .penalty import Penalty, penalty_with_nonconvexity
from .pinv import ben_israel, exact_pinv
from .solver import (RecoveryResult, SolverConfig, apgg_solve,
                     default_max_iters, irls_solve, omp_solve, pgg_solve)

MAX_ITER_CAP = 2_000_000
SOLVERS = ("pgg", "apgg", "omp", "irls", "l1")

_MASK = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *tags: int) -> int:
    """64-bit mix of the base seed and integer position tags."""
    h = base_seed & _MASK
    for t in tags:
        h = _splitmix64(h ^ (t & _MASK))
    return h


# ---------------------------------------------------------------------------
# instance generation and metrics

def gen_matrix(m: int, n: int, seed: int) -> np.ndarray:
    """I.i.d. Gaussian sensing matrix with entry variance 1/M."""
    if not m < n:
        raise ValueError("require M < N")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, n)) / math.sqrt(m)


def gen_signal(n: int, k: int, dist: str, seed: int) -> np.ndarray:
    """Unit-norm K-sparse signal; support uniform, nonzeros Gaussian or
    symmetric Bernoulli."""
    if not 1 <= k <= n:
        raise ValueError("require 1 <= K <= N")
    rng = np.random.default_rng(seed)
    support = rng.choice(n, size=k, replace=False)
    if dist == "gaussian":
        vals = rng.standard_normal(k)
        while np.linalg.norm(vals) == 0.0:  # probability zero, but total
            vals = rng.standard_normal(k)
    elif dist == "bernoulli":
        vals = rng.integers(0, 2, size=k) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown nonzero distribution: {dist!r}")
    x = np.zeros(n)
    x[support] = vals
    return x / np.linalg.norm(x)


def gen_noise(ax: np.ndarray, msnr_db: float, seed: int) -> np.ndarray:
    """Gaussian-direction noise scaled to an exact measurement SNR in dB.

    msnr_db = +inf yields zero noise.
    """
    ax = np.asarray(ax, dtype=float)
    if math.isinf(msnr_db) and msnr_db > 0:
        return np.zeros_like(ax)
    if not math.isfinite(msnr_db):
        raise ValueError("msnr_db must be finite or +inf")
    power = np.linalg.norm(ax)
    if power == 0.0:
        raise ValueError("zero signal power")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(ax.shape[0])
    while np.linalg.norm(g) == 0.0:
        g = rng.standard_normal(ax.shape[0])
    return g * (power * 10.0 ** (-msnr_db / 20.0) / np.linalg.norm(g))


RSNR_CAP_DB = 300.0


def rsnr_db(x_hat: np.ndarray, x_star: np.ndarray) -> float:
    """Recovery SNR 20*log10(||x*|| / ||x_hat - x*||), capped at +300 dB."""
    x_star = np.asarray(x_star, dtype=float)
    ref = np.linalg.norm(x_star)
    if ref == 0.0:
        raise ValueError("x_star must be nonzero")
    err = np.linalg.norm(np.asarray(x_hat, dtype=float) - x_star)
    if err == 0.0:
        return RSNR_CAP_DB
    return min(RSNR_CAP_DB, float(20.0 * np.log10(ref / err)))


def ci95(samples) -> tuple[float, float]:
    """Student-t 95% confidence interval for the mean."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    mean = float(samples.mean())
    half = float(stats.t.ppf(0.975, n - 1) * samples.std(ddof=1) / math.sqrt(n))
    return mean - half, mean + half


# ---------------------------------------------------------------------------
# experiment specification

@dataclass(frozen=True)
class ExperimentSpec:
    M: int
    N: int
    k_values: tuple[int, ...]
    dist: str = "gaussian"                  # "gaussian" | "bernoulli"
    penalty: Penalty | None = None          # required for pgg/apgg
    kappas: tuple[float, ...] = (1e-4,)
    msnrs: tuple[float, ...] = (math.inf,)  # +inf means noiseless
    trials: int = 20
    success_threshold_db: float = 40.0
    base_seed: int = 0
    solver: str = "pgg"
    apgg_k: int = 4
    irls_p: float = 0.5
    gamma_assumed: float = 0.5              # NSC assumption for iteration bound
    max_iters: int | None = None            # None: worst-case bound, capped
    early_stop_tol: float = 0.0
    trace_every: int = 0
    shared_matrix: bool = False
    stop_at_first_failure: bool = False
    experiment_id: str = "exp"

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver: {self.solver!r}")
        if not self.k_values:
            raise ValueError("k_values must be nonempty")
        if not all(1 <= k < self.M for k in self.k_values):
            raise ValueError("require 1 <= K < M")
        if not self.M < self.N:
            raise ValueError("require M < N")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.solver in ("pgg", "apgg") and self.penalty is None:
            raise ValueError(f"solver {self.solver!r} requires a penalty")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentSpec":
        obj = dict(obj)
        if "k_range" in obj:
            lo, hi = obj.pop("k_range")
            obj["k_values"] = tuple(range(int(lo), int(hi) + 1))
        elif "K" in obj:
            obj["k_values"] = (int(obj.pop("K")),)
        else:
            obj["k_values"] = tuple(int(k) for k in obj.pop("k_values", ()))
        if "kappa" in obj:
            obj["kappas"] = (float(obj.pop("kappa")),)
        elif "kappas" in obj:
            obj["kappas"] = tuple(float(k) for k in obj["kappas"])
        raw = obj.pop("msnr_db", obj.pop("msnrs", None))
        if raw is None:
            obj["msnrs"] = (math.inf,)
        else:
            if not isinstance(raw, (list, tuple)):
                raw = [raw]
            obj["msnrs"] = tuple(
                math.inf if v in ("inf", None) else float(v) for v in raw)
        if obj.get("penalty") is not None:
            obj["penalty"] = Penalty.from_json(obj["penalty"])
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in obj.items() if k in known})


def expand_nonconvexity_grid(spec: ExperimentSpec, kind: str,
                             grid) -> list[ExperimentSpec]:
    """One spec per grid value, with a unit-alpha penalty of that
    non-convexity and a labeled experiment id."""
    out = []
    for nc in grid:
        pen = penalty_with_nonconvexity(kind, nc)
        out.append(replace(spec, penalty=pen,
                           experiment_id=f"{spec.experiment_id}_nc{nc:g}"))
    return out


# ---------------------------------------------------------------------------
# trial execution

@dataclass(frozen=True)
class TrialResult:
    experiment_id: str
    M: int
    N: int
    K: int
    dist: str
    penalty_kind: str
    nonconvexity: float
    kappa: float
    msnr_db: float
    zeta: float
    solver: str
    trial: int
    seed: int
    rsnr_db: float
    success: bool
    iters: int
    wall_ms: float


@dataclass
class ExperimentRecord:
    """Aggregate over the trials of one sweep cell."""
    experiment_id: str
    K: int
    kappa: float
    msnr_db: float
    rsnr_values: list[float]
    success_rate: float
    mean_rsnr_db: float
    ci95_low: float
    ci95_high: float
    wall_time_ms: float
    trials: list[TrialResult] = field(default_factory=list)


def _resolve_max_iters(spec, pen, model, kappa, x0, x_star):
    if spec.max_iters is not None:
        return spec.max_iters
    m0 = float(np.linalg.norm(x0 - x_star))
    if m0 == 0.0:
        return 1
    c = constants(pen, model, spec.gamma_assumed, m0, spec.N)
    bound = default_max_iters(c.C3, m0, model.d, pen.alpha(), spec.N, kappa)
    return min(bound, MAX_ITER_CAP)


def run_trial(spec: ExperimentSpec, k: int, kappa: float, msnr: float,
              cell: tuple[int, ...], trial: int) -> TrialResult:
    """Generate one instance, run the configured solver, score the result."""
    seed_mat = (derive_seed(spec.base_seed, *cell, 0, 0, 0) if spec.shared_matrix
                else derive_seed(spec.base_seed, *cell, k, trial, 0))
    seed_sig = derive_seed(spec.base_seed, *cell, k, trial, 1)
    seed_noise = derive_seed(spec.base_seed, *cell, k, trial, 2)
    a = gen_matrix(spec.M, spec.N, seed_mat)
    x_star = gen_signal(spec.N, k, spec.dist, seed_sig)
    ax = a @ x_star
    y = ax + gen_noise(ax, msnr, seed_noise)

    t0 = time.perf_counter()
    zeta = 0.0
    pen = spec.penalty
    if spec.solver in ("pgg", "apgg", "l1"):
        if spec.solver == "l1":
            pen = Penalty("abs")
        if spec.solver == "apgg":
            model = ben_israel(a, spec.apgg_k)
            zeta = model.zeta
        else:
            model = exact_pinv(a)
        x0 = model.apply_pinv(y)
        max_iters = _resolve_max_iters(spec, pen, model, kappa, x0, x_star)
        cfg = SolverConfig(kappa=kappa, max_iters=max_iters,
                           early_stop_tol=spec.early_stop_tol,
                           trace_every=spec.trace_every)
        if spec.solver == "apgg":
            result = apgg_solve(model, pen, y, cfg, x_star=x_star)
        else:
            result = pgg_solve(model, pen, y, cfg, x_star=x_star)
    elif spec.solver == "omp":
        result = omp_solve(a, y, k)
    else:  # irls
        result = irls_solve(a, y, spec.irls_p)
    wall_ms = (time.perf_counter() - t0) * 1e3

    snr = rsnr_db(result.x_hat, x_star)
    return TrialResult(
        experiment_id=spec.experiment_id, M=spec.M, N=spec.N, K=k,
        dist=spec.dist,
        penalty_kind=pen.kind if pen is not None else "",
        nonconvexity=pen.nonconvexity() if pen is not None else 0.0,
        kappa=kappa, msnr_db=msnr, zeta=zeta, solver=spec.solver,
        trial=trial, seed=seed_sig, rsnr_db=snr,
        success=snr > spec.success_threshold_db,
        iters=result.iters_run, wall_ms=wall_ms,
    )


def _aggregate(spec, k, kappa, msnr, trials) -> ExperimentRecord:
    vals = [t.rsnr_db for t in trials]
    if len(vals) >= 2:
        lo, hi = ci95(vals)
    else:
        lo = hi = vals[0]
    return ExperimentRecord(
        experiment_id=spec.experiment_id, K=k, kappa=kappa, msnr_db=msnr,
        rsnr_values=vals,
        success_rate=float(np.mean([t.success for t in trials])),
        mean_rsnr_db=float(np.mean(vals)),
        ci95_low=lo, ci95_high=hi,
        wall_time_ms=float(sum(t.wall_ms for t in trials)),
        trials=list(trials),
    )


def _run_trials(spec, k, kappa, msnr, cell, jobs):
    """Trials of one cell, sequentially or on a process pool; the result
    order is by trial index either way."""
    if jobs <= 1:
        return [run_trial(spec, k, kappa, msnr, cell, t)
                for t in range(spec.trials)]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_trial, [spec] * spec.trials,
                             [k] * spec.trials, [kappa] * spec.trials,
                             [msnr] * spec.trials, [cell] * spec.trials,
                             range(spec.trials)))


def run_phase(spec: ExperimentSpec,
              jobs: int = 1) -> tuple[list[ExperimentRecord], int]:
    """Sweep sparsity K and report per-K aggregates plus the crucial
    sparsity: the largest K below the first failure (first-failure rule,
    so all smaller K also succeeded on every trial)."""
    kappa = spec.kappas[0]
    msnr = spec.msnrs[0]
    records = []
    first_failure = None
    for ki, k in enumerate(sorted(spec.k_values)):
        trials = _run_trials(spec, k, kappa, msnr, (ki,), jobs)
        rec = _aggregate(spec, k, kappa, msnr, trials)
        records.append(rec)
        if rec.success_rate < 1.0 and first_failure is None:
            first_failure = k
            if spec.stop_at_first_failure:
                break
    if first_failure is None:
        kmax = max(spec.k_values)
    else:
        kmax = first_failure - 1
    return records, kmax


def run_rsnr_sweep(spec: ExperimentSpec, jobs: int = 1) -> list[ExperimentRecord]:
    """Full factorial (kappa x msnr) sweep at fixed sparsity."""
    if len(spec.k_values) != 1:
        raise ValueError("rsnr sweep runs at a single sparsity level")
    k = spec.k_values[0]
    records = []
    for ki, kappa in enumerate(spec.kappas):
        for mi, msnr in enumerate(spec.msnrs):
            trials = _run_trials(spec, k, kappa, msnr, (ki, mi), jobs)
            records.append(_aggregate(spec, k, kappa, msnr, trials))
    return records


# ---------------------------------------------------------------------------
# CSV persistence (17 significant digits for exact round-trips)

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


TRIAL_COLUMNS = ("experiment_id", "M", "N", "K", "dist", "penalty_kind",
                 "nonconvexity", "kappa", "msnr_db", "zeta", "solver",
                 "trial", "seed", "rsnr_db", "success", "iters", "wall_ms")

AGGREGATE_COLUMNS = ("experiment_id", "K", "kappa", "msnr_db", "trials",
                     "success_rate", "mean_rsnr_db", "ci95_low", "ci95_high",
                     "wall_ms")


def write_trials_csv(path, records: list[ExperimentRecord],
                     timing: bool = False) -> None:
    """One row per trial.  Wall-clock times are suppressed (written as 0)
    unless timing=True, so default output is byte-identical across reruns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for rec in records:
            for t in rec.trials:
                row = [t.experiment_id, t.M, t.N, t.K, t.dist, t.penalty_kind,
                       t.nonconvexity, t.kappa, t.msnr_db, t.zeta, t.solver,
                       t.trial, t.seed, t.rsnr_db, t.success, t.iters,
                       t.wall_ms if timing else 0.0]
                w.writerow([_fmt(v) for v in row])


def write_aggregate_csv(path, records: list[ExperimentRecord],
                        timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for rec in records:
            row = [rec.experiment_id, rec.K, rec.kappa, rec.msnr_db,
                   len(rec.rsnr_values), rec.success_rate, rec.mean_rsnr_db,
                   rec.ci95_low, rec.ci95_high,
                   rec.wall_time_ms if timing else 0.0]
            w.writerow([_fmt(v) for v in row])
