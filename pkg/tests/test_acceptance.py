"""Acceptance suite: one test per release criterion, each printing a
single pass/fail line with its runtime.

Criteria 4-8 write their results through the standard CSV writers into a
shared output directory; criterion 11 reruns them from scratch and checks
the CSV files are byte-identical.
"""

import math
import time
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest

from oracles import l1_min, penalty_invariant_violations, random_penalties, sample_grid
from wcsparse.analysis import (GridSpec, constants, gamma_l0_certify,
                               jmin_bruteforce, nsc_l1_exact)
from wcsparse.harness import (ExperimentSpec, derive_seed,
                              expand_nonconvexity_grid, gen_matrix, gen_signal,
                              run_phase, run_rsnr_sweep, write_aggregate_csv,
                              write_trials_csv)
from wcsparse.penalty import KINDS, Penalty, penalty_with_nonconvexity
from wcsparse.pinv import ben_israel, ben_israel_trace, write_matrix_csv
from wcsparse.solver import SolverConfig, apgg_solve


def _verdict(num, elapsed, limit, failures):
    ok = not failures and elapsed < limit
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} "
          f"({elapsed:.1f}s / limit {limit:.0f}s)")
    assert not failures, "; ".join(failures)
    assert elapsed < limit, f"runtime {elapsed:.1f}s exceeds {limit:.0f}s"


@pytest.fixture(scope="module")
def outroot(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


_CACHE = {}


def _cached(name, runner, outdir):
    if name not in _CACHE:
        outdir.mkdir(parents=True, exist_ok=True)
        _CACHE[name] = runner(outdir)
    return _CACHE[name]


# ---------------------------------------------------------------------------
# 1. penalty invariant battery

def test_criterion_01_penalty_invariants():
    t0 = time.perf_counter()
    grid = sample_grid()
    failures = []
    for kind in KINDS:
        for pen in random_penalties(kind):
            for msg in penalty_invariant_violations(pen, grid):
                failures.append(f"{kind}: {msg}")
    _verdict(1, time.perf_counter() - t0, 10.0, failures)


# ---------------------------------------------------------------------------
# 2. quadratic refinement of the approximate pseudo-inverse

def _well_conditioned_matrix():
    # spread singular values in [1, sqrt(2)] so the initial precision is
    # well below 0.9 and the sub-1e-6 clause is exercised
    rng = np.random.default_rng(7)
    q, _ = np.linalg.qr(rng.standard_normal((50, 50)))
    a = np.zeros((20, 50))
    a[np.arange(20), np.arange(20)] = np.linspace(1.0, math.sqrt(2.0), 20)
    return a @ q.T


def test_criterion_02_quadratic_contraction():
    t0 = time.perf_counter()
    matrices = [gen_matrix(20, 50, derive_seed(3, 100, i)) for i in range(20)]
    matrices.append(_well_conditioned_matrix())
    failures = []
    exercised = 0
    for i, a in enumerate(matrices):
        zetas = [row["zeta"] for row in ben_israel_trace(a, 6)]
        for k in range(6):
            if not zetas[k + 1] <= zetas[k] ** 2 + 1e-9:
                failures.append(f"matrix {i}: zeta[{k + 1}]={zetas[k + 1]:.3e} "
                                f"> zeta[{k}]^2={zetas[k] ** 2:.3e}")
        if zetas[0] <= 0.9:
            exercised += 1
            if not min(zetas[1:7]) < 1e-6:
                failures.append(f"matrix {i}: zeta0={zetas[0]:.3f} but "
                                f"min zeta={min(zetas[1:7]):.3e} >= 1e-6")
    if exercised == 0:
        failures.append("no matrix with zeta0 <= 0.9")
    _verdict(2, time.perf_counter() - t0, 10.0, failures)


# ---------------------------------------------------------------------------
# 3. mean precision at 200x1000

def test_criterion_03_zeta_reproduction():
    t0 = time.perf_counter()
    z0, z4 = [], []
    for i in range(50):
        a = gen_matrix(200, 1000, derive_seed(4, i))
        rows = ben_israel_trace(a, 4)
        z0.append(rows[0]["zeta"])
        z4.append(rows[4]["zeta"])
    m0, m4 = float(np.mean(z0)), float(np.mean(z4))
    failures = []
    if not 0.86 <= m0 <= 0.96:
        failures.append(f"mean zeta(k=0)={m0:.4f} outside [0.86, 0.96]")
    if not 0.17 <= m4 <= 0.27:
        failures.append(f"mean zeta(k=4)={m4:.4f} outside [0.17, 0.27]")
    _verdict(3, time.perf_counter() - t0, 300.0, failures)


# ---------------------------------------------------------------------------
# shared 50x250 K=5 ensemble runners (criteria 4-8; rerun by criterion 11)

_NC = 10.0 ** 0.75


def _ensemble_spec(**kw):
    base = dict(M=50, N=250, k_values=(5,), solver="pgg",
                penalty=penalty_with_nonconvexity("mcp", _NC),
                kappas=(1e-4,), msnrs=(math.inf,), trials=25,
                max_iters=25_000, base_seed=42)
    base.update(kw)
    return ExperimentSpec(**base)


def _write_records(outdir, records):
    write_trials_csv(outdir / "trials.csv", records)
    write_aggregate_csv(outdir / "aggregate.csv", records)


def _run_error_scaling(outdir):
    records = []
    for kappa in (1e-3, 1e-4, 1e-5):
        spec = _ensemble_spec(kappas=(kappa,),
                              max_iters=math.ceil(2.5 / kappa),
                              experiment_id=f"err_scaling_{kappa:g}")
        records.extend(run_rsnr_sweep(spec))
    _write_records(outdir, records)
    return records


def _run_noise_floor(outdir):
    spec = _ensemble_spec(msnrs=(20.0, 40.0, 60.0),
                          experiment_id="noise_floor")
    records = run_rsnr_sweep(spec)
    _write_records(outdir, records)
    return records


def _run_proj_comparison(outdir):
    records = []
    for solver in ("pgg", "apgg"):
        spec = _ensemble_spec(solver=solver, apgg_k=4,
                              experiment_id=f"proj_{solver}")
        records.extend(run_rsnr_sweep(spec))
    _write_records(outdir, records)
    return records


def _run_residual_envelopes(outdir):
    pen = penalty_with_nonconvexity("mcp", 1.0)
    kappa = 1e-4
    rows, runs = [], []
    for i in range(10):
        a = gen_matrix(30, 90, derive_seed(26, i))
        model = ben_israel(a, 2)
        x_star = gen_signal(90, 3, "gaussian", derive_seed(27, i))
        y = a @ x_star
        c5 = constants(pen, model, 0.5, 1.0, 90).C5
        cfg = SolverConfig(kappa=kappa, max_iters=300, trace_every=1)
        result = apgg_solve(model, pen, y, cfg, x_star=x_star)
        norm_y = float(np.linalg.norm(y))
        for tp in result.trace:
            env = norm_y * model.zeta ** (tp.iteration + 1) + c5 * kappa / 2.0
            rows.append([float(i), float(tp.iteration), tp.residual, env])
        runs.append(result)
    write_matrix_csv(outdir / "residual_log.csv", np.array(rows))
    return rows


def _run_phase_grid(outdir):
    base = ExperimentSpec(M=50, N=250, k_values=tuple(range(1, 26)),
                          solver="pgg",
                          penalty=penalty_with_nonconvexity("mcp", _NC),
                          kappas=(4e-4,), trials=20, max_iters=15_000,
                          base_seed=303, stop_at_first_failure=True,
                          experiment_id="phase")
    specs = expand_nonconvexity_grid(base, "mcp", (0.01, 1.0, _NC, 100.0))
    specs.append(replace(base, solver="l1", penalty=None,
                         experiment_id="phase_l1"))
    records, kmaxes = [], {}
    for sp in specs:
        recs, kmax = run_phase(sp)
        records.extend(recs)
        kmaxes[sp.experiment_id] = kmax
    _write_records(outdir, records)
    return records, kmaxes


def _mean_error_db(record):
    # unit-norm signals: ||x_hat - x*|| = 10^(-rsnr/20)
    return float(np.mean([10.0 ** (-r / 20.0) for r in record.rsnr_values]))


# ---------------------------------------------------------------------------
# 4. error is linear in the step size

def test_criterion_04_error_scaling(outroot):
    t0 = time.perf_counter()
    records = _cached("c4", _run_error_scaling, outroot / "c4_run1")
    errs = [_mean_error_db(r) for r in records]
    failures = []
    for hi, lo, decade in ((errs[0], errs[1], "1e-3/1e-4"),
                           (errs[1], errs[2], "1e-4/1e-5")):
        ratio = hi / lo
        if not ratio >= 5.0:
            failures.append(f"decade {decade}: error ratio {ratio:.2f} < 5")
    _verdict(4, time.perf_counter() - t0, 600.0, failures)


# ---------------------------------------------------------------------------
# 5. noise floor tracks the measurement SNR

def test_criterion_05_noise_floor(outroot):
    t0 = time.perf_counter()
    records = _cached("c5", _run_noise_floor, outroot / "c5_run1")
    by_msnr = {r.msnr_db: r.mean_rsnr_db for r in records}
    failures = []
    for msnr in (20.0, 40.0, 60.0):
        rsnr = by_msnr[msnr]
        if not msnr - 10.0 <= rsnr <= msnr + 15.0:
            failures.append(f"MSNR {msnr:g}: mean RSNR {rsnr:.1f} outside band")
    if not by_msnr[20.0] < by_msnr[40.0] < by_msnr[60.0]:
        failures.append(f"mean RSNR not increasing with MSNR: {by_msnr}")
    _verdict(5, time.perf_counter() - t0, 900.0, failures)


# ---------------------------------------------------------------------------
# 6. approximate projection matches the exact one

def test_criterion_06_approx_matches_exact(outroot):
    t0 = time.perf_counter()
    records = _cached("c6", _run_proj_comparison, outroot / "c6_run1")
    means = {r.experiment_id: r.mean_rsnr_db for r in records}
    gap = abs(means["proj_apgg"] - means["proj_pgg"])
    failures = [] if gap <= 2.0 else [f"mean RSNR gap {gap:.2f} dB > 2 dB"]
    _verdict(6, time.perf_counter() - t0, 600.0, failures)


# ---------------------------------------------------------------------------
# 7. residual envelope of the approximate-projection iterates

def test_criterion_07_residual_envelope(outroot):
    t0 = time.perf_counter()
    rows = _cached("c7", _run_residual_envelopes, outroot / "c7_run1")
    failures = []
    for run, n, resid, env in rows:
        if not resid <= env + 1e-9:
            failures.append(f"run {run:g} iter {n:g}: residual {resid:.3e} "
                            f"exceeds envelope {env:.3e}")
    _verdict(7, time.perf_counter() - t0, 120.0, failures)


# ---------------------------------------------------------------------------
# 8. crucial sparsity vs non-convexity

def test_criterion_08_phase_shape(outroot):
    t0 = time.perf_counter()
    _, kmaxes = _cached("c8", _run_phase_grid, outroot / "c8_run1")
    k_lo = kmaxes["phase_nc0.01"]
    k_mid = kmaxes[f"phase_nc{_NC:g}"]
    k_hi = kmaxes["phase_nc100"]
    k_l1 = kmaxes["phase_l1"]
    failures = []
    if not k_mid >= k_lo:
        failures.append(f"Kmax({_NC:g})={k_mid} < Kmax(0.01)={k_lo}")
    if not k_hi < k_mid:
        failures.append(f"Kmax(100)={k_hi} >= Kmax({_NC:g})={k_mid}")
    if not abs(k_lo - k_l1) <= 1:
        failures.append(f"Kmax(0.01)={k_lo} not within 1 of l1 Kmax={k_l1}")
    _verdict(8, time.perf_counter() - t0, 1800.0, failures)


# ---------------------------------------------------------------------------
# 9. oracle agreements

def _null_space(a):
    _, sv, vh = np.linalg.svd(a)
    rank = int(np.sum(sv > max(a.shape) * np.finfo(float).eps * sv[0]))
    return vh[rank:].T


def _l0_constant_below_one(a, k):
    # direct rank version: gamma(l0) < 1 iff M >= 2K+1 and every
    # 2K-column submatrix has full column rank
    m, n = a.shape
    if m < 2 * k + 1:
        return False
    return all(np.linalg.matrix_rank(a[:, cols]) == 2 * k
               for cols in combinations(range(n), 2 * k))


def test_criterion_09_oracle_agreements():
    t0 = time.perf_counter()
    failures = []

    # hand-derived null-space constants for 1x2 instances
    for row, expected in (((1.0, 1.0), 1.0), ((1.0, 2.0), 2.0)):
        got = nsc_l1_exact(np.array([row]), 1).value
        if abs(got - expected) > 1e-9:
            failures.append(f"nsc_l1({row}) = {got} != {expected}")

    # grid minimizer vs LP on random instances (objective gap within the
    # l1 Lipschitz constant times the grid offset)
    pen = Penalty("abs")
    for m, n, tag in ((2, 3, 91), (3, 6, 93)):
        for i in range(5):
            a = gen_matrix(m, n, derive_seed(tag, i))
            y = a @ gen_signal(n, 1, "gaussian", derive_seed(tag + 1, i))
            x_lp = l1_min(a, y)
            xp, *_ = np.linalg.lstsq(a, y, rcond=None)
            v = _null_space(a)
            c_star = v.T @ (x_lp - xp)
            radius = max(1.0, 1.5 * float(np.max(np.abs(c_star), initial=0.0)))
            grid = GridSpec(radius, 201)
            x_grid = jmin_bruteforce(a, y, pen, grid)
            gap = float(np.abs(x_grid).sum() - np.abs(x_lp).sum())
            limit = math.sqrt(n) * grid.max_offset(v.shape[1])
            if not -1e-7 <= gap <= limit:
                failures.append(f"{m}x{n} #{i}: l1 gap {gap:.3e} "
                                f"outside [0, {limit:.3e}]")

    # certification vs direct rank enumeration on tiny instances
    rng = np.random.default_rng(1000)
    for i in range(20):
        m = int(rng.integers(2, 6))
        n = int(rng.integers(m + 1, 8))
        k = int(rng.integers(1, 3))
        a = gen_matrix(m, n, derive_seed(94, i))
        if 2 * k > min(m, n):
            continue
        if gamma_l0_certify(a, k) != _l0_constant_below_one(a, k):
            failures.append(f"l0 certification mismatch on {m}x{n} K={k} #{i}")
    _verdict(9, time.perf_counter() - t0, 120.0, failures)


# ---------------------------------------------------------------------------
# 10. a sharper measure recovers where l1 fails

def test_criterion_10_l1_failure_instance():
    t0 = time.perf_counter()
    failures = []
    rng = np.random.default_rng(0)
    g = rng.standard_normal((3, 5))
    # first column nearly parallel to A @ x* so the l1 minimizer spreads
    a = np.column_stack([0.15 * g.sum(axis=1), g])
    x_star = np.zeros(6)
    x_star[0] = 1.0
    y = a @ x_star

    if np.linalg.norm(l1_min(a, y) - x_star) < 0.5:
        failures.append("l1 oracle unexpectedly recovered x*")
    if nsc_l1_exact(a, 1).value < 1.0:
        failures.append("l1 null-space constant unexpectedly below 1")
    if not gamma_l0_certify(a, 1):
        failures.append("l0 certification failed")

    grid = GridSpec(2.0, 201)
    dists = []
    for beta in (1.0, 10.0, 100.0):
        pen = Penalty("exp", sigma=1.0, argscale=beta)
        x_hat = jmin_bruteforce(a, y, pen, grid)
        dists.append(float(np.linalg.norm(x_hat - x_star)))
    if not all(b <= a_ + 1e-12 for a_, b in zip(dists, dists[1:])):
        failures.append(f"distances not non-increasing: {dists}")
    if not dists[-1] < 2.0 * grid.max_offset(3):
        failures.append(f"final distance {dists[-1]:.3e} >= "
                        f"{2.0 * grid.max_offset(3):.3e}")
    _verdict(10, time.perf_counter() - t0, 300.0, failures)


# ---------------------------------------------------------------------------
# 11. byte-identical reruns of criteria 4-8

def test_criterion_11_determinism(outroot):
    t0 = time.perf_counter()
    runners = {"c4": _run_error_scaling, "c5": _run_noise_floor,
               "c6": _run_proj_comparison, "c7": _run_residual_envelopes,
               "c8": _run_phase_grid}
    failures = []
    for name, runner in runners.items():
        _cached(name, runner, outroot / f"{name}_run1")  # ensure first run
        rerun_dir = outroot / f"{name}_run2"
        rerun_dir.mkdir(parents=True, exist_ok=True)
        runner(rerun_dir)
        run1 = outroot / f"{name}_run1"
        for f1 in sorted(run1.glob("*.csv")):
            f2 = rerun_dir / f1.name
            if not f2.exists():
                failures.append(f"{name}: rerun missing {f1.name}")
            elif f1.read_bytes() != f2.read_bytes():
                failures.append(f"{name}: {f1.name} differs between reruns")
    _verdict(11, time.perf_counter() - t0, 3600.0, failures)
