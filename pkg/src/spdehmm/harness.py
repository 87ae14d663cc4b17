"""Experiment drivers: coupled three-integrator runs, error metrics and
convergence sweeps over the accuracy index ``p``."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .amplitude import AmplitudeCoeffs, burgers_homog_coeffs, homog_coeffs_general, limit_coeffs
from .direct import Trajectory, fmt, run_amplitude_em
from .hmm import HmmParams, StabilityError, hmm_macro_run_diffusive
from .sde import Diverged, RngStream
from .spectral import ModelSpec, build_truncated_system

log = logging.getLogger(__name__)

WORKERS_ENV = "SPDEHMM_WORKERS"


def default_workers() -> int:
    return max(int(os.environ.get(WORKERS_ENV, "1")), 1)


def truncated_coeffs(model: ModelSpec, M: int, series_indexing: bool = False) -> AmplitudeCoeffs:
    """Coefficients of the amplitude equation that the ``M``-mode HMM approximates.

    By default these are the exact homogenized coefficients of the simulated
    truncation (fast modes ``2..M+1``).  ``series_indexing`` instead sums the
    Burgers series through ``k = M+1``, which brings in mode ``M+2``.
    """
    if series_indexing:
        if model.name != "burgers":
            raise ValueError("series indexing is defined for the Burgers series only")
        q = model.noise.q
        return burgers_homog_coeffs(q[1] if len(set(q[1:])) == 1 else q, model.nu, M)
    return homog_coeffs_general(model, M)


@dataclass
class CoupledRun:
    """HMM, truncated-homogenized and limit-amplitude runs on one Brownian path."""

    trajectory: Trajectory
    abar: np.ndarray  # HMM drift estimates, one per macro step
    sigbar: np.ndarray
    clamped: np.ndarray
    coeffs_M: AmplitudeCoeffs
    coeffs_inf: AmplitudeCoeffs
    dW: np.ndarray
    status: str = "ok"


def coupled_run(
    model: ModelSpec,
    M: int,
    params: HmmParams,
    seed: int,
    X0: float = 0.5,
    replica: int = 0,
    coeffs_M: AmplitudeCoeffs | None = None,
    coeffs_inf: AmplitudeCoeffs | None = None,
) -> CoupledRun:
    system = build_truncated_system(model, M)
    coeffs_M = coeffs_M or truncated_coeffs(model, M)
    coeffs_inf = coeffs_inf or limit_coeffs(model)
    rng = RngStream(seed, replica=replica)
    dt = params.dt_macro
    dW = math.sqrt(dt) * rng.child(purpose="macro").normal(params.n_macro)

    run = hmm_macro_run_diffusive(system, params, rng, X0, dW=dW)
    X_hom = run_amplitude_em(coeffs_M, X0, dt, dW)
    X_inf = run_amplitude_em(coeffs_inf, X0, dt, dW)
    traj = Trajectory(
        run.times,
        {"X_hmm": run.X[:, 0], "X_hom": X_hom, "X_inf": X_inf},
        {"seed": seed, "replica": replica, "p": params.p, "M": M},
    )
    return CoupledRun(traj, run.abar[:, 0], run.sigbar, run.clamped, coeffs_M, coeffs_inf, dW)


def error_metrics(
    run: CoupledRun,
    coeffs_M: AmplitudeCoeffs | None = None,
    coeffs_inf: AmplitudeCoeffs | None = None,
    mixed: bool = False,
) -> tuple[float, float]:
    """Mean absolute drift + diffusion errors of the HMM estimates.

    ``E_p`` compares with the truncated homogenized coefficients along
    ``X_hom``; ``E_lp`` with the limit coefficients along ``X_inf``.  With
    ``mixed=True`` the limit diffusion is evaluated along ``X_hom`` instead.
    Estimates are those used by the macro steps ``n = 0..N-1``.
    """
    coeffs_M = coeffs_M or run.coeffs_M
    coeffs_inf = coeffs_inf or run.coeffs_inf
    s = run.trajectory.series
    n = len(run.abar)
    if len(s["X_hom"]) != n + 1 or len(s["X_inf"]) != n + 1:
        raise ValueError("trajectories and estimates are on different grids")
    Xh, Xi = s["X_hom"][:n], s["X_inf"][:n]
    Ep = np.abs(run.abar - coeffs_M.drift(Xh)) + np.abs(run.sigbar - coeffs_M.diffusion(Xh))
    Xs = Xh if mixed else Xi
    Elp = np.abs(run.abar - coeffs_inf.drift(Xi)) + np.abs(run.sigbar - coeffs_inf.diffusion(Xs))
    return float(Ep.mean()), float(Elp.mean())


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ConvergenceRow:
    p: int
    M: int
    E_p: float = math.nan
    E_lp: float = math.nan
    se_Ep: float = math.nan
    se_Elp: float = math.nan
    status: str = "ok"
    seeds: int = 0
    runtime: float = 0.0
    clamp_rate: float = 0.0
    per_seed: list = field(default_factory=list)


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    meta: dict = field(default_factory=dict)

    HEADER = ("p", "M", "E_p", "E_lp", "se_Ep", "se_Elp", "status")

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in ("config_hash", "seed"):
            if key in self.meta:
                buf.write(f"# {key}={self.meta[key]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([r.p, r.M, fmt(r.E_p), fmt(r.E_lp), fmt(r.se_Ep), fmt(r.se_Elp), r.status])
        return buf.getvalue()

    def ok_rows(self) -> list[ConvergenceRow]:
        return [r for r in self.rows if r.status == "ok"]

    def slope(self) -> float:
        """Least-squares slope of ``log2 E_p`` against ``p`` over the ok rows."""
        rows = self.ok_rows()
        if len(rows) < 2:
            return math.nan
        p = np.array([r.p for r in rows], dtype=float)
        return float(np.polyfit(p, np.log2([r.E_p for r in rows]), 1)[0])


def _seed_job(args):
    model, M, params, seed, X0, r, coeffs_M, coeffs_inf, mixed = args
    try:
        run = coupled_run(model, M, params, seed, X0, r, coeffs_M, coeffs_inf)
    except Diverged as exc:
        return ("diverged", str(exc))
    Ep, Elp = error_metrics(run, mixed=mixed)
    return ("ok", (Ep, Elp, float(run.clamped.mean())))


def convergence_sweep(
    model: ModelSpec,
    M: int,
    ps,
    n_seeds: int = 8,
    seed: int = 0,
    X0: float = 0.5,
    dt_macro: float = 0.1,
    n_macro: int = 10,
    workers: int | None = None,
    row_time_cap: float = 600.0,
    series_indexing: bool = False,
    overrides: dict | None = None,
    mixed: bool = False,
) -> ConvergenceTable:
    """Error metrics for each ``p`` averaged over ``n_seeds`` independent paths.

    Unstable micro steps and divergent runs are recorded in the row status.
    Once a row exceeds ``row_time_cap`` seconds the remaining rows are skipped.
    """
    ps = list(ps)
    if not ps:
        raise ValueError("empty p range")
    workers = default_workers() if workers is None else workers
    coeffs_M = truncated_coeffs(model, M, series_indexing)
    coeffs_inf = limit_coeffs(model)
    system = build_truncated_system(model, M)
    rows = []
    capped = False
    for p in ps:
        row = ConvergenceRow(p, M)
        rows.append(row)
        if capped:
            row.status = "skipped"
            continue
        params = HmmParams.from_p(p, dt_macro, n_macro, **(overrides or {}))
        try:
            from .hmm import check_stability

            check_stability(system, params.h)
        except StabilityError as exc:
            log.info("p=%d: %s", p, exc)
            row.status = "unstable"
            continue
        t0 = time.perf_counter()
        jobs = [(model, M, params, seed, X0, r, coeffs_M, coeffs_inf, mixed) for r in range(n_seeds)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_seed_job, jobs))
        else:
            results = [_seed_job(j) for j in jobs]
        row.runtime = time.perf_counter() - t0
        if any(status != "ok" for status, _ in results):
            row.status = "diverged"
            continue
        vals = np.array([v for _, v in results])
        row.per_seed = vals[:, :2].tolist()
        row.seeds = len(vals)
        row.E_p, row.E_lp = vals[:, 0].mean(), vals[:, 1].mean()
        if len(vals) > 1:
            row.se_Ep, row.se_Elp = vals[:, :2].std(axis=0, ddof=1) / math.sqrt(len(vals))
        row.clamp_rate = float(vals[:, 2].mean())
        if row.runtime > row_time_cap:
            log.warning("p=%d took %.0fs, skipping the rest of the sweep", p, row.runtime)
            capped = True
    return ConvergenceTable(
        rows, {"seed": seed, "n_seeds": n_seeds, "X0": X0, "dt_macro": dt_macro, "n_macro": n_macro}
    )


def trajectory_compare(
    model: ModelSpec,
    M: int,
    p: int,
    T: float = 10.0,
    seed: int = 0,
    X0: float = 0.5,
    dt_macro: float = 0.1,
    **overrides,
) -> Trajectory:
    """One path of each integrator over ``[0, T]`` sharing macro increments."""
    n_macro = int(round(T / dt_macro))
    params = HmmParams.from_p(p, dt_macro, n_macro, **overrides)
    run = coupled_run(model, M, params, seed, X0)
    run.trajectory.meta.update({"T": T, "dt_macro": dt_macro})
    return run.trajectory
