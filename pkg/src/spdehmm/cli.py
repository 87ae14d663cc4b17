"""Command-line entry point: ``spdehmm {coeffs,run,sweep,field} CONFIG``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .amplitude import averaged_closed_form, averaged_coeffs, burgers_homog_coeffs, homog_coeffs_general, limit_coeffs
from .config import ConfigError, RunConfig
from .direct import BudgetExceeded, Trajectory, field_csv, reconstruct_field, run_direct_stiff
from .harness import ConvergenceTable, convergence_sweep, default_workers, trajectory_compare
from .hmm import StabilityError, hmm_macro_run_advective
from .sde import Diverged, RngStream
from .spectral import build_truncated_system

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_BUDGET = 0, 1, 2, 3

log = logging.getLogger("spdehmm")


def _g12(v: float) -> str:
    return format(float(v), ".12g")


def _header(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.harness.seed}


def _emit(text: str, out: Path | None, cfg: RunConfig, command: str, extra: dict | None = None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    manifest = cfg.manifest(command, extra)
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands


def coeff_rows(cfg: RunConfig) -> list[dict]:
    """One row per requested truncation plus the limit row ``M = inf``.

    Burgers rows use the closed-form series summed through ``k = M + 1``;
    other models use the general formula on fast modes ``2..M+1``.
    """
    rows = []
    for M in cfg.harness.M_list:
        model = cfg.build_model(M)
        if cfg.model.kind == "burgers":
            q = model.noise.q
            c = burgers_homog_coeffs(q[1] if len(set(q[1:])) == 1 else q, model.nu, M)
        else:
            c = homog_coeffs_general(model, M)
        rows.append({"M": M, "coeffs": c})
    if cfg.model.kind != "custom":
        rows.append({"M": "inf", "coeffs": limit_coeffs(cfg.build_model())})
    return rows


def cmd_coeffs(cfg: RunConfig, out: Path | None) -> int:
    rows = coeff_rows(cfg)
    buf = io.StringIO()
    for k, v in _header(cfg).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M", "A_M", "C_M", "Bc", "C", "D", "tail"])
    records = []
    for r in rows:
        c = r["coeffs"]
        vals = [c.A, c.c_reduced, c.Bc, c.C, c.D, c.tail_bound]
        w.writerow([r["M"]] + [_g12(v) for v in vals])
        records.append(dict(zip(["M", "A_M", "C_M", "Bc", "C", "D", "tail"], [r["M"]] + [float(_g12(v)) for v in vals])))
    _emit(buf.getvalue(), out, cfg, "coeffs")
    if out is not None:
        payload = {**_header(cfg), "rows": records}
        out.with_suffix(".json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def _trajectory(cfg: RunConfig) -> Trajectory:
    hc, M = cfg.hmm, cfg.model.M
    model = cfg.build_model(M)
    if cfg.scaling == "advective":
        system = build_truncated_system(model, M)
        params = cfg.hmm_params()
        run = hmm_macro_run_advective(system, params, RngStream(cfg.harness.seed), hc.X0)
        ref = averaged_closed_form(averaged_coeffs(model, M), hc.X0, run.times)
        return Trajectory(run.times, {"X_hmm": run.X[:, 0], "X_hom": np.asarray(ref)}, {})
    params = cfg.hmm_params()
    over = {k: getattr(params, k) for k in ("h", "K", "L", "Lp", "lT", "epsilon", "include_b1")}
    return trajectory_compare(model, M, hc.p, hc.T, cfg.harness.seed, hc.X0, hc.dt_macro, **over)


def cmd_run(cfg: RunConfig, out: Path | None) -> int:
    cfg.check_stability()
    traj = _trajectory(cfg)
    traj.meta = _header(cfg)
    _emit(traj.to_csv(), out, cfg, "run")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path | None, workers: int | None) -> int:
    hc, hs = cfg.hmm, cfg.harness
    lo, hi = hs.p_range
    rows = []
    for M in hs.M_list:
        over = {"K": hc.K, "lT": hc.lT, "include_b1": hc.include_b1 or None}
        tab = convergence_sweep(
            cfg.build_model(M), M, range(lo, hi + 1), n_seeds=hs.seeds, seed=hs.seed, X0=hc.X0,
            dt_macro=hc.dt_macro, n_macro=int(round(hc.T / hc.dt_macro)), workers=workers,
            row_time_cap=hs.row_time_cap, series_indexing=hs.series_indexing, overrides=over,
            mixed=hs.mixed_metric,
        )
        rows.extend(tab.rows)
    table = ConvergenceTable(rows, _header(cfg))
    _emit(table.to_csv(), out, cfg, "sweep")
    return EXIT_OK


def cmd_field(cfg: RunConfig, out: Path | None) -> int:
    hs, hc, M = cfg.harness, cfg.hmm, cfg.model.M
    x_grid = np.linspace(0.0, math.pi, hs.n_x)
    if hs.fast_modes:
        if hc.epsilon is None:
            raise ConfigError("hmm.epsilon", "a field with fast modes needs a direct run at finite epsilon")
        system = build_truncated_system(cfg.build_model(M), M)
        stiff = hc.epsilon**2 if cfg.scaling == "diffusive" else hc.epsilon
        dt_out = hc.dt_macro
        sub = math.ceil(dt_out * 4.0 * system.lambda_max / stiff)
        times, xs, ys = run_direct_stiff(
            system, hc.epsilon, dt_out / sub, hc.T, RngStream(hs.seed), x0=hc.X0,
            dt_out=dt_out, scaling=cfg.scaling, return_fast=True,
        )
        u = reconstruct_field(xs[:, 0, 0], x_grid, ys[:, 0, :])
    else:
        cfg.check_stability()
        traj = _trajectory(cfg)
        times = traj.times
        u = reconstruct_field(traj.series["X_hmm"], x_grid)
    _emit(field_csv(times, x_grid, u, _header(cfg)), out, cfg, "field")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spdehmm", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("coeffs", "amplitude-equation coefficient table"),
        ("run", "coupled trajectory comparison"),
        ("sweep", "convergence table over p"),
        ("field", "space-time reconstruction u(x, t)"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="TOML or JSON config, or a manifest written by an earlier run")
        p.add_argument("-o", "--output", type=Path, help="output file (stdout if omitted)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="BLOCK.KEY=VALUE")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None, help="process count (default: $SPDEHMM_WORKERS or 1)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.overrides:
            cfg = cfg.with_overrides(args.overrides)
        if args.command == "coeffs":
            return cmd_coeffs(cfg, args.output)
        if args.command == "run":
            return cmd_run(cfg, args.output)
        if args.command == "sweep":
            workers = args.workers if args.workers is not None else default_workers()
            return cmd_sweep(cfg, args.output, workers)
        return cmd_field(cfg, args.output)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StabilityError, Diverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
