"""Command-line entry point: ``periodic-loss {limit,simulate,bounds,fit,smoothing}``.

Every command writes CSV series and a JSON report into ``--out``; nothing
depends on wall-clock time, so identical config and seed give identical files.
Exit codes: 0 success, 2 config error, 3 data error, 4 budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import BudgetExceeded, ConfigError, DataError, __version__
from . import engine, estimate, stochastic, theory
from .config import StudyConfig

log = logging.getLogger("periodic_loss")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, cfg: StudyConfig, command: str, payload: dict) -> dict:
    report = {
        "command": command,
        "version": __version__,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "scenario": cfg.scenario,
        **payload,
    }
    report = _clean(report)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return report


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])


# ---------------------------------------------------------------------------
# commands


def cmd_limit(cfg: StudyConfig, out: Path) -> dict:
    inp = cfg.limit_inputs()
    avail = theory.availability(inp.mean_x, inp.mean_y)
    payload = {
        "inputs": {"mean_x": inp.mean_x, "mean_y": inp.mean_y, "u_bar": inp.u_bar, "n_cells": inp.n_cells},
        "L_inf": theory.expected_loss_limit(inp),
        "L_inf_per_cell": theory.expected_loss_limit(theory.LimitInputs(inp.mean_x, inp.mean_y, inp.u_bar, 1)),
        "availability": avail,
        "loss_fraction": theory.delta(inp.mean_x, inp.mean_y),
        "i_bar": theory.i_bar(inp.mean_y, inp.u_bar),
    }
    return write_json(out / "limit.json", cfg, "limit", payload)


def _study(cfg: StudyConfig, noisy: bool):
    limit = theory.expected_loss_limit(cfg.limit_inputs(n_cells=1))
    if not limit > 0:
        raise ConfigError("limit is zero: convergence stages need E[Y] > 0 and U_bar > 0")
    common = dict(interarrival=cfg.interarrival_model(), maintenance=cfg.maintenance_model(),
                  profile=cfg.utility_profile(), limit=limit, threshold=cfg.threshold)
    if cfg.study == "cell":
        return engine.CellStudy(n_cycles=cfg.n_cycles, **common)
    return engine.NetworkStudy(n_cells=cfg.n_cells, horizon=cfg.horizon, grid_step=cfg.grid_step,
                               noise=cfg.noise_model() if noisy else None, **common)


def cmd_simulate(cfg: StudyConfig, out: Path) -> dict:
    if cfg.study == "cell" and cfg.noise != "none":
        raise ConfigError("noise: only supported for study='network'")
    noisy = cfg.noise != "none"
    study = _study(cfg, noisy)
    summary = engine.replicate(study, cfg.reps, cfg.seed, cfg.threads)
    first = np.random.SeedSequence(cfg.seed).spawn(cfg.reps)[0]
    unit = "cycles" if cfg.study == "cell" else "hours"
    if cfg.study == "cell":
        series = study.series(first).running_by_cycle
        x = np.arange(1, len(series) + 1)
        write_csv(out / "running_by_cycle.csv", ["n", "loss", "relative_error"],
                  zip(x, series, engine.relative_error(series, study.limit)))
    else:
        run = study.run(first)
        write_csv(out / "running_by_time.csv", ["t", "loss", "relative_error"],
                  zip(run.grid, run.aggregate, engine.relative_error(run.aggregate, study.limit)))
    write_csv(out / "stages.csv", ["replication", f"stage_{unit}"], enumerate(summary.values))
    payload = {
        "study": cfg.study,
        "unit": unit,
        "limit_per_cell": study.limit,
        "threshold": cfg.threshold,
        "reps": cfg.reps,
        "stage": summary.as_dict(),
        "warnings": [],
    }
    if noisy and cfg.compare_clean:
        clean = engine.replicate(_study(cfg, False), cfg.reps, cfg.seed, cfg.threads)
        payload["clean_stage"] = clean.as_dict()
        if clean.median and summary.median is not None:
            payload["noise_relative_change"] = abs(summary.median - clean.median) / clean.median
    if summary.not_reached:
        payload["warnings"].append(f"{summary.not_reached} of {cfg.reps} replications did not reach "
                                   f"the {cfg.threshold:.0%} stage within the budget")
    report = write_json(out / "simulate.json", cfg, "simulate", payload)
    if summary.median is None:
        raise BudgetExceeded("median convergence stage not reached within the budget")
    return report


def cmd_bounds(cfg: StudyConfig, out: Path) -> dict:
    rows = []
    for lam in cfg.alpha_lambdas:
        for p in cfg.alpha_periods:
            rows.append((lam, p, stochastic.fourier_bound_exponential(lam, p, 100).alpha))
    write_csv(out / "alpha_grid.csv", ["lambda", "p", "alpha"], rows)

    p = cfg.period
    lam = cfg.lam
    fb = stochastic.fourier_bound_exponential(lam, p, cfg.fourier_terms)
    fg = stochastic.fourier_bound_general(stochastic.Exponential(lam), p, cfg.fourier_terms)
    fu = stochastic.fourier_bound_general(stochastic.Uniform(0.0, p), p, cfg.fourier_terms)
    b = theory.bound_inputs(lam, p, cfg.maintenance_model(), cfg.utility_profile(), fb)

    wrapped = {bins: stochastic.wrap_density(stochastic.Exponential(lam), p, bins)
               for bins in (cfg.bins, 2 * cfg.bins)}
    dist = {bins: [] for bins in wrapped}
    for bins, w in wrapped.items():
        cur = w
        for j in range(1, cfg.bound_js + 1):
            if j > 1:
                cur = stochastic.convolve_mod_p(cur, w)
            dist[bins].append(stochastic.sup_distance_to_uniform(cur))
    sup_rows = []
    for j in range(1, cfg.bound_js + 1):
        d, d2 = dist[cfg.bins][j - 1], dist[2 * cfg.bins][j - 1]
        bound = theory.theorem1_bound(j, fb, p)
        err = abs(d - d2)
        sup_rows.append({"j": j, "bound": bound, "measured": d, "grid_error": err,
                         "dominates": bool(d <= bound + err)})
    write_csv(out / "sup_bound.csv", ["j", "bound", "measured", "grid_error", "dominates"],
              ((r["j"], r["bound"], r["measured"], r["grid_error"], int(r["dominates"])) for r in sup_rows))

    cov = [theory.covariance_bound_report(j, k, b) for j in (1, 2, 5, 10, 20) for k in (1, 2, 5, 10, 20)]
    var = [{"n": n, "bound": theory.variance_upper_bound(n, b)} for n in cfg.variance_ns]
    payload = {
        "lambda": lam,
        "p": p,
        "fourier": {"alpha": fb.alpha, "C": fb.C, "N": fb.N, "tail": fb.tail},
        "general_exponential": {"alpha": fg.alpha, "C": fg.C,
                                "alpha_diff": abs(fg.alpha - fb.alpha), "C_diff": abs(fg.C - fb.C)},
        "general_uniform": {"alpha": fu.alpha, "C": fu.C},
        "bound_inputs": {"alpha": b.alpha, "C": b.C, "C_prime": b.C_prime, "p": b.p,
                         "i_bar": b.i_bar, "K": b.K, "e_y2": b.e_y2},
        "sup_bound": sup_rows,
        "covariance": cov,
        "variance": var,
    }
    return write_json(out / "bounds.json", cfg, "bounds", payload)


def cmd_fit(cfg: StudyConfig, out: Path) -> dict:
    if not cfg.tickets_path:
        raise ConfigError("tickets_path: required for fit")
    tickets = estimate.ingest_tickets(cfg.tickets_path, cfg.merge_overlaps)
    fit = estimate.fit_interarrival(tickets.records, cfg.n_cells)
    ms = estimate.maintenance_stats(tickets.records)
    write_csv(out / "maintenance_hist.csv", ["lo_hours", "hi_hours", "count"],
              zip(ms.edges[:-1], ms.edges[1:], ms.counts))
    try:
        deltas = estimate.rolling_delta(tickets.records, cfg.delta_window, cfg.delta_step)
    except DataError as exc:
        log.warning("rolling delta skipped: %s", exc)
        deltas = []
    write_csv(out / "delta.csv", ["start_h", "end_h", "delta", "n_cycles", "flag"],
              ((d.start, d.end, d.delta, d.n_cycles, d.flag) for d in deltas))
    payload = {
        "tickets": {"rows": tickets.n_rows, "rejected": [list(r) for r in tickets.rejected],
                    "merged": tickets.n_merged},
        "interarrival": {"lambda_hat": fit.lambda_hat, "n_samples": fit.n_samples,
                         "ks_statistic": fit.ks_statistic, "ks_threshold_05": fit.ks_threshold_05,
                         "ks_pass": fit.ks_pass, "per_cell_lambda": fit.per_cell_lambda,
                         "n_cells": fit.n_cells},
        "maintenance": {"mean_y": ms.mean_y, "e_y2": ms.e_y2, "n": ms.n, "unresolved": ms.n_unresolved},
        "delta_flags": sum(1 for d in deltas if d.flag),
    }
    u_bar = None
    if cfg.kpi_path:
        kpi = estimate.ingest_kpi(cfg.kpi_path)
        pf = estimate.weekly_profile(kpi.records, cfg.fold)
        u_bar = pf.u_bar
        write_csv(out / "profile.csv", ["slot", "traffic_gb"], enumerate(pf.profile.values))
        payload["kpi"] = {"rows": kpi.n_rows, "rejected": [list(r) for r in kpi.rejected],
                          "missing_hours": kpi.gaps, "u_bar": pf.u_bar, "imputed_slots": list(pf.imputed),
                          "fold": cfg.fold}
    elif cfg.u_bar is not None:
        u_bar = cfg.u_bar
    if u_bar is not None:
        inp = theory.LimitInputs(1.0 / fit.per_cell_lambda, ms.mean_y, u_bar, cfg.n_cells)
        payload["limit"] = {"L_inf": theory.expected_loss_limit(inp),
                            "loss_fraction": theory.delta(inp.mean_x, inp.mean_y), "u_bar": u_bar}
    return write_json(out / "fit.json", cfg, "fit", payload)


def cmd_smoothing(cfg: StudyConfig, out: Path) -> dict:
    p, bins = cfg.smoothing_period, cfg.bins
    base = stochastic.wrap_density(stochastic.Exponential(cfg.smoothing_lambda), p, bins)
    gauss = stochastic.wrap_density(stochastic.Gaussian(0.0, 1.0), p, bins)
    columns, distances = {}, {}
    for n in sorted(set(cfg.n_gaussians)):
        cur = base
        for _ in range(n):
            cur = stochastic.convolve_mod_p(cur, gauss)
        columns[n] = cur.values
        distances[n] = stochastic.sup_distance_to_uniform(cur)
    order = sorted(columns)
    write_csv(out / "smoothing.csv", ["x"] + [f"density_{n}_gaussians" for n in order],
              zip(base.centers, *(columns[n] for n in order)))
    d = [distances[n] for n in order]
    payload = {
        "lambda": cfg.smoothing_lambda,
        "p": p,
        "bins": bins,
        "sup_distance": {str(n): distances[n] for n in order},
        "monotone": all(b <= a for a, b in zip(d, d[1:])),
    }
    return write_json(out / "smoothing.json", cfg, "smoothing", payload)


COMMANDS = {
    "limit": cmd_limit,
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "fit": cmd_fit,
    "smoothing": cmd_smoothing,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="periodic-loss", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--reps", type=int, help="replications")
    ap.add_argument("--threads", type=int, help="worker processes for replications")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args) -> StudyConfig:
    data = {}
    if args.config:
        data = StudyConfig.load(args.config).to_dict()
    for key, attr in (("seed", "seed"), ("out_dir", "out"), ("reps", "reps"), ("threads", "threads")):
        v = getattr(args, attr)
        if v is not None:
            data[key] = v
    return StudyConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 4
    log.info("wrote %s report to %s", args.command, out)
    if args.verbose:
        print(json.dumps(report, sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
