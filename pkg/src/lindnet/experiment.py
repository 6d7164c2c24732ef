"""Run configured experiments and write their artifacts.

Each run owns one directory named ``<config digest>-seed<seed>`` holding

* ``trajectory.csv``: ``step,time,<observables...>,deltaL_re,deltaL_im,sr_residual``
* ``reference.csv``: exact steady-state values (models up to the exact-solver size limit)
* ``summary.json``: final values, relative errors, convergence flag, effective config,
  source version and seed.

Floats are written in shortest round-trip form so identical runs give
byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ExperimentConfig
from .ed_oracle import MAX_SITES, evolve_rk4, measure, reference_csv, standard_observables, steady_state
from .network import feedforward
from .sr_solver import Mode, TrajectoryRecord, run

log = logging.getLogger(__name__)

OUT_ENV = "LINDNET_OUT"
DEFAULT_OUT = "runs"
REPORT_TOL = 1e-2
PROGRESS_EVERY = 100

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class OutputExistsError(FileExistsError):
    pass


@dataclass
class RunOutcome:
    directory: Path
    exit_code: int
    summary: dict


def output_root(cli_out: str | None, cfg: ExperimentConfig) -> Path:
    """``--out`` beats ``output.directory`` beats ``$LINDNET_OUT`` beats ``./runs``."""
    return Path(cli_out or cfg.output.directory or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def run_directory(root: Path, cfg: ExperimentConfig) -> Path:
    return Path(root) / f"{cfg.digest()}-seed{cfg.solver.seed}"


def prepare_directory(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not force:
        raise OutputExistsError(f"{path} already holds results; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def fmt(x) -> str:
    return repr(float(x))


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def trajectory_csv(records: list[TrajectoryRecord], names: list[str], every: int = 1) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "time", *names, "deltaL_re", "deltaL_im", "sr_residual"])
    last = len(records) - 1
    for i, rec in enumerate(records):
        if i % every and i != last:
            continue
        time = "" if rec.time is None else fmt(rec.time)
        w.writerow([rec.step, time, *(fmt(rec.observables[n]) for n in names), fmt(rec.deltaL_re),
                    fmt(rec.deltaL_im), fmt(rec.sr_residual)])
    return buf.getvalue()


def _reference(model, observables):
    if model.n_sites > MAX_SITES:
        return None
    return measure(steady_state(model), observables)


def _relative_errors(values: dict, ref: dict | None) -> dict | None:
    if ref is None:
        return None
    return {k: abs(values[k] - ref[k]) / abs(ref[k]) if ref[k] != 0 else abs(values[k]) for k in ref}


def _progress(quiet: bool):
    if quiet:
        return None

    def report(rec: TrajectoryRecord):
        if rec.step % PROGRESS_EVERY == 0:
            log.info("step %d  |deltaL| = %.3e", rec.step, abs(complex(rec.deltaL_re, rec.deltaL_im)))

    return report


def run_oracle(cfg: ExperimentConfig, directory: Path) -> Path:
    """Write ``reference.csv`` only."""
    model = cfg.build_model()
    values = _reference(model, standard_observables(model.n_sites))
    if values is None:
        raise ValueError(f"exact reference limited to {MAX_SITES} sites")
    path = directory / "reference.csv"
    path.write_text(reference_csv(model, values))
    return path


def run_single(cfg: ExperimentConfig, directory: Path, quiet: bool = False) -> RunOutcome:
    model = cfg.build_model()
    topo = cfg.build_topology()
    observables = standard_observables(model.n_sites)
    names = list(observables)
    result = run(cfg.solver, model, topo, observables, callback=_progress(quiet))
    (directory / "trajectory.csv").write_text(trajectory_csv(result.records, names, cfg.output.every))

    ref = _reference(model, observables)
    if ref is not None:
        (directory / "reference.csv").write_text(reference_csv(model, ref))
    final = result.records[-1]
    dl = abs(complex(final.deltaL_re, final.deltaL_im))
    tol = cfg.solver.convergence_tol if cfg.solver.convergence_tol is not None else REPORT_TOL
    converged = result.status == "ok" and dl < tol
    summary = {
        "status": result.status,
        "converged": converged,
        "convergence_tol": tol,
        "steps": final.step,
        "final": {**final.observables, "deltaL_re": final.deltaL_re, "deltaL_im": final.deltaL_im},
        "reference": ref,
        "relative_error": _relative_errors(final.observables, ref),
        "pinv_fallbacks": sum("pinv" in r.flags for r in result.records),
        "seed": cfg.solver.seed,
        "backend": cfg.solver.backend.value,
        "git_describe": git_describe(),
        "config": cfg.to_dict(),
    }
    if cfg.solver.mode is Mode.DYNAMICS and model.n_sites <= MAX_SITES:
        rho0 = feedforward(topo, _initial_theta(cfg, topo))
        exact = evolve_rk4(model, rho0, cfg.solver.dt, final.step)
        rows = [(r.step, r.time, measure(exact[r.step], observables)) for r in result.records]
        (directory / "reference_trajectory.csv").write_text(
            trajectory_like_csv(rows, names, cfg.output.every))
        summary["max_abs_error"] = {n: max(abs(r.observables[n] - e[n]) for r, (_, _, e) in
                                           zip(result.records, rows)) for n in names}
    (directory / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    failed = result.status != "ok" or (cfg.solver.mode is Mode.STEADY and not converged)
    return RunOutcome(directory, EXIT_NOT_CONVERGED if failed else EXIT_OK, summary)


def _initial_theta(cfg: ExperimentConfig, topo):
    import numpy as np

    from .sr_solver import init_params

    init_ss = np.random.SeedSequence(cfg.solver.seed).spawn(3)[0]
    return init_params(topo, cfg.solver.init_scale, np.random.default_rng(init_ss))


def trajectory_like_csv(rows, names, every: int = 1) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "time", *names])
    last = len(rows) - 1
    for i, (step, time, values) in enumerate(rows):
        if i % every and i != last:
            continue
        w.writerow([step, fmt(time), *(fmt(values[n]) for n in names)])
    return buf.getvalue()


def _point_name(parameter: str, value) -> str:
    return f"{parameter.split('.', 1)[1]}={value!r}"


def _run_point(args):
    cfg, directory, quiet = args
    directory.mkdir(parents=True, exist_ok=True)
    return run_single(cfg, directory, quiet)


def run_sweep(cfg: ExperimentConfig, directory: Path, quiet: bool = False) -> RunOutcome:
    """One run per sweep value in its own subdirectory plus ``sweep.csv`` and ``sweep_summary.json``."""
    sweep = cfg.sweep
    jobs = [(cfg.at_point(v), directory / _point_name(sweep.parameter, v), quiet) for v in sweep.values]
    if sweep.workers > 1:
        with ProcessPoolExecutor(max_workers=sweep.workers) as pool:
            outcomes = list(pool.map(_run_point, jobs))
    else:
        outcomes = [_run_point(job) for job in jobs]

    names = list(outcomes[0].summary["final"])
    obs_names = [n for n in names if not n.startswith("deltaL")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["value"] + obs_names + [f"{n}_ref" for n in obs_names] + [f"{n}_relerr" for n in obs_names]
    w.writerow(header + ["deltaL_re", "deltaL_im", "converged"])
    points = []
    for value, out in zip(sweep.values, outcomes):
        s = out.summary
        ref = s["reference"] or {}
        rel = s["relative_error"] or {}
        w.writerow([fmt(value)] + [fmt(s["final"][n]) for n in obs_names]
                   + [fmt(ref[n]) if n in ref else "" for n in obs_names]
                   + [fmt(rel[n]) if n in rel else "" for n in obs_names]
                   + [fmt(s["final"]["deltaL_re"]), fmt(s["final"]["deltaL_im"]), str(s["converged"]).lower()])
        points.append({"value": value, "directory": out.directory.name, "status": s["status"],
                       "converged": s["converged"], "final": s["final"], "relative_error": s["relative_error"]})
    (directory / "sweep.csv").write_text(buf.getvalue())
    max_rel = max((max(p["relative_error"].values()) for p in points if p["relative_error"]), default=None)
    summary = {"parameter": sweep.parameter, "points": points, "max_relative_error": max_rel,
               "all_converged": all(p["converged"] for p in points), "seed": cfg.solver.seed,
               "git_describe": git_describe(), "config": cfg.to_dict()}
    (directory / "sweep_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    code = EXIT_OK if all(o.exit_code == EXIT_OK for o in outcomes) else EXIT_NOT_CONVERGED
    return RunOutcome(directory, code, summary)


def with_mode(cfg: ExperimentConfig, mode: Mode) -> ExperimentConfig:
    return replace(cfg, solver=replace(cfg.solver, mode=mode))
