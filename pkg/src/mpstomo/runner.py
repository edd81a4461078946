"""Config-driven experiment loop: measure, train, estimate, stop.

A run interleaves batches of random-basis shots with training stages and
per-stage bookkeeping (distances, fidelities, running power-law fits).
In simulation mode the target is known, so the true fidelity is recorded
and drives the stop rule; blind mode hides it and relies on the estimated
fidelity, which needs a calibrated convergence constant (``c_estimate``).
All artifacts are plain files: a history CSV, the final state, the shot
record, and an echo of the resolved config.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_to_text
from .errors import EstimateOutOfRegime, FormatError, ParameterError
from .estimation import (
    StageRecord,
    estimate_fidelity,
    fit_power_law,
    per_site_fidelity,
    r_succ,
)
from .measurement import Dataset, measure_batch
from .mps import MatrixProductState, load_mps, random_init
from .states import TargetSpec, build_target
from .training import train_stage, write_loss_history

_HISTORY_COLUMNS = (
    "stage",
    "replicas",
    "nll",
    "r_real",
    "r_succ",
    "f_true",
    "f_est",
    "c_est",
    "alpha_real",
    "alpha_succ",
)


def resolve_target(target) -> MatrixProductState:
    if isinstance(target, MatrixProductState):
        return target
    if isinstance(target, TargetSpec):
        return build_target(target)
    if isinstance(target, (str, Path)):
        return load_mps(target)
    raise ParameterError(f"cannot interpret target {target!r}")


def _try_fit(history, field_name):
    try:
        return fit_power_law(history, field_name).alpha
    except ParameterError:
        return None


def run_tomography(config: ExperimentConfig):
    """Run the full loop; returns (history, final state).

    Stages draw geometrically growing batches of noisy random-basis shots,
    retrain on the accumulated dataset, and record a StageRecord.  The run
    stops when the fidelity signal stays at or above the threshold for two
    consecutive stages (if enabled) or when max_replicas is exhausted.
    """
    config.validate()
    if config.max_replicas < 1:
        raise ParameterError("no stages: max_replicas must be >= 1")
    target = resolve_target(config.target)
    n, q = target.n_sites, target.local_dim
    shot_rng = np.random.default_rng([config.seed, 0x5E1EC7])
    model = random_init(n, q, config.init_bond_dim, seed=config.seed)
    dataset = Dataset(n, q)
    history: list[StageRecord] = []
    prev_model = None
    batch = config.batch_initial
    consecutive = 0
    while dataset.replica_count < config.max_replicas:
        count = min(batch, config.max_replicas - dataset.replica_count)
        dataset.extend(measure_batch(target, count, config.noise_epsilon, shot_rng))
        model, loss_hist = train_stage(model, dataset, config.train)
        rec = StageRecord(replicas=dataset.replica_count, nll=loss_hist[-1].nll)
        if not config.blind:
            rec.f_true, rec.r_real = model.fidelity_distance(target)
        if prev_model is not None:
            rec.r_succ = r_succ(prev_model, model)
        if config.c_estimate is not None and rec.r_succ is not None:
            rec.c_est = config.c_estimate
            try:
                _, rec.f_est = estimate_fidelity(config.c_estimate, rec.r_succ)
            except EstimateOutOfRegime:
                rec.f_est = None
        history.append(rec)
        rec.alpha_real = _try_fit(history, "r_real")
        rec.alpha_succ = _try_fit(history, "r_succ")
        prev_model = model
        signal = rec.f_est if config.blind else rec.f_true
        if signal is not None and signal >= config.fidelity_threshold:
            consecutive += 1
        else:
            consecutive = 0
        if config.stop_on_threshold and consecutive >= 2:
            break
        batch = max(1, int(round(batch * config.batch_growth)))
        if config.batch_max > 0:
            batch = min(batch, config.batch_max)
    if config.output_dir is not None:
        write_run_dir(config.output_dir, config, history, model, dataset, loss_hist)
    return history, model


def replicas_to_threshold(history, threshold, field_name="f_true"):
    """Replica count at the first stage of the earliest pair of consecutive
    stages with the fidelity signal at or above ``threshold``; None if the
    signal never stabilized."""
    for i in range(len(history) - 1):
        a = getattr(history[i], field_name)
        b = getattr(history[i + 1], field_name)
        if a is not None and b is not None and a >= threshold and b >= threshold:
            return history[i].replicas
    return None


# -- artifacts -------------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_history(path, history) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_HISTORY_COLUMNS)
        for i, rec in enumerate(history):
            writer.writerow(
                [
                    i,
                    rec.replicas,
                    _fmt(rec.nll),
                    _fmt(rec.r_real),
                    _fmt(rec.r_succ),
                    _fmt(rec.f_true),
                    _fmt(rec.f_est),
                    _fmt(rec.c_est),
                    _fmt(rec.alpha_real),
                    _fmt(rec.alpha_succ),
                ]
            )


def read_history(path) -> list[StageRecord]:
    def parse(raw, typ, ln):
        if raw == "":
            return None
        try:
            return typ(raw)
        except ValueError as exc:
            raise FormatError(f"{path}: line {ln}: bad field {raw!r}") from exc

    history = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: line 1: empty history") from None
        if tuple(header) != _HISTORY_COLUMNS:
            raise FormatError(f"{path}: line 1: unexpected header {header}")
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(_HISTORY_COLUMNS):
                raise FormatError(f"{path}: line {ln}: expected {len(_HISTORY_COLUMNS)} fields")
            replicas = parse(row[1], int, ln)
            nll = parse(row[2], float, ln)
            if replicas is None or nll is None:
                raise FormatError(f"{path}: line {ln}: replicas and nll are mandatory")
            history.append(
                StageRecord(
                    replicas=replicas,
                    nll=nll,
                    r_real=parse(row[3], float, ln),
                    r_succ=parse(row[4], float, ln),
                    f_true=parse(row[5], float, ln),
                    f_est=parse(row[6], float, ln),
                    c_est=parse(row[7], float, ln),
                    alpha_real=parse(row[8], float, ln),
                    alpha_succ=parse(row[9], float, ln),
                )
            )
    return history


def write_run_dir(
    out_dir, config, history, model, dataset=None, loss_reports=None, source="real"
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_history(out / "history.csv", history)
    model.save(out / "model.mps")
    if dataset is not None and config.save_shots:
        dataset.to_file(out / "shots.txt")
    if loss_reports is not None:
        write_loss_history(out / "losses.csv", loss_reports)
    (out / "run.cfg").write_text(config_to_text(config) + f"source = {source}\n")


# -- scaling suites ---------------------------------------------------------------


@dataclass
class SuiteRow:
    value: int
    mean_replicas: float
    std_replicas: float
    n_converged: int
    n_failed: int


@dataclass
class SuiteResult:
    kind: str
    rows: list[SuiteRow]
    exponent: float | None = None


def _suite_config(config, kind, value, seed):
    if not isinstance(config.target, TargetSpec):
        raise ParameterError("scaling suites need a TargetSpec target")
    if kind == "size":
        spec = replace(config.target, n_sites=value, seed=seed)
    elif kind == "bond":
        spec = replace(config.target, kind="Random", d_max=value, seed=seed)
    else:
        raise ParameterError(f"unknown suite kind {kind!r}")
    return replace(
        config, target=spec, seed=seed, output_dir=None, stop_on_threshold=True
    )


def run_scaling_suite(kind, grid, config, n_seeds=8, out_path=None) -> SuiteResult:
    """Replica demand versus system size or target bond dimension.

    For each grid value, runs ``n_seeds`` tomographies to the configured
    fidelity threshold and records the replica count where the true fidelity
    stabilized.  The bond suite also fits replicas = gamma * d_max**beta.
    """
    if not grid:
        raise ParameterError("empty suite grid")
    rows = []
    for gi, value in enumerate(grid):
        reached = []
        failed = 0
        for s in range(n_seeds):
            cfg = _suite_config(config, kind, value, config.seed + 997 * gi + s)
            history, _ = run_tomography(cfg)
            v = replicas_to_threshold(history, cfg.fidelity_threshold)
            if v is None:
                failed += 1
            else:
                reached.append(v)
        mean = float(np.mean(reached)) if reached else math.nan
        std = float(np.std(reached)) if reached else math.nan
        rows.append(SuiteRow(value, mean, std, len(reached), failed))
    exponent = None
    if kind == "bond":
        ok = [r for r in rows if r.n_converged > 0]
        if len(ok) >= 2:
            slope, _ = np.polyfit(
                np.log([r.value for r in ok]), np.log([r.mean_replicas for r in ok]), 1
            )
            exponent = float(slope)
    result = SuiteResult(kind, rows, exponent)
    if out_path is not None:
        with open(out_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([kind, "mean_replicas", "std_replicas", "n_converged", "n_failed"])
            for r in rows:
                writer.writerow(
                    [r.value, _fmt(r.mean_replicas), _fmt(r.std_replicas), r.n_converged, r.n_failed]
                )
            if exponent is not None:
                writer.writerow(["exponent", _fmt(exponent), "", "", ""])
    return result


# -- reporting --------------------------------------------------------------------


def _read_run_dir(path):
    path = Path(path)
    history = read_history(path / "history.csv")
    meta = {}
    cfg_file = path / "run.cfg"
    if cfg_file.exists():
        from .config import parse_config_text

        meta = parse_config_text(cfg_file.read_text(), str(cfg_file))
    return history, meta


def report(run_dirs, out_dir) -> dict[str, Path]:
    """Summaries and figure-ready data series from finished run directories.

    Emits summary.csv plus per-figure series: replica demand versus system
    size (fig2), versus target bond dimension (fig3), stagewise distances
    and their ratio with a real/virtual source column (fig4), and replica
    demand versus noise level (fig5).
    """
    dirs = [Path(d) for d in run_dirs]
    if not dirs:
        raise ParameterError("no run directories given")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    fig2, fig3, fig4, fig5 = [], [], [], []
    for d in dirs:
        history, meta = _read_run_dir(d)
        kind = meta.get("target.kind", "")
        n_sites = meta.get("target.n", "")
        d_max = meta.get("target.d_max", "")
        eps = meta.get("noise_epsilon", "")
        thr = float(meta.get("fidelity_threshold", "0.995"))
        source = meta.get("source", "real")
        reached = replicas_to_threshold(history, thr)
        last = history[-1]
        f_ps = None
        if last.f_true is not None and n_sites:
            f_ps = per_site_fidelity(last.f_true, int(n_sites))
        summary_rows.append(
            [
                d.name,
                source,
                kind,
                n_sites,
                d_max,
                eps,
                _fmt(thr),
                _fmt(reached),
                last.replicas,
                _fmt(last.f_true),
                _fmt(f_ps),
                _fmt(last.f_est),
            ]
        )
        for i, rec in enumerate(history):
            ratio = (
                rec.r_real**2 / rec.r_succ
                if rec.r_real is not None and rec.r_succ not in (None, 0.0)
                else None
            )
            fig4.append(
                [
                    d.name,
                    source,
                    i,
                    rec.replicas,
                    _fmt(rec.r_real),
                    _fmt(rec.r_succ),
                    _fmt(ratio),
                ]
            )
        if reached is not None and kind:
            if kind.lower() == "random":
                fig3.append([n_sites, d_max, reached])
            else:
                fig2.append([kind, n_sites, _fmt(thr), reached])
            fig5.append([kind, n_sites, eps, reached])
    written = {}

    def emit(name, header, rows):
        p = out / name
        with open(p, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
        written[name] = p

    emit(
        "summary.csv",
        ["run", "source", "kind", "n", "d_max", "epsilon", "threshold",
         "replicas_to_threshold", "replicas_total", "f_true", "f_per_site", "f_est"],
        summary_rows,
    )
    emit("fig2_size.csv", ["kind", "n", "threshold", "replicas"], fig2)
    emit("fig3_bond.csv", ["n", "d_max", "replicas"], fig3)
    emit(
        "fig4_convergence.csv",
        ["run", "source", "stage", "replicas", "r_real", "r_succ", "ratio"],
        fig4,
    )
    emit("fig5_noise.csv", ["kind", "n", "epsilon", "replicas"], fig5)
    return written
