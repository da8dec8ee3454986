"""Experiment drivers: single runs, sweeps, learning-rate grid search.

Every run owns an output directory::

    config.yaml        snapshot that reproduces the run
    trace.jsonl        one record per local iteration plus a final record
    trace.csv          the same records as CSV
    metrics.csv        loss / accuracy / F1 / top-k at the evaluation cadence
    bound_report.json  only when ``analysis.bound`` is set
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import oracles
from .config import SimConfig, dump_config
from .data import Dataset, read_binary, read_csv
from .errors import ConfigError, DivergenceError, NumericError
from .metrics import MetricReport, clock_to_target, evaluate, loss_at_fraction
from .protocol import TRACE_COLUMNS, Federation, RoundTrace, TrainingTrace, run_training
from .synthetic import SyntheticMeta, generate_synthetic

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("round", "clock", "split", "loss", "accuracy", "f1", "top_k_accuracy", "top_k", "n_samples")

# axis aliases accepted by sweep()
AXES = {
    "Q": "local_steps",
    "local_steps": "local_steps",
    "eta": "lr",
    "lr": "lr",
    "N": "n_silos",
    "n_silos": "n_silos",
    "K": "clients",
    "clients": "clients",
}


def load_data(config: SimConfig) -> tuple[Dataset, Dataset | None, SyntheticMeta | None]:
    src = config.dataset
    if src.source == "synthetic":
        return generate_synthetic(src.synthetic_spec(), config.seeds.data)
    if src.source == "csv":
        train, _ = read_csv(src.path, src.label_column)
        test = read_csv(src.test_path, src.label_column)[0] if src.test_path else None
        return train, test, None
    train = read_binary(src.path)
    test = read_binary(src.test_path) if src.test_path else None
    return train, test, None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace(trace: TrainingTrace, outdir: Path) -> None:
    records = [r.to_dict() for r in trace.records()]
    with open(outdir / "trace.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    with open(outdir / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for rec in records:
            w.writerow([_fmt(rec[c]) for c in TRACE_COLUMNS])


def write_metrics(rows: Sequence[dict], outdir: Path) -> None:
    with open(outdir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in METRIC_COLUMNS])


@dataclass
class RunResult:
    config: SimConfig
    trace: TrainingTrace
    metrics: list[dict] = field(default_factory=list)
    bound: oracles.BoundReport | None = None
    error: Exception | None = None

    @property
    def diverged(self) -> bool:
        return isinstance(self.error, (DivergenceError, NumericError))


def run_experiment(config: SimConfig, outdir: str | Path | None = None) -> RunResult:
    """Train, evaluate at the configured cadence, and write artifacts.

    Divergence is captured on the result (with the partial trace) rather than
    raised; configuration errors propagate.
    """
    out = Path(outdir) if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        dump_config(config, out / "config.yaml")
    train, test, _meta = load_data(config)
    metrics: list[dict] = []

    def record(fed: Federation, rounds_done: int) -> None:
        model = fed.global_model()
        for split, ds in (("train", train), ("test", test)):
            if ds is None:
                continue
            rep: MetricReport = evaluate(model, ds.features, ds.labels, fed.loss, split, config.eval.top_k)
            metrics.append({"round": rounds_done, "clock": fed.clock, **rep.to_dict()})

    def on_round(rt: RoundTrace, fed: Federation) -> None:
        done = rt.round_index + 1
        if done % config.eval.every_rounds == 0 or done == config.rounds:
            record(fed, done)

    error = None
    fed0 = Federation(config, train)
    record(fed0, 0)
    try:
        trace = run_training(config, train, on_round=on_round)
    except (DivergenceError, NumericError) as exc:
        trace = getattr(exc, "trace", None) or TrainingTrace(rounds=[])
        error = exc
    result = RunResult(config, trace, metrics, error=error)

    if error is None and config.analysis.bound and config.rounds > 0:
        # retrains with iterate recording on; the run is deterministic so the trace is identical
        result.bound = oracles.run_bound_check(config, train, [config.seeds.batch])

    if out is not None:
        write_trace(trace, out)
        write_metrics(metrics, out)
        if result.bound is not None:
            (out / "bound_report.json").write_text(result.bound.to_json() + "\n", encoding="utf-8")
    return result


# --- sweeps -----------------------------------------------------------------


def _final_point(result: RunResult) -> tuple[float, float]:
    tr = result.trace
    if result.error is not None or tr.final is None:
        return math.inf, math.inf
    return tr.final.clock, tr.final.loss


def sweep(
    base: SimConfig,
    axis: str,
    values: Sequence,
    outdir: str | Path | None = None,
    target_loss: float | None = None,
) -> list[dict]:
    """Vary one field, holding every seed and other field fixed.

    ``clock_to_target`` uses ``target_loss`` when given, otherwise the loss the
    best run (lowest final loss) had reached by 80% of its clock budget.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    field_name = AXES[axis]
    out = Path(outdir) if outdir is not None else None
    results: list[tuple[object, RunResult | None, str]] = []
    for value in values:
        sub = out / f"{field_name}={value}" if out is not None else None
        try:
            cfg = base.replace(**{field_name: value})
            res = run_experiment(cfg, sub)
            status = "diverged" if res.diverged else "ok"
        except ConfigError as exc:
            res, status = None, f"config_error: {exc}"
        results.append((value, res, status))

    ok = [(v, r) for v, r, s in results if s == "ok"]
    if target_loss is None and ok:
        best = min(ok, key=lambda vr: _final_point(vr[1])[1])[1]
        budget = best.trace.final.clock
        target_loss = loss_at_fraction(best.trace.boundary_losses(), budget) if budget > 0 else best.trace.final.loss

    rows = []
    for value, res, status in results:
        row = {field_name: value, "status": status, "final_loss": "", "final_clock": "", "clock_to_target": ""}
        if res is not None and status == "ok":
            clock, loss = _final_point(res)
            row.update(
                final_loss=loss,
                final_clock=clock,
                clock_to_target=clock_to_target(res.trace.boundary_losses(), target_loss),
            )
        rows.append(row)
    if out is not None:
        _write_rows(out / "summary.csv", rows)
    return rows


def grid_search_lr(
    base: SimConfig, etas: Sequence[float], budget_iters: int, outdir: str | Path | None = None
) -> tuple[float, list[dict]]:
    """Train each candidate for ``budget_iters`` iterations; keep the lowest final
    training loss (earliest candidate wins ties, divergence counts as +inf)."""
    rounds = budget_iters // base.local_steps
    if rounds < 1:
        raise ConfigError("budget_iters must cover at least one round")
    rows = sweep(base.replace(rounds=rounds), "lr", etas, outdir, target_loss=-math.inf)
    losses = [r["final_loss"] if r["status"] == "ok" else math.inf for r in rows]
    best = min(range(len(etas)), key=lambda i: (losses[i], i))
    for i, row in enumerate(rows):
        row.pop("clock_to_target")
        row["selected"] = i == best
    if outdir is not None:
        _write_rows(Path(outdir) / "summary.csv", rows)
    return float(etas[best]), rows


def _write_rows(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
