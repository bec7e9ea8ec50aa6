from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from softqd.core.models import (  # noqa: E402
    IterationRecord,
    MetricsReport,
    MetricsSnapshot,
    Population,
    PropertyReport,
)
from softqd.engine.population import population_to_dict  # noqa: E402

logger = logging.getLogger("Reporting")

METRICS_HEADER = (
    "epoch",
    "qd_score",
    "coverage",
    "vendi",
    "qvs",
    "mean_obj",
    "max_obj",
    "s_tilde",
)
ITERATIONS_HEADER = ("epoch", "objective_tilde", "mean_quality", "max_quality", "wall_time_s")
CHECKS_HEADER = ("name", "trials", "failures", "worst_margin", "passed")
SUMMARY_FIELDS = ("qd_score", "coverage", "vendi", "qvs", "mean_obj", "max_obj")
SVG_HASH_SALT = "softqd"


def _fmt(value: float) -> str:
    # repr gives the shortest string that round-trips the double.
    return repr(float(value))


def metric_values(report: MetricsReport) -> dict[str, float]:
    return {
        "qd_score": report.qd_score,
        "coverage": report.coverage_percent,
        "vendi": report.vendi,
        "qvs": report.qvs,
        "mean_obj": report.mean_objective,
        "max_obj": report.max_objective,
    }


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_metrics_csv(out_dir: Path, seed: int, snapshots: Sequence[MetricsSnapshot]) -> Path:
    rows = []
    for snapshot in snapshots:
        values = metric_values(snapshot.report)
        rows.append(
            [snapshot.epoch]
            + [_fmt(values[name]) for name in METRICS_HEADER[1:-1]]
            + [_fmt(snapshot.s_tilde)]
        )
    return _write_rows(out_dir / f"metrics_{seed}.csv", METRICS_HEADER, rows)


def write_iterations_csv(out_dir: Path, seed: int, records: Sequence[IterationRecord]) -> Path:
    rows = [
        [
            record.epoch,
            _fmt(record.objective_tilde),
            _fmt(record.mean_quality),
            _fmt(record.max_quality),
            f"{record.wall_time:.6f}",
        ]
        for record in records
    ]
    return _write_rows(out_dir / f"iterations_{seed}.csv", ITERATIONS_HEADER, rows)


def write_population_json(out_dir: Path, seed: int, pop: Population) -> Path:
    path = out_dir / f"population_{seed}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(population_to_dict(pop)), encoding="utf-8")
    return path


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error (sample std / sqrt(n)); the error is 0 for one value."""
    array = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(array))
    if array.size < 2:
        return mean, 0.0
    return mean, float(np.std(array, ddof=1) / math.sqrt(array.size))


def build_summary(
    finals: dict[int, MetricsReport], context: dict[str, Any] | None = None
) -> dict[str, Any]:
    """Per-metric mean and standard error across seeds, reduced in seed order."""
    seeds = sorted(finals)
    per_seed = [metric_values(finals[seed]) for seed in seeds]
    metrics = {}
    for name in SUMMARY_FIELDS:
        mean, stderr = mean_and_stderr([values[name] for values in per_seed])
        metrics[name] = {"mean": mean, "stderr": stderr}
    return {
        **(context or {}),
        "seeds": seeds,
        "metrics": metrics,
        "qvs_zeroed_seeds": [seed for seed in seeds if finals[seed].qvs_zeroed],
    }


def write_summary_json(out_dir: Path, summary: dict[str, Any]) -> Path:
    path = out_dir / "summary.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote summary", extra={"path": str(path), "seeds": summary.get("seeds")})
    return path


def write_scatter_svg(out_dir: Path, seed: int, pop: Population) -> Path | None:
    """Descriptor scatter on the first two axes, colored by quality; None when d < 2."""
    if pop.behavior_dim < 2:
        logger.debug("Skipping scatter for d < 2", extra={"seed": seed})
        return None
    path = out_dir / f"scatter_{seed}.svg"
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig, ax = plt.subplots(figsize=(5, 5))
        points = ax.scatter(
            pop.descriptors[:, 0],
            pop.descriptors[:, 1],
            c=pop.qualities,
            cmap="viridis",
            s=6,
        )
        fig.colorbar(points, ax=ax, label="quality")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.set_xlabel("descriptor 0")
        ax.set_ylabel("descriptor 1")
        ax.set_title(f"seed {seed}")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def write_sweep_csv(
    out_dir: Path, parameter: str, rows: Sequence[tuple[Any, int, MetricsReport]]
) -> Path:
    header = ("value", "seed") + SUMMARY_FIELDS
    body = []
    for value, seed, report in rows:
        values = metric_values(report)
        body.append([value, seed] + [_fmt(values[name]) for name in SUMMARY_FIELDS])
    path = _write_rows(out_dir / f"sweep_{parameter}.csv", header, body)
    logger.info("Wrote sweep table", extra={"path": str(path), "rows": len(body)})
    return path


def write_checks_csv(out_dir: Path, reports: Sequence[PropertyReport]) -> Path:
    rows = [
        [report.name, report.trials, report.failures, _fmt(report.worst_margin), report.passed]
        for report in reports
    ]
    return _write_rows(out_dir / "checks.csv", CHECKS_HEADER, rows)


def format_checks_table(reports: Sequence[PropertyReport]) -> str:
    lines = [f"{'check':<20} {'trials':>7} {'failures':>8} {'worst_margin':>14}"]
    for report in reports:
        lines.append(
            f"{report.name:<20} {report.trials:>7} {report.failures:>8} "
            f"{report.worst_margin:>14.6g}"
        )
    return "\n".join(lines)
