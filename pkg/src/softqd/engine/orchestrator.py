from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from pydantic import ValidationError

from softqd.config.models import RunConfig
from softqd.core.errors import ConfigError, SoftQDError
from softqd.core.interfaces import ProblemDefinition
from softqd.core.models import (
    IterationRecord,
    MetricsReport,
    MetricsSnapshot,
    Population,
    PropertyReport,
)
from softqd.core.modes import Algorithm
from softqd.engine.archive import CvtArchive, build_cvt
from softqd.engine.baselines import resolve_total_evals, run_map_elites
from softqd.engine.metrics import compute_metrics
from softqd.engine.reporting import (
    build_summary,
    write_checks_csv,
    write_iterations_csv,
    write_metrics_csv,
    write_population_json,
    write_scatter_svg,
    write_summary_json,
    write_sweep_csv,
)
from softqd.engine.squad import Observer, full_objective, run_squad
from softqd.engine.theory_checks import run_property_suite
from softqd.plugins.registry import build_problem

SWEEP_PARAMETERS = frozenset(
    {"gamma_sq", "batch_size", "neighbors", "population_size", "transform_enabled"}
)


@dataclass(frozen=True)
class SeedResult:
    seed: int
    final: MetricsReport
    snapshots: list[MetricsSnapshot] = field(default_factory=list)
    paths: list[Path] = field(default_factory=list)


def _metrics_for(
    config: RunConfig, pop: Population, cvt: CvtArchive, seed: int, epoch: int
) -> MetricsSnapshot:
    report = compute_metrics(
        pop,
        cvt,
        config.experiment.sigma_v_sq,
        solver=config.experiment.eigensolver,
        vendi_max_points=config.experiment.vendi_max_points,
        subsample_seed=seed,
    )
    s_tilde = full_objective(pop.qualities, pop.descriptors, config.squad)
    return MetricsSnapshot(epoch=epoch, report=report, s_tilde=s_tilde)


def _run_algorithm(
    config: RunConfig, problem: ProblemDefinition, seed: int, observer: Observer
) -> tuple[Population, list[IterationRecord]]:
    experiment = config.experiment
    if experiment.algorithm is Algorithm.SQUAD:
        return run_squad(problem, config.squad, seed, observer, experiment.metric_interval)
    archive_cvt = build_cvt(
        problem.behavior_dim,
        config.map_elites.archive_cells,
        experiment.cvt_seed,
        max(experiment.cvt_samples, config.map_elites.archive_cells),
    )
    result = run_map_elites(
        problem,
        config.map_elites,
        archive_cvt,
        seed,
        total_evals=resolve_total_evals(config.map_elites, config.squad),
        use_gradients=experiment.algorithm is Algorithm.GA_ME,
        objective_config=config.squad,
        observer=observer,
        observe_every=experiment.metric_interval,
    )
    return result.elites(), result.records


def run_seed(config: RunConfig, seed: int, out_dir: Path) -> SeedResult:
    """One seed end to end: optimize, snapshot metrics, write the per-seed files."""
    logger = logging.getLogger("Experiment")
    experiment = config.experiment
    try:
        problem = build_problem(experiment.domain, **config.domain_options)
        cvt = build_cvt(
            problem.behavior_dim,
            experiment.metrics_cells,
            experiment.cvt_seed,
            experiment.cvt_samples,
        )
        snapshots: list[MetricsSnapshot] = []

        def observe(epoch: int, pop: Population) -> None:
            snapshots.append(_metrics_for(config, pop, cvt, seed, epoch))

        final_pop, records = _run_algorithm(config, problem, seed, observe)
        final_epoch = records[-1].epoch if records else 0
        # Baselines may spend evaluations after their last observed epoch.
        final = _metrics_for(config, final_pop, cvt, seed, final_epoch)
        if snapshots and snapshots[-1].epoch == final_epoch:
            snapshots[-1] = final
        else:
            snapshots.append(final)
    except SoftQDError:
        logger.exception("Seed failed", extra={"seed": seed, "domain": experiment.domain})
        raise

    paths = [
        write_metrics_csv(out_dir, seed, snapshots),
        write_iterations_csv(out_dir, seed, records),
        write_population_json(out_dir, seed, final_pop),
    ]
    if experiment.emit_svg:
        svg = write_scatter_svg(out_dir, seed, final_pop)
        if svg is not None:
            paths.append(svg)
    logger.info(
        "Seed finished",
        extra={
            "seed": seed,
            "algorithm": experiment.algorithm.value,
            "mean_objective": final.report.mean_objective,
            "vendi": final.report.vendi,
            "coverage": final.report.coverage_percent,
        },
    )
    return SeedResult(seed=seed, final=final.report, snapshots=snapshots, paths=paths)


@dataclass(frozen=True)
class ExperimentRunner:
    config: RunConfig

    @property
    def out_dir(self) -> Path:
        return Path(self.config.runtime.out_dir)

    def run(self, out_dir: Path | None = None) -> dict[str, Any]:
        """Run every configured seed and write ``summary.json``; returns the summary."""
        target = out_dir or self.out_dir
        logging.getLogger("Experiment").info(
            "Starting run",
            extra={
                "domain": self.config.experiment.domain,
                "algorithm": self.config.experiment.algorithm.value,
                "seeds": list(self.config.experiment.seeds),
                "out_dir": str(target),
            },
        )
        return self._summarize(self._run_seeds(target), target)

    def sweep(self, parameter: str, values: Sequence[Any]) -> Path:
        """One full run per value of a SQUAD hyperparameter, then a tidy sweep table."""
        logger = logging.getLogger("Experiment")
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigError(
                f"Unknown sweep parameter '{parameter}'; "
                f"expected one of {', '.join(sorted(SWEEP_PARAMETERS))}"
            )
        if not values:
            raise ConfigError("sweep needs at least one value")

        variants = []
        for raw in values:
            try:
                variants.append(self.config.with_overrides(squad={parameter: raw}))
            except ValidationError as exc:
                raise ConfigError(f"Invalid value {raw!r} for squad.{parameter}: {exc}") from exc

        rows: list[tuple[Any, int, MetricsReport]] = []
        for variant in variants:
            value = getattr(variant.squad, parameter)
            logger.info("Sweep step", extra={"parameter": parameter, "value": value})
            runner = ExperimentRunner(variant)
            run_dir = self.out_dir / f"sweep_{parameter}" / f"{parameter}={value}"
            results = runner._run_seeds(run_dir)
            runner._summarize(results, run_dir)
            rows.extend((value, result.seed, result.final) for result in results)
        return write_sweep_csv(self.out_dir, parameter, rows)

    def check(self, out_dir: Path | None = None) -> list[PropertyReport]:
        """Run the property suite and write ``checks.csv``."""
        reports = run_property_suite(self.config.checks)
        write_checks_csv(out_dir or self.out_dir, reports)
        return reports

    def _run_seeds(self, target: Path) -> list[SeedResult]:
        target.mkdir(parents=True, exist_ok=True)
        seeds = list(self.config.experiment.seeds)
        if self.config.runtime.workers > 1 and len(seeds) > 1:
            workers = min(self.config.runtime.workers, len(seeds))
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_seed, self.config, seed, target) for seed in seeds]
                return [future.result() for future in futures]
        return [run_seed(self.config, seed, target) for seed in seeds]

    def _summarize(self, results: Sequence[SeedResult], target: Path) -> dict[str, Any]:
        summary = build_summary(
            {result.seed: result.final for result in results},
            context={
                "domain": self.config.experiment.domain,
                "algorithm": self.config.experiment.algorithm.value,
            },
        )
        write_summary_json(target, summary)
        return summary
