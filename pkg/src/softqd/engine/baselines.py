"""MAP-Elites over a CVT archive, with an optional quality-gradient step (GA-ME)."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from softqd.config.models import MapElitesConfig, SquadConfig
from softqd.core.errors import EvaluationError, RejectedInputError
from softqd.core.interfaces import ProblemDefinition
from softqd.core.models import EvaluationBatch, IterationRecord, Population
from softqd.core.modes import KnnSpace
from softqd.engine.archive import CvtArchive, insert_batch
from softqd.engine.population import check_finite_outputs, make_rng
from softqd.engine.soft_score import squad_objective
from softqd.engine.squad import logit_transform, squad_eval_budget

logger = logging.getLogger("MapElites")

EliteObserver = Callable[[int, Population], None]


def iso_line_mutate(
    x1: np.ndarray,
    x2: np.ndarray,
    sigma_iso: float,
    sigma_line: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Isotropic noise around ``x1`` plus a random step along ``x2 - x1``.

    Accepts single solutions (P,) or row batches (B, P); each row gets its own line
    coefficient.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise RejectedInputError(f"Parents differ in shape: {x1.shape} vs {x2.shape}")
    iso = rng.standard_normal(x1.shape)
    line = rng.standard_normal(x1.shape[:-1] + (1,))
    return x1 + sigma_iso * iso + sigma_line * line * (x2 - x1)


def resolve_total_evals(map_elites: MapElitesConfig, squad: SquadConfig) -> int:
    """Baselines get at least the evaluations a matching SQUAD run consumes."""
    parity = squad_eval_budget(squad)
    if map_elites.total_evals is None:
        return parity
    if map_elites.total_evals < parity:
        logger.warning(
            "Raising baseline budget to SQUAD parity",
            extra={"configured": map_elites.total_evals, "parity": parity},
        )
    return max(map_elites.total_evals, parity)


@dataclass
class MapElitesResult:
    archive: CvtArchive
    eval_count: int
    records: list[IterationRecord] = field(default_factory=list)
    elite_params: np.ndarray | None = None

    def elites(self) -> Population:
        cells = np.flatnonzero(self.archive.occupied)
        if cells.size == 0:
            raise RejectedInputError("The archive holds no elites")
        return Population(
            params=self.elite_params[cells],
            evaluations=EvaluationBatch(
                qualities=self.archive.qualities[cells],
                descriptors=self.archive.descriptors[cells],
            ),
        )


def _tree_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """k nearest neighbors per row from a KD-tree, self excluded."""
    if k == 0:
        return np.empty((points.shape[0], 0), dtype=np.int64)
    _, idx = cKDTree(points).query(points, k=k + 1)
    idx = np.asarray(idx, dtype=np.int64).reshape(points.shape[0], k + 1)
    is_self = idx == np.arange(points.shape[0])[:, np.newaxis]
    has_self = is_self.any(axis=1)
    out = idx[:, :k].copy()
    if np.any(has_self):
        out[has_self] = idx[has_self][~is_self[has_self]].reshape(-1, k)
    return out


def _elite_objective(archive: CvtArchive, objective_config: SquadConfig) -> float:
    """Objective of the current elites; neighbors come from a KD-tree at archive scale."""
    cells = np.flatnonzero(archive.occupied)
    qualities = archive.qualities[cells]
    descriptors = archive.descriptors[cells]
    if objective_config.transform_enabled:
        space = logit_transform(descriptors, objective_config.logit_clip_eps)
    else:
        space = descriptors
    knn_space = space if objective_config.knn_space is KnnSpace.TRANSFORMED else descriptors
    neighbors = _tree_neighbors(knn_space, min(objective_config.neighbors, cells.size - 1))
    return squad_objective(
        EvaluationBatch(qualities=qualities, descriptors=space),
        objective_config.gamma_sq,
        neighbors,
    )


def run_map_elites(
    problem: ProblemDefinition,
    config: MapElitesConfig,
    cvt: CvtArchive,
    seed: int,
    total_evals: int | None = None,
    use_gradients: bool = False,
    objective_config: SquadConfig | None = None,
    observer: EliteObserver | None = None,
    observe_every: int = 1,
) -> MapElitesResult:
    """Elitist search until exactly ``total_evals`` evaluations have been spent.

    With ``use_gradients`` every child also takes ``grad_step`` times the quality
    gradient cached for its first parent (GA-ME). Records are emitted each time the
    evaluation count passes a multiple of ``objective_config.population_size`` so the
    stream lines up with SQUAD epochs.
    """
    if cvt.behavior_dim != problem.behavior_dim:
        raise RejectedInputError(
            f"CVT is {cvt.behavior_dim}-d but the problem has d={problem.behavior_dim}"
        )
    budget = total_evals if total_evals is not None else config.total_evals
    if budget is None or budget < 1:
        raise RejectedInputError("run_map_elites needs a positive evaluation budget")
    objective_config = objective_config or SquadConfig()
    record_every = objective_config.population_size

    started = time.perf_counter()
    rng = make_rng(seed)
    archive = cvt.cleared()
    low, high = problem.solution_box
    sigma_iso = config.sigma_iso if config.sigma_iso is not None else 0.01 * (high - low)
    elite_params = np.zeros((archive.cells, problem.solution_dim))
    elite_grads = np.zeros_like(elite_params) if use_gradients else None
    eval_count = 0
    last_epoch = -1
    records: list[IterationRecord] = []

    while eval_count < budget:
        size = min(config.batch, budget - eval_count)
        occupied = np.flatnonzero(archive.occupied)
        if occupied.size < 2:
            x1 = rng.uniform(low, high, size=(size, problem.solution_dim))
            x2 = rng.uniform(low, high, size=(size, problem.solution_dim))
            parent_grads = np.zeros_like(x1)
        else:
            picks = occupied[rng.integers(occupied.size, size=(size, 2))]
            x1 = elite_params[picks[:, 0]]
            x2 = elite_params[picks[:, 1]]
            parent_grads = elite_grads[picks[:, 0]] if elite_grads is not None else None
        children = iso_line_mutate(x1, x2, sigma_iso, config.sigma_line, rng)
        if use_gradients:
            children = children + config.grad_step * parent_grads
            qualities, descriptors, grads, _ = problem.eval_batch_with_grads(children)
        else:
            qualities, descriptors = problem.eval_batch(children)
            grads = None
        try:
            check_finite_outputs(qualities, descriptors)
        except EvaluationError as exc:
            logger.error("Non-finite evaluation", extra={"seed": seed, "evals": eval_count})
            raise EvaluationError(
                f"Non-finite evaluation after {eval_count} evaluations", exc.index
            ) from exc

        refs = np.arange(eval_count, eval_count + size)
        changed, cells = insert_batch(archive, qualities, descriptors, refs)
        for row in np.flatnonzero(changed):
            elite_params[cells[row]] = children[row]
            if elite_grads is not None and grads is not None:
                elite_grads[cells[row]] = grads[row]
        eval_count += size

        epoch = eval_count // record_every - 1
        if epoch > last_epoch:
            last_epoch = epoch
            elite_qualities = archive.qualities[archive.occupied]
            records.append(
                IterationRecord(
                    epoch=epoch,
                    objective_tilde=_elite_objective(archive, objective_config),
                    mean_quality=float(np.mean(elite_qualities)),
                    max_quality=float(np.max(elite_qualities)),
                    wall_time=time.perf_counter() - started,
                )
            )
            result = MapElitesResult(archive, eval_count, records, elite_params)
            if observer is not None and (epoch % observe_every == 0 or eval_count >= budget):
                observer(epoch, result.elites())

    logger.info(
        "Baseline finished",
        extra={
            "seed": seed,
            "evals": eval_count,
            "occupied": archive.occupied_count,
            "gradients": use_gradients,
        },
    )
    return MapElitesResult(archive, eval_count, records, elite_params)
