"""SQUAD: batched gradient ascent on the pairwise Soft QD lower bound."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logit

from softqd.config.models import SquadConfig
from softqd.core.errors import EvaluationError, GradientError, RejectedInputError
from softqd.core.interfaces import ProblemDefinition
from softqd.core.models import EvaluationBatch, IterationRecord, Population
from softqd.core.modes import KnnSpace
from softqd.engine.adam import AdamState, adam_step
from softqd.engine.population import check_finite_outputs, seeded_random_population
from softqd.engine.soft_score import pairwise_sq_distances, squad_objective

logger = logging.getLogger("Squad")

# Floor on f inside d sqrt(f_i f_j) / d f_i.
QUALITY_FLOOR = 1e-8
_DOMAIN_SLACK = 1e-9
_KNN_CHUNK = 256

Observer = Callable[[int, Population], None]


def logit_transform(b: np.ndarray, eps: float) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if np.any(b < -_DOMAIN_SLACK) or np.any(b > 1.0 + _DOMAIN_SLACK):
        raise RejectedInputError("Descriptors must lie in [0, 1] before the logit transform")
    return logit(np.clip(b, eps, 1.0 - eps))


def logit_jacobian_diag(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    return 1.0 / (b * (1.0 - b))


def knn_indices(
    descriptors: np.ndarray, k: int, rows: Sequence[int] | np.ndarray | None = None
) -> np.ndarray:
    """Exact k nearest neighbors (self excluded, ties to the smaller index).

    Returns one row of ``k`` indices per entry of ``rows`` (default: every solution).
    """
    descriptors = np.asarray(descriptors, dtype=np.float64)
    n = descriptors.shape[0]
    if k < 0 or k >= n:
        raise RejectedInputError(f"k must lie in [0, {n - 1}], got {k}")
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    result = np.empty((rows.shape[0], k), dtype=np.int64)
    if k == 0:
        return result
    for start in range(0, rows.shape[0], _KNN_CHUNK):
        chunk = rows[start : start + _KNN_CHUNK]
        sq_dist = pairwise_sq_distances(descriptors[chunk], descriptors)
        sq_dist[np.arange(chunk.shape[0]), chunk] = np.inf
        result[start : start + chunk.shape[0]] = _smallest_k(sq_dist, k)
    return result


def _smallest_k(sq_dist: np.ndarray, k: int) -> np.ndarray:
    kth = np.partition(sq_dist, k - 1, axis=1)[:, k - 1 : k]
    within = sq_dist <= kth
    counts = within.sum(axis=1)
    out = np.empty((sq_dist.shape[0], k), dtype=np.int64)
    exact = counts == k
    if np.any(exact):
        # nonzero walks row-major, so candidate columns arrive in ascending index order.
        cols = np.nonzero(within[exact])[1].reshape(-1, k)
        dists = np.take_along_axis(sq_dist[exact], cols, axis=1)
        order = np.argsort(dists, axis=1, kind="stable")
        out[exact] = np.take_along_axis(cols, order, axis=1)
    for row in np.flatnonzero(~exact):
        cols = np.flatnonzero(within[row])
        out[row] = cols[np.argsort(sq_dist[row, cols], kind="stable")[:k]]
    return out


@dataclass(frozen=True)
class BatchGradient:
    """Ascent direction for batch members plus the chain-rule coefficients."""

    params_grad: np.ndarray
    quality_coef: np.ndarray
    descriptor_coef: np.ndarray
    objective: float


def _descriptor_space(
    descriptors: np.ndarray, transform_enabled: bool, eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """Repulsion-space descriptors and d(space)/d(descriptor), elementwise."""
    if not transform_enabled:
        return descriptors, np.ones_like(descriptors)
    clamped = np.clip(descriptors, eps, 1.0 - eps)
    return logit_transform(descriptors, eps), logit_jacobian_diag(clamped)


def _batch_gradient(
    batch_params: np.ndarray,
    qualities: np.ndarray,
    descriptors: np.ndarray,
    batch: np.ndarray,
    neighbor_lists: Sequence[Sequence[int]],
    gamma_sq: float,
    problem: ProblemDefinition,
    logit_clip_eps: float,
    transform_enabled: bool,
) -> BatchGradient:
    n = qualities.shape[0]
    if len(neighbor_lists) != batch.shape[0]:
        raise RejectedInputError("Expected one neighbor list per batch member")
    space, space_jac = _descriptor_space(descriptors, transform_enabled, logit_clip_eps)

    rows = np.repeat(batch, [len(nl) for nl in neighbor_lists])
    cols = np.fromiter((j for nl in neighbor_lists for j in nl), dtype=np.int64, count=rows.size)
    if cols.size and (cols.min() < 0 or cols.max() >= n):
        raise RejectedInputError("Neighbor index out of range")

    clamped = np.maximum(qualities, 0.0)
    objective = float(np.sum(qualities[batch]))
    quality_coef_all = np.zeros(n)
    quality_coef_all[batch] = 1.0
    space_coef_all = np.zeros_like(space)
    if rows.size:
        diff = space[rows] - space[cols]
        kernel = np.exp(-np.einsum("ij,ij->i", diff, diff) / gamma_sq)
        weight = np.sqrt(clamped[rows] * clamped[cols]) * kernel
        objective -= 0.5 * float(np.sum(weight))

        def sqrt_partial(own: np.ndarray, other: np.ndarray) -> np.ndarray:
            ratio = clamped[other] / np.maximum(qualities[own], QUALITY_FLOOR)
            return np.where(qualities[own] > 0.0, 0.5 * np.sqrt(ratio), 0.0)

        np.add.at(quality_coef_all, rows, -0.5 * kernel * sqrt_partial(rows, cols))
        np.add.at(quality_coef_all, cols, -0.5 * kernel * sqrt_partial(cols, rows))
        pull = (-0.5 * weight * (-2.0 / gamma_sq))[:, np.newaxis] * diff
        np.add.at(space_coef_all, rows, pull)
        np.add.at(space_coef_all, cols, -pull)

    quality_coef = quality_coef_all[batch]
    descriptor_coef = space_coef_all[batch] * space_jac[batch]

    _, _, grad_quality, jac_descriptor = problem.eval_batch_with_grads(batch_params)
    quality_part = quality_coef[:, np.newaxis] * grad_quality
    repulsion_part = np.einsum("bd,bdp->bp", descriptor_coef, jac_descriptor)
    for term, part in (("quality", quality_part), ("repulsion", repulsion_part)):
        bad = ~np.all(np.isfinite(part), axis=1)
        if np.any(bad):
            raise GradientError(index=int(batch[np.flatnonzero(bad)[0]]), term=term)
    return BatchGradient(
        params_grad=quality_part + repulsion_part,
        quality_coef=quality_coef,
        descriptor_coef=descriptor_coef,
        objective=objective,
    )


def batch_gradient(
    pop: Population,
    batch: Sequence[int] | np.ndarray,
    neighbor_lists: Sequence[Sequence[int]],
    gamma_sq: float,
    problem: ProblemDefinition,
    logit_clip_eps: float = 1e-6,
    transform_enabled: bool = True,
) -> BatchGradient:
    """Gradient of the batch objective with respect to batch members' parameters.

    ``neighbor_lists[a]`` lists the neighbors of ``batch[a]``. Non-batch solutions enter
    as constants.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise RejectedInputError("batch_gradient needs a non-empty batch")
    return _batch_gradient(
        pop.params[batch],
        pop.qualities,
        pop.descriptors,
        batch,
        neighbor_lists,
        gamma_sq,
        problem,
        logit_clip_eps,
        transform_enabled,
    )


def full_objective(
    qualities: np.ndarray, descriptors: np.ndarray, config: SquadConfig
) -> float:
    """Population-wide objective under the config's neighbor search and transform."""
    space, _ = _descriptor_space(descriptors, config.transform_enabled, config.logit_clip_eps)
    knn_space = space if config.knn_space is KnnSpace.TRANSFORMED else descriptors
    neighbors = knn_indices(knn_space, config.neighbors)
    return squad_objective(
        EvaluationBatch(qualities=qualities, descriptors=space), config.gamma_sq, neighbors
    )


def squad_eval_budget(config: SquadConfig) -> int:
    """Value evaluations consumed by a full run: the initial population plus one per epoch."""
    return config.population_size * (config.epochs + 1)


def squad_batch_step(
    problem: ProblemDefinition,
    config: SquadConfig,
    params: np.ndarray,
    qualities: np.ndarray,
    descriptors: np.ndarray,
    state: AdamState,
    batch: np.ndarray,
) -> BatchGradient:
    """Update the ``batch`` rows of the caller's arrays in place.

    k-NN is recomputed from the cached descriptors, the batch takes one Adam step, and
    exactly the batch is re-evaluated into the ``qualities``/``descriptors`` caches.
    Rows outside the batch, including their optimizer state, are left untouched.
    """
    batch = np.asarray(batch, dtype=np.int64)
    space, _ = _descriptor_space(descriptors, config.transform_enabled, config.logit_clip_eps)
    knn_space = space if config.knn_space is KnnSpace.TRANSFORMED else descriptors
    neighbors = knn_indices(knn_space, config.neighbors, rows=batch)
    gradient = _batch_gradient(
        params[batch],
        qualities,
        descriptors,
        batch,
        neighbors,
        config.gamma_sq,
        problem,
        config.logit_clip_eps,
        config.transform_enabled,
    )
    new_params, new_state = adam_step(
        params[batch], gradient.params_grad, state.rows(batch), config.learning_rate
    )
    state.write_rows(batch, new_state)
    params[batch] = new_params

    batch_qualities, batch_descriptors = problem.eval_batch(params[batch])
    check_finite_outputs(batch_qualities, batch_descriptors, index_offset=int(batch[0]))
    qualities[batch] = batch_qualities
    descriptors[batch] = batch_descriptors
    return gradient


def run_squad(
    problem: ProblemDefinition,
    config: SquadConfig,
    seed: int,
    observer: Observer | None = None,
    observe_every: int = 1,
) -> tuple[Population, list[IterationRecord]]:
    """Run the batched SQUAD loop for ``config.epochs`` epochs.

    ``observer`` sees the population at epoch 0, every ``observe_every`` epochs, and
    after the final epoch.
    """
    started = time.perf_counter()
    init_box = None
    if config.init_low is not None and config.init_high is not None:
        init_box = (config.init_low, config.init_high)
    initial = seeded_random_population(problem, config.population_size, seed, init_box)
    params = initial.params.copy()
    qualities = initial.qualities.copy()
    descriptors = initial.descriptors.copy()
    state = AdamState.zeros(params.shape[0], params.shape[1])
    n = params.shape[0]

    def snapshot() -> Population:
        return Population(
            params=params,
            evaluations=EvaluationBatch(qualities=qualities, descriptors=descriptors),
        )

    def record(epoch: int) -> IterationRecord:
        entry = IterationRecord(
            epoch=epoch,
            objective_tilde=full_objective(qualities, descriptors, config),
            mean_quality=float(np.mean(qualities)),
            max_quality=float(np.max(qualities)),
            wall_time=time.perf_counter() - started,
        )
        logger.debug(
            "Epoch finished",
            extra={"seed": seed, "epoch": epoch, "mean_quality": entry.mean_quality},
        )
        return entry

    records = [record(0)]
    if observer is not None:
        observer(0, initial)

    for epoch in range(1, config.epochs + 1):
        for batch_number, start in enumerate(range(0, n, config.batch_size)):
            batch = np.arange(start, min(start + config.batch_size, n))
            try:
                squad_batch_step(problem, config, params, qualities, descriptors, state, batch)
            except EvaluationError as exc:
                logger.error(
                    "Non-finite evaluation",
                    extra={"seed": seed, "epoch": epoch, "batch": batch_number},
                )
                raise EvaluationError(
                    f"Non-finite evaluation at epoch {epoch}, batch {batch_number}", exc.index
                ) from exc

        records.append(record(epoch))
        if observer is not None and (epoch % observe_every == 0 or epoch == config.epochs):
            observer(epoch, snapshot())
        if epoch % 100 == 0:
            logger.info(
                "SQUAD progress",
                extra={
                    "seed": seed,
                    "epoch": epoch,
                    "mean_quality": records[-1].mean_quality,
                    "objective_tilde": records[-1].objective_tilde,
                },
            )

    return snapshot(), records
