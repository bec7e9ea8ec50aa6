"""Executable property checks for the Soft QD Score and its pairwise bound.

Shared-sample checks evaluate both sides of a comparison on the same sample set, which
makes monotonicity and diminishing returns hold exactly rather than statistically.
Every check returns a :class:`PropertyReport`; the ``run_*`` helpers draw random trials
from a seed and merge the per-trial reports.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from scipy.special import erfc

from softqd.config.models import ChecksConfig
from softqd.core.errors import RejectedInputError, UnsupportedDimensionError
from softqd.core.models import (
    Evaluation,
    EvaluationBatch,
    EvaluationsLike,
    KernelParams,
    PropertyReport,
    SampleSet,
    as_evaluation_batch,
)
from softqd.engine.population import make_rng
from softqd.engine.soft_score import (
    BOX_MARGIN_SIGMAS,
    bonferroni_partial_sums,
    draw_sample_set,
    error_bounds,
    gaussian_volume,
    integration_box,
    lower_bound_full,
    marginal_gain,
    pairwise_sq_distances,
    soft_qd_score_mc,
    soft_qd_score_quadrature,
)

logger = logging.getLogger("TheoryChecks")

LIMIT_TOLERANCE = 0.01
LIMIT_SIGMA_FRACTION = 0.1
LIMIT_MAX_GRID = 4096
_MAX_TRIAL_SIZE = 6


def _report(name: str, margins: Sequence[float]) -> PropertyReport:
    margins = [float(m) for m in margins]
    return PropertyReport(
        name=name,
        trials=len(margins),
        failures=sum(1 for m in margins if m < 0),
        worst_margin=min(margins) if margins else math.inf,
    )


def _merge(name: str, reports: Sequence[PropertyReport]) -> PropertyReport:
    merged = PropertyReport(name=name, trials=0, failures=0, worst_margin=math.inf)
    for report in reports:
        merged = merged.merge(report)
    return merged


def _append(pop_eval: EvaluationsLike, extra: Evaluation) -> EvaluationBatch:
    batch = as_evaluation_batch(pop_eval)
    return EvaluationBatch(
        qualities=np.append(batch.qualities, extra.quality),
        descriptors=np.vstack([batch.descriptors, extra.descriptor[np.newaxis, :]]),
    )


def check_monotone_add(
    pop_eval: EvaluationsLike,
    new_solution: Evaluation,
    shared_samples: SampleSet,
    kernel: KernelParams,
) -> PropertyReport:
    before = soft_qd_score_mc(pop_eval, kernel, shared_samples).value
    after = soft_qd_score_mc(_append(pop_eval, new_solution), kernel, shared_samples).value
    return _report("monotone_add", [after - before])


def check_monotone_quality(
    pop_eval: EvaluationsLike,
    index: int,
    delta: float,
    shared_samples: SampleSet,
    kernel: KernelParams,
) -> PropertyReport:
    if delta < 0:
        raise RejectedInputError("delta must be non-negative")
    batch = as_evaluation_batch(pop_eval)
    if not 0 <= index < len(batch):
        raise RejectedInputError(f"index {index} out of range for {len(batch)} solutions")
    raised = batch.qualities.copy()
    raised[index] += delta
    modified = EvaluationBatch(qualities=raised, descriptors=batch.descriptors)
    before = soft_qd_score_mc(batch, kernel, shared_samples).value
    after = soft_qd_score_mc(modified, kernel, shared_samples).value
    return _report("monotone_quality", [after - before])


def check_submodular(
    ground_set: EvaluationsLike,
    subset_u: Sequence[int],
    subset_v: Sequence[int],
    extra_solution: Evaluation,
    shared_samples: SampleSet,
    kernel: KernelParams,
) -> PropertyReport:
    """Marginal gain of ``extra_solution`` over U is at least its gain over V, U within V."""
    batch = as_evaluation_batch(ground_set)
    u, v = set(subset_u), set(subset_v)
    if not u <= v:
        raise RejectedInputError("subset_u must be contained in subset_v")
    if any(not 0 <= i < len(batch) for i in v):
        raise RejectedInputError("Subset index out of range")

    def restrict(indices: set[int]) -> EvaluationBatch | None:
        if not indices:
            return None
        rows = np.array(sorted(indices))
        return EvaluationBatch(qualities=batch.qualities[rows], descriptors=batch.descriptors[rows])

    gain_u = marginal_gain(restrict(u), [extra_solution], kernel, shared_samples)
    gain_v = marginal_gain(restrict(v), [extra_solution], kernel, shared_samples)
    return _report("submodular", [gain_u - gain_v])


def quadrature_grid_for(sigma: float, width: float) -> int:
    """Points per axis giving a spacing of about sigma/4, capped."""
    return int(min(LIMIT_MAX_GRID, max(64, math.ceil(width / (sigma / 4.0)))))


def check_limit_equivalence(
    pop_eval: EvaluationsLike, sigma_sequence: Sequence[float]
) -> PropertyReport:
    """Scaled score S(sigma) / (2 pi sigma^2)^(d/2) approaches the quality sum.

    Each step must not move away from the sum, and the last sigma must land within 1%.
    """
    batch = as_evaluation_batch(pop_eval)
    d = batch.behavior_dim
    if d > 2:
        raise UnsupportedDimensionError(f"Limit check supports d <= 2, got d={d}")
    if not sigma_sequence:
        raise RejectedInputError("sigma_sequence must not be empty")
    if np.any(batch.qualities < 0):
        raise RejectedInputError("Limit check needs non-negative qualities")
    if len(batch) > 1:
        sq_dist = pairwise_sq_distances(batch.descriptors, batch.descriptors)
        np.fill_diagonal(sq_dist, np.inf)
        if np.min(sq_dist) <= 0.0:
            raise RejectedInputError("Limit check needs pairwise distinct descriptors")

    target = float(np.sum(batch.qualities))
    deviations = []
    for sigma in sigma_sequence:
        low, high = integration_box(batch.descriptors, sigma)
        grid = quadrature_grid_for(sigma, float(np.max(high - low)))
        score = soft_qd_score_quadrature(batch, KernelParams.from_sigma(sigma), grid, (low, high))
        scaled = score.value / gaussian_volume(sigma, d)
        deviations.append(abs(scaled - target) / target if target > 0 else abs(scaled))
        logger.debug("Limit step", extra={"sigma": sigma, "scaled": scaled, "target": target})

    margins = [LIMIT_TOLERANCE - deviations[-1]]
    slack = 1e-9
    margins.extend(prev - cur + slack for prev, cur in zip(deviations, deviations[1:]))
    return _report("limit_equivalence", margins)


def _quadrature_pair(
    batch: EvaluationBatch, kernel: KernelParams, grid_points: int
) -> tuple[float, float]:
    """Score on the fine grid and a tolerance from halving the grid plus the tail mass."""
    low, high = integration_box(batch.descriptors, kernel.sigma)
    fine = soft_qd_score_quadrature(batch, kernel, grid_points, (low, high)).value
    coarse = soft_qd_score_quadrature(batch, kernel, max(1, grid_points // 2), (low, high)).value
    d = batch.behavior_dim
    tail = float(np.sum(np.maximum(batch.qualities, 0.0))) * gaussian_volume(kernel.sigma, d)
    tail *= d * erfc(BOX_MARGIN_SIGMAS / math.sqrt(2.0))
    return fine, 2.0 * abs(fine - coarse) + tail + 1e-12 * abs(fine)


def check_bound_sandwich_population(
    pop_eval: EvaluationsLike, sigma: float, grid_points: int
) -> PropertyReport:
    """Lower bound below the quadrature score, and the gap within eps1 + eps2."""
    batch = as_evaluation_batch(pop_eval)
    d = batch.behavior_dim
    kernel = KernelParams.from_sigma(sigma)
    score, tol = _quadrature_pair(batch, kernel, grid_points)
    bound = lower_bound_full(batch, sigma, d)
    eps = error_bounds(batch, sigma, d)
    margin = min(score + tol - bound, eps.total + tol - (score - bound))
    return _report("bound_sandwich", [margin])


def _random_batch(rng: np.random.Generator, n: int, d: int) -> EvaluationBatch:
    return EvaluationBatch(
        qualities=rng.uniform(0.0, 1.0, n), descriptors=rng.uniform(0.0, 1.0, (n, d))
    )


def check_bound_sandwich(seed: int, trials: int, grid_points: int = 512) -> PropertyReport:
    rng = make_rng(seed)
    reports = []
    for _ in range(trials):
        n = int(rng.integers(1, _MAX_TRIAL_SIZE + 1))
        d = int(rng.integers(1, 3))
        sigma = float(rng.uniform(0.1, 1.0))
        grid = grid_points * 8 if d == 1 else grid_points
        reports.append(check_bound_sandwich_population(_random_batch(rng, n, d), sigma, grid))
    return _merge("bound_sandwich", reports)


def check_lower_bound(seed: int, trials: int, grid_points: int = 512) -> PropertyReport:
    rng = make_rng(seed)
    margins = []
    for _ in range(trials):
        n = int(rng.integers(1, _MAX_TRIAL_SIZE + 1))
        d = int(rng.integers(1, 3))
        sigma = float(rng.uniform(0.1, 1.0))
        batch = _random_batch(rng, n, d)
        grid = grid_points * 8 if d == 1 else grid_points
        score, tol = _quadrature_pair(batch, KernelParams.from_sigma(sigma), grid)
        margins.append(score + 1e-6 + tol - lower_bound_full(batch, sigma, d))
    return _report("lower_bound", margins)


def check_bonferroni(seed: int, trials: int) -> PropertyReport:
    """Second-order partial sum below the max, third-order above."""
    rng = make_rng(seed)
    margins = []
    for _ in range(trials):
        values = rng.uniform(0.0, 1.0, int(rng.integers(1, _MAX_TRIAL_SIZE + 1))).tolist()
        top = max(values)
        margins.append(
            min(
                top - bonferroni_partial_sums(values, 2),
                bonferroni_partial_sums(values, 3) - top,
            )
        )
    return _report("bonferroni", margins)


def _mc_trial_setup(
    rng: np.random.Generator, batch: EvaluationBatch, n_samples: int
) -> tuple[KernelParams, SampleSet]:
    kernel = KernelParams.from_sigma(float(rng.uniform(0.05, 0.3)))
    low, high = integration_box(batch.descriptors, kernel.sigma)
    samples = draw_sample_set(low, high, n_samples, int(rng.integers(2**31)))
    return kernel, samples


def run_monotone_add_trials(seed: int, trials: int, n_samples: int = 4096) -> PropertyReport:
    rng = make_rng(seed)
    reports = []
    for _ in range(trials):
        n = int(rng.integers(1, _MAX_TRIAL_SIZE + 1))
        union = _random_batch(rng, n + 1, 2)
        kernel, samples = _mc_trial_setup(rng, union, n_samples)
        base = EvaluationBatch(qualities=union.qualities[:n], descriptors=union.descriptors[:n])
        reports.append(check_monotone_add(base, union[n], samples, kernel))
    return _merge("monotone_add", reports)


def run_monotone_quality_trials(seed: int, trials: int, n_samples: int = 4096) -> PropertyReport:
    rng = make_rng(seed)
    reports = []
    for _ in range(trials):
        n = int(rng.integers(1, _MAX_TRIAL_SIZE + 1))
        batch = _random_batch(rng, n, 2)
        kernel, samples = _mc_trial_setup(rng, batch, n_samples)
        index = int(rng.integers(n))
        delta = float(rng.uniform(0.0, 1.0))
        reports.append(check_monotone_quality(batch, index, delta, samples, kernel))
    return _merge("monotone_quality", reports)


def run_submodular_trials(seed: int, trials: int, n_samples: int = 4096) -> PropertyReport:
    rng = make_rng(seed)
    reports = []
    for _ in range(trials):
        size = int(rng.integers(2, 9))
        everything = _random_batch(rng, size, 2)
        kernel, samples = _mc_trial_setup(rng, everything, n_samples)
        ground = EvaluationBatch(
            qualities=everything.qualities[:-1], descriptors=everything.descriptors[:-1]
        )
        membership = rng.integers(0, 3, size - 1)
        subset_u = [i for i, level in enumerate(membership) if level == 2]
        subset_v = [i for i, level in enumerate(membership) if level >= 1]
        reports.append(
            check_submodular(ground, subset_u, subset_v, everything[size - 1], samples, kernel)
        )
    return _merge("submodular", reports)


def _distinct_batch(rng: np.random.Generator, d: int, min_distance: float) -> EvaluationBatch:
    n = int(rng.integers(1, 5))
    for _ in range(1000):
        batch = _random_batch(rng, n, d)
        if n == 1:
            return batch
        sq_dist = pairwise_sq_distances(batch.descriptors, batch.descriptors)
        np.fill_diagonal(sq_dist, np.inf)
        if math.sqrt(float(np.min(sq_dist))) >= min_distance:
            return batch
    raise RejectedInputError("Could not draw a population with distinct descriptors")


def limit_sigma_sequence(batch: EvaluationBatch) -> list[float]:
    """Decreasing sigmas ending at one tenth of the closest descriptor pair."""
    if len(batch) == 1:
        return [0.3, 0.1, 0.03]
    sq_dist = pairwise_sq_distances(batch.descriptors, batch.descriptors)
    np.fill_diagonal(sq_dist, np.inf)
    final = LIMIT_SIGMA_FRACTION * math.sqrt(float(np.min(sq_dist)))
    return [final * 9.0, final * 3.0, final]


def run_limit_trials(seed: int, trials: int) -> PropertyReport:
    rng = make_rng(seed)
    reports = []
    for _ in range(trials):
        d = int(rng.integers(1, 3))
        batch = _distinct_batch(rng, d, min_distance=0.05)
        reports.append(check_limit_equivalence(batch, limit_sigma_sequence(batch)))
    return _merge("limit_equivalence", reports)


def run_property_suite(checks: ChecksConfig) -> list[PropertyReport]:
    """All checks at the configured trial counts, in a fixed order."""
    seed = checks.seed
    reports = [
        check_bound_sandwich(seed, checks.sandwich_trials, checks.grid_points),
        check_lower_bound(seed + 1, checks.lower_bound_trials, checks.grid_points),
        run_monotone_add_trials(seed + 2, checks.monotone_add_trials, checks.mc_samples),
        run_monotone_quality_trials(seed + 3, checks.monotone_quality_trials, checks.mc_samples),
        run_submodular_trials(seed + 4, checks.submodular_trials, checks.mc_samples),
        run_limit_trials(seed + 5, checks.limit_trials),
        check_bonferroni(seed + 6, checks.bonferroni_trials),
    ]
    for report in reports:
        logger.info(
            "Property checked",
            extra={
                "check": report.name,
                "trials": report.trials,
                "failures": report.failures,
                "worst_margin": report.worst_margin,
            },
        )
    return reports
