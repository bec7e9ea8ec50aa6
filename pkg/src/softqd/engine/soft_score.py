"""Soft QD Score estimators, the pairwise lower bound, and its error terms.

Every kernel and square-root expression uses the clamped quality ``max(f, 0)``; only the
plain quality sum of :func:`squad_objective` sees raw (possibly negative) qualities.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from softqd.core.errors import RejectedInputError, UnsupportedDimensionError
from softqd.core.models import (
    ErrorBounds,
    EvaluationsLike,
    KernelParams,
    SampleSet,
    ScoreEstimate,
    as_evaluation_batch,
)
from softqd.core.modes import ScoreMethod
from softqd.engine.population import make_rng

BOX_MARGIN_SIGMAS = 8.0
MAX_QUADRATURE_DIM = 3
_QUADRATURE_CHUNK = 1 << 18


def pairwise_sq_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared euclidean distances from explicit differences (no expansion cancellation)."""
    diff = x[:, np.newaxis, :] - y[np.newaxis, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def gaussian_volume(sigma: float, d: int) -> float:
    """Integral of exp(-|b|^2 / 2 sigma^2) over R^d."""
    return (2.0 * math.pi * sigma**2) ** (d / 2.0)


def behavior_values(
    pop_eval: EvaluationsLike, points: np.ndarray, kernel: KernelParams
) -> np.ndarray:
    """Behavior value at each row of ``points``.

    Solutions are folded in one at a time with a running maximum, so adding a solution
    or raising a quality can only raise every entry, bit for bit.
    """
    batch = as_evaluation_batch(pop_eval)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != batch.behavior_dim:
        raise RejectedInputError(
            f"Query points must have shape (m, {batch.behavior_dim}), got {points.shape}"
        )
    qualities = np.maximum(batch.qualities, 0.0)
    inv_two_sigma_sq = 1.0 / (2.0 * kernel.sigma**2)
    values = np.zeros(points.shape[0])
    for quality, descriptor in zip(qualities, batch.descriptors):
        diff = points - descriptor
        sq_dist = np.einsum("ij,ij->i", diff, diff)
        np.maximum(values, quality * np.exp(-sq_dist * inv_two_sigma_sq), out=values)
    return values


def behavior_value(pop_eval: EvaluationsLike, query: np.ndarray, kernel: KernelParams) -> float:
    batch = as_evaluation_batch(pop_eval)
    if len(batch) == 0:
        raise RejectedInputError("behavior_value needs a non-empty population")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (batch.behavior_dim,):
        raise RejectedInputError(
            f"Query has shape {query.shape}, descriptors have dimension {batch.behavior_dim}"
        )
    return float(behavior_values(batch, query[np.newaxis, :], kernel)[0])


def integration_box(
    descriptors: np.ndarray, sigma: float, margin_sigmas: float = BOX_MARGIN_SIGMAS
) -> tuple[np.ndarray, np.ndarray]:
    descriptors = np.asarray(descriptors, dtype=np.float64)
    margin = margin_sigmas * sigma
    return descriptors.min(axis=0) - margin, descriptors.max(axis=0) + margin


def draw_sample_set(low: np.ndarray, high: np.ndarray, n: int, seed: int) -> SampleSet:
    """Uniform sample points shared across several score evaluations."""
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if n < 1:
        raise RejectedInputError("A sample set needs at least one point")
    if low.shape != high.shape or np.any(low >= high):
        raise RejectedInputError("Sample box must satisfy low < high in every coordinate")
    points = make_rng(seed).uniform(low, high, size=(n, low.shape[0]))
    return SampleSet(points=points, low=low, high=high)


def _check_margin(
    descriptors: np.ndarray, sigma: float, low: np.ndarray, high: np.ndarray
) -> None:
    required = BOX_MARGIN_SIGMAS * sigma
    slack = 1e-9 * (1.0 + np.abs(descriptors).max(initial=0.0) + required)
    below = descriptors.min(axis=0) - low
    above = high - descriptors.max(axis=0)
    if np.any(below < required - slack) or np.any(above < required - slack):
        raise RejectedInputError(
            f"Integration box must extend {BOX_MARGIN_SIGMAS:g} sigma beyond every descriptor"
        )


def soft_qd_score_mc(
    pop_eval: EvaluationsLike, kernel: KernelParams, samples: SampleSet
) -> ScoreEstimate:
    """Monte Carlo estimate of the Soft QD Score over the box of ``samples``."""
    batch = as_evaluation_batch(pop_eval)
    if len(samples) == 0:
        raise RejectedInputError("soft_qd_score_mc needs at least one sample point")
    if samples.points.shape[1] != batch.behavior_dim:
        raise RejectedInputError("Sample points and descriptors differ in dimension")
    _check_margin(batch.descriptors, kernel.sigma, samples.low, samples.high)

    values = behavior_values(batch, samples.points, kernel)
    volume = samples.volume
    n = len(samples)
    std_error = volume * float(np.std(values, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    return ScoreEstimate(
        value=volume * float(np.mean(values)),
        std_error=std_error,
        n_samples=n,
        method=ScoreMethod.MONTE_CARLO,
    )


def marginal_gain(
    base: EvaluationsLike | None,
    extra: EvaluationsLike,
    kernel: KernelParams,
    samples: SampleSet,
) -> float:
    """Shared-sample increase of the Soft QD Score when ``extra`` joins ``base``.

    ``base`` may be None for the empty set. The mean is taken over pointwise
    differences, so nested bases give ordered gains exactly.
    """
    extra_values = behavior_values(extra, samples.points, kernel)
    if base is None:
        base_values = np.zeros_like(extra_values)
    else:
        base_values = behavior_values(base, samples.points, kernel)
    gains = np.maximum(base_values, extra_values) - base_values
    return samples.volume * float(np.mean(gains))


def soft_qd_score_quadrature(
    pop_eval: EvaluationsLike,
    kernel: KernelParams,
    grid_points_per_axis: int,
    box: tuple[np.ndarray, np.ndarray],
) -> ScoreEstimate:
    """Midpoint-rule integral of the behavior value; deterministic, d <= 3 only."""
    batch = as_evaluation_batch(pop_eval)
    d = batch.behavior_dim
    if d > MAX_QUADRATURE_DIM:
        raise UnsupportedDimensionError(
            f"Grid quadrature supports d <= {MAX_QUADRATURE_DIM}, got d={d}"
        )
    if grid_points_per_axis < 1:
        raise RejectedInputError("grid_points_per_axis must be at least 1")
    low = np.asarray(box[0], dtype=np.float64)
    high = np.asarray(box[1], dtype=np.float64)
    if low.shape != (d,) or high.shape != (d,):
        raise RejectedInputError(f"Quadrature box bounds must have shape ({d},)")
    _check_margin(batch.descriptors, kernel.sigma, low, high)

    step = (high - low) / grid_points_per_axis
    shape = (grid_points_per_axis,) * d
    total_cells = grid_points_per_axis**d
    accumulated = 0.0
    for start in range(0, total_cells, _QUADRATURE_CHUNK):
        flat = np.arange(start, min(start + _QUADRATURE_CHUNK, total_cells))
        cell_index = np.stack(np.unravel_index(flat, shape), axis=1)
        points = low + (cell_index + 0.5) * step
        accumulated += float(np.sum(behavior_values(batch, points, kernel)))
    return ScoreEstimate(
        value=accumulated * float(np.prod(step)),
        std_error=0.0,
        n_samples=total_cells,
        method=ScoreMethod.GRID_QUADRATURE,
    )


def _checked_non_negative(pop_eval: EvaluationsLike, d: int) -> tuple[np.ndarray, np.ndarray]:
    batch = as_evaluation_batch(pop_eval)
    if len(batch) == 0:
        raise RejectedInputError("A non-empty population is required")
    if batch.behavior_dim != d:
        raise RejectedInputError(f"d={d} does not match descriptor dimension {batch.behavior_dim}")
    if np.any(batch.qualities < 0):
        raise RejectedInputError("Qualities must be clamped to >= 0 before bounding")
    return batch.qualities, batch.descriptors


def lower_bound_full(pop_eval: EvaluationsLike, sigma: float, d: int) -> float:
    """Closed-form pairwise lower bound on the Soft QD Score."""
    qualities, descriptors = _checked_non_negative(pop_eval, d)
    sq_dist = pairwise_sq_distances(descriptors, descriptors)
    upper = np.triu_indices(qualities.shape[0], k=1)
    overlap = np.sqrt(np.outer(qualities, qualities)) * np.exp(-sq_dist / (8.0 * sigma**2))
    return gaussian_volume(sigma, d) * (float(np.sum(qualities)) - float(np.sum(overlap[upper])))


def squad_objective(
    pop_eval: EvaluationsLike,
    gamma_sq: float,
    neighbor_lists: Sequence[Sequence[int]],
) -> float:
    """Quality sum minus half the neighbor-list repulsion.

    Each symmetric pair is visited from both endpoints, hence the factor one half.
    """
    batch = as_evaluation_batch(pop_eval)
    n = len(batch)
    if len(neighbor_lists) != n:
        raise RejectedInputError(f"Expected {n} neighbor lists, got {len(neighbor_lists)}")
    rows: list[int] = []
    cols: list[int] = []
    for i, neighbors in enumerate(neighbor_lists):
        for j in neighbors:
            j = int(j)
            if not 0 <= j < n:
                raise RejectedInputError(f"Neighbor index {j} out of range for solution {i}")
            if j == i:
                raise RejectedInputError(f"Neighbor list of solution {i} contains itself")
            rows.append(i)
            cols.append(j)
    total = float(np.sum(batch.qualities))
    if not rows:
        return total
    row_idx = np.asarray(rows)
    col_idx = np.asarray(cols)
    clamped = np.maximum(batch.qualities, 0.0)
    diff = batch.descriptors[row_idx] - batch.descriptors[col_idx]
    sq_dist = np.einsum("ij,ij->i", diff, diff)
    repulsion = np.sqrt(clamped[row_idx] * clamped[col_idx]) * np.exp(-sq_dist / gamma_sq)
    return total - 0.5 * float(np.sum(repulsion))


def all_pairs_neighbors(n: int) -> list[list[int]]:
    return [[j for j in range(n) if j != i] for i in range(n)]


def error_bounds(pop_eval: EvaluationsLike, sigma: float, d: int) -> ErrorBounds:
    """Triple-overlap truncation term and geometric-mean term of the bound's gap."""
    qualities, descriptors = _checked_non_negative(pop_eval, d)
    n = qualities.shape[0]
    volume = gaussian_volume(sigma, d)
    sq_dist = pairwise_sq_distances(descriptors, descriptors)
    dist = np.sqrt(sq_dist)

    eps1 = 0.0
    if n >= 3:
        i, j, k = (np.asarray(idx) for idx in zip(*itertools.combinations(range(n), 3)))
        spread = sq_dist[i, j] + sq_dist[j, k] + sq_dist[i, k]
        weights = np.cbrt(qualities[i] * qualities[j] * qualities[k])
        eps1 = volume * float(np.sum(weights * np.exp(-spread / (18.0 * sigma**2))))

    eps2 = 0.0
    if n >= 2:
        a, b = np.triu_indices(n, k=1)
        terms = np.abs(qualities[a] - qualities[b])
        terms = terms + np.minimum(qualities[a], qualities[b]) * dist[a, b] / sigma
        eps2 = volume * float(np.sum(terms))
    return ErrorBounds(eps1=eps1, eps2=eps2)


def bonferroni_partial_sums(values: Sequence[float], order: int) -> float:
    """Alternating sum of subset minima up to ``order``; brute force, for oracles."""
    if order not in (2, 3):
        raise RejectedInputError(f"order must be 2 or 3, got {order}")
    values = [float(v) for v in values]
    if any(v < 0 for v in values):
        raise RejectedInputError("Bonferroni partial sums need non-negative values")
    # fsum rounds the exact alternating sum once, so comparisons with max are exact.
    terms: list[float] = []
    for m in range(1, order + 1):
        sign = 1.0 if m % 2 == 1 else -1.0
        terms.extend(sign * min(subset) for subset in itertools.combinations(values, m))
    return math.fsum(terms)
