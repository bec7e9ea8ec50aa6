"""Evaluation metrics over untransformed [0, 1]^d descriptors.

QD Score and Coverage come from a fixed CVT archive; the Vendi Score is the exponential
of the eigenvalue entropy of the scaled Gaussian similarity matrix; QVS multiplies it by
the mean quality.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from softqd.core.errors import NumericalError, RejectedInputError
from softqd.core.models import EvaluationsLike, MetricsReport, as_evaluation_batch
from softqd.core.modes import Eigensolver
from softqd.engine.archive import CvtArchive, coverage, insert_batch, qd_score
from softqd.engine.linalg import jacobi_eigh
from softqd.engine.population import make_rng
from softqd.engine.soft_score import pairwise_sq_distances

logger = logging.getLogger("Metrics")

EIGEN_RESIDUAL_TOLERANCE = 1e-8
NEGATIVE_EIGENVALUE_TOLERANCE = 1e-10


def default_sigma_v_sq(d: int) -> float:
    return d / 6.0


def similarity_eigenvalues(
    descriptors: np.ndarray,
    sigma_v_sq: float,
    solver: Eigensolver = Eigensolver.LAPACK,
) -> np.ndarray:
    """Clamped eigenvalues of K/N, with residual and sign checks."""
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.ndim != 2 or descriptors.shape[0] < 1:
        raise RejectedInputError("Vendi Score needs a non-empty (N, d) descriptor matrix")
    if sigma_v_sq <= 0:
        raise RejectedInputError("sigma_v_sq must be positive")
    n = descriptors.shape[0]
    scaled = np.exp(-pairwise_sq_distances(descriptors, descriptors) / sigma_v_sq) / n

    if solver is Eigensolver.JACOBI:
        eigenvalues, vectors = jacobi_eigh(scaled)
    else:
        eigenvalues, vectors = scipy.linalg.eigh(scaled)
    residual = float(np.max(np.linalg.norm(scaled @ vectors - vectors * eigenvalues, axis=0)))
    if residual > EIGEN_RESIDUAL_TOLERANCE:
        raise NumericalError(f"Eigen residual {residual:.3e} exceeds {EIGEN_RESIDUAL_TOLERANCE}")
    if np.any(eigenvalues < -NEGATIVE_EIGENVALUE_TOLERANCE):
        raise NumericalError(f"Similarity matrix has eigenvalue {eigenvalues.min():.3e} < 0")
    return np.maximum(eigenvalues, 0.0)


def vendi_score(
    descriptors: np.ndarray,
    sigma_v_sq: float,
    solver: Eigensolver = Eigensolver.LAPACK,
) -> float:
    eigenvalues = similarity_eigenvalues(descriptors, sigma_v_sq, solver)
    positive = eigenvalues[eigenvalues > 0]
    return float(np.exp(-np.sum(positive * np.log(positive))))


def qvs(qualities: np.ndarray, vendi: float) -> float:
    mean_quality = float(np.mean(qualities))
    if mean_quality < 0:
        logger.warning("Negative mean quality; reporting QVS as 0", extra={"mean": mean_quality})
        return 0.0
    return mean_quality * vendi


def compute_metrics(
    pop_eval: EvaluationsLike,
    centroids: CvtArchive,
    sigma_v_sq: float | None = None,
    solver: Eigensolver = Eigensolver.LAPACK,
    vendi_max_points: int | None = None,
    subsample_seed: int = 0,
) -> MetricsReport:
    """Insert the population into a fresh copy of ``centroids`` and score it.

    When the population exceeds ``vendi_max_points`` the Vendi Score is computed on a
    seeded subsample of that size; every other metric uses all solutions.
    """
    batch = as_evaluation_batch(pop_eval)
    if sigma_v_sq is None:
        sigma_v_sq = default_sigma_v_sq(batch.behavior_dim)
    archive = centroids.cleared()
    insert_batch(archive, batch.qualities, batch.descriptors, np.arange(len(batch)))
    vendi_descriptors = batch.descriptors
    if vendi_max_points is not None and len(batch) > vendi_max_points:
        rows = make_rng(subsample_seed).choice(len(batch), vendi_max_points, replace=False)
        vendi_descriptors = batch.descriptors[np.sort(rows)]
        logger.debug(
            "Subsampled population for Vendi Score",
            extra={"size": len(batch), "kept": vendi_max_points},
        )
    vendi = vendi_score(vendi_descriptors, sigma_v_sq, solver)
    mean_quality = float(np.mean(batch.qualities))
    return MetricsReport(
        qd_score=qd_score(archive),
        coverage_percent=coverage(archive),
        vendi=vendi,
        qvs=qvs(batch.qualities, vendi),
        mean_objective=mean_quality,
        max_objective=float(np.max(batch.qualities)),
        qvs_zeroed=mean_quality < 0,
    )
