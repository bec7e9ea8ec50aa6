"""Centroidal Voronoi tessellation archives over the unit behavior cube."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from softqd.core.errors import RejectedInputError
from softqd.core.models import Evaluation
from softqd.engine.population import make_rng
from softqd.engine.soft_score import pairwise_sq_distances

logger = logging.getLogger("Metrics")

CVT_SAMPLES = 100_000
LLOYD_MAX_ITERATIONS = 100
LLOYD_TOLERANCE = 1e-6
_NEAREST_CHUNK_ELEMENTS = 1 << 22


@dataclass
class CvtArchive:
    """Fixed centroids with at most one incumbent per cell.

    Empty cells have ``occupied`` False and ``solution_ids`` -1.
    """

    centroids: np.ndarray
    occupied: np.ndarray
    qualities: np.ndarray
    descriptors: np.ndarray
    solution_ids: np.ndarray

    @classmethod
    def empty(cls, centroids: np.ndarray) -> CvtArchive:
        centroids = np.array(centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise RejectedInputError("An archive needs a non-empty (C, d) centroid matrix")
        centroids.setflags(write=False)
        cells, d = centroids.shape
        return cls(
            centroids=centroids,
            occupied=np.zeros(cells, dtype=bool),
            qualities=np.zeros(cells),
            descriptors=np.zeros((cells, d)),
            solution_ids=np.full(cells, -1, dtype=np.int64),
        )

    @property
    def cells(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def behavior_dim(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.occupied))

    def cleared(self) -> CvtArchive:
        return CvtArchive.empty(self.centroids)


def mean_quantization_error(centroids: np.ndarray, points: np.ndarray) -> float:
    """Mean distance from each point to its nearest centroid."""
    distances, _ = cKDTree(centroids).query(np.asarray(points, dtype=np.float64))
    return float(np.mean(distances))


@lru_cache(maxsize=8)
def _lloyd_centroids(d: int, cells: int, seed: int, samples: int) -> np.ndarray:
    points = make_rng(seed).uniform(0.0, 1.0, size=(samples, d))
    centroids = points[:cells].copy()
    for iteration in range(1, LLOYD_MAX_ITERATIONS + 1):
        _, labels = cKDTree(centroids).query(points)
        counts = np.bincount(labels, minlength=cells)
        sums = np.stack(
            [np.bincount(labels, weights=points[:, k], minlength=cells) for k in range(d)],
            axis=1,
        )
        updated = centroids.copy()
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, np.newaxis]
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < LLOYD_TOLERANCE:
            break
    logger.debug(
        "Built CVT",
        extra={
            "d": d,
            "cells": cells,
            "seed": seed,
            "iterations": iteration,
            "quantization_error": mean_quantization_error(centroids, points),
        },
    )
    centroids.setflags(write=False)
    return centroids


def build_cvt(d: int, cells: int, seed: int, samples: int = CVT_SAMPLES) -> CvtArchive:
    """Lloyd iterations on uniform samples of [0, 1]^d, seeded from the first ``cells`` draws."""
    if d < 1 or cells < 1:
        raise RejectedInputError("build_cvt needs d >= 1 and cells >= 1")
    if samples < cells:
        raise RejectedInputError(f"Need at least {cells} samples, got {samples}")
    return CvtArchive.empty(_lloyd_centroids(d, cells, seed, samples))


def nearest_centroids(centroids: np.ndarray, descriptors: np.ndarray) -> np.ndarray:
    """Brute-force nearest centroid per descriptor; argmin keeps the smaller index on ties."""
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.ndim != 2 or descriptors.shape[1] != centroids.shape[1]:
        raise RejectedInputError(
            f"Descriptors of shape {descriptors.shape} do not match "
            f"{centroids.shape[1]}-d centroids"
        )
    chunk = max(1, _NEAREST_CHUNK_ELEMENTS // (centroids.shape[0] * centroids.shape[1]))
    labels = np.empty(descriptors.shape[0], dtype=np.int64)
    for start in range(0, descriptors.shape[0], chunk):
        block = pairwise_sq_distances(descriptors[start : start + chunk], centroids)
        labels[start : start + chunk] = np.argmin(block, axis=1)
    return labels


def _place(
    archive: CvtArchive, cell: int, quality: float, descriptor: np.ndarray, ref: int
) -> bool:
    if archive.occupied[cell] and not quality > archive.qualities[cell]:
        return False
    archive.occupied[cell] = True
    archive.qualities[cell] = quality
    archive.descriptors[cell] = descriptor
    archive.solution_ids[cell] = ref
    return True


def archive_insert(archive: CvtArchive, evaluation: Evaluation, solution_ref: int) -> bool:
    """Keep the evaluation iff its cell is empty or it strictly beats the incumbent."""
    cell = int(nearest_centroids(archive.centroids, evaluation.descriptor[np.newaxis, :])[0])
    return _place(archive, cell, evaluation.quality, evaluation.descriptor, solution_ref)


def insert_batch(
    archive: CvtArchive,
    qualities: np.ndarray,
    descriptors: np.ndarray,
    solution_refs: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Insert rows in order; returns (changed flags, target cells)."""
    cells = nearest_centroids(archive.centroids, descriptors)
    changed = np.zeros(cells.shape[0], dtype=bool)
    for row, cell in enumerate(cells):
        changed[row] = _place(
            archive, int(cell), float(qualities[row]), descriptors[row], int(solution_refs[row])
        )
    return changed, cells


def qd_score(archive: CvtArchive) -> float:
    return float(np.sum(archive.qualities[archive.occupied]))


def coverage(archive: CvtArchive) -> float:
    return 100.0 * archive.occupied_count / archive.cells


def centroids_to_dict(archive: CvtArchive, seed: int | None = None) -> dict[str, Any]:
    return {
        "behavior_dim": archive.behavior_dim,
        "cells": archive.cells,
        "seed": seed,
        "centroids": archive.centroids.tolist(),
    }


def archive_from_dict(payload: dict[str, Any]) -> CvtArchive:
    try:
        centroids = np.array(payload["centroids"], dtype=np.float64)
        declared = (int(payload["cells"]), int(payload["behavior_dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise RejectedInputError(f"Malformed centroid payload: {exc}") from exc
    if centroids.shape != declared:
        raise RejectedInputError(f"Centroids have shape {centroids.shape}, payload says {declared}")
    return CvtArchive.empty(centroids)
