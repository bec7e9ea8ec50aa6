"""Linear Projection benchmark: a shifted Rastrigin objective with chunked descriptors.

The quality is the Rastrigin function of ``x - offset`` rescaled so the optimum scores
100 and the worst point of the ``[-bound, bound]^n`` box scores 0. Descriptors average a
clipped copy of ``x`` over ``d`` contiguous chunks and map the result into ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from softqd.core.errors import RejectedInputError
from softqd.core.modes import DescriptorFormula
from softqd.domains.base import BaseProblem

_GRID_POINTS = 1_000_000


def _rastrigin_terms(shifted: np.ndarray) -> np.ndarray:
    return shifted**2 - 10.0 * np.cos(2.0 * np.pi * shifted) + 10.0


@lru_cache(maxsize=None)
def rastrigin_coordinate_max(bound: float = 5.12, offset: float = 2.048) -> float:
    """Maximum of one Rastrigin term over the shifted coordinate range.

    A dense grid locates the best bracket and a bounded scalar search polishes it.
    """
    low, high = -bound - offset, bound - offset
    grid = np.linspace(low, high, _GRID_POINTS)
    values = _rastrigin_terms(grid)
    best = int(np.argmax(values))
    step = (high - low) / (_GRID_POINTS - 1)
    bracket = (max(low, grid[best] - step), min(high, grid[best] + step))
    result = minimize_scalar(
        lambda t: -float(_rastrigin_terms(np.asarray(t))),
        bounds=bracket,
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(values[best]), -float(result.fun))


def clip_descriptor(x: np.ndarray, bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Return clip(x) and its derivative; the seam |x| = bound takes the inside branch."""
    inside = np.abs(x) <= bound
    safe = np.where(inside, 1.0, x)
    clipped = np.where(inside, x, bound / safe)
    derivative = np.where(inside, 1.0, -bound / safe**2)
    return clipped, derivative


@dataclass(frozen=True)
class LinearProjectionProblem(BaseProblem):
    solution_dim: int = 1024
    behavior_dim: int = 4
    bound: float = 5.12
    offset: float = 2.048
    descriptor_formula: DescriptorFormula = DescriptorFormula.CHUNK_MEAN
    rastrigin_max: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        if self.solution_dim < 1 or self.behavior_dim < 1:
            raise RejectedInputError("solution_dim and behavior_dim must be positive")
        if self.solution_dim % self.behavior_dim != 0:
            raise RejectedInputError(
                f"solution_dim {self.solution_dim} is not divisible by behavior_dim "
                f"{self.behavior_dim}"
            )
        object.__setattr__(self, "descriptor_formula", DescriptorFormula(self.descriptor_formula))
        per_coordinate = rastrigin_coordinate_max(float(self.bound), float(self.offset))
        object.__setattr__(self, "rastrigin_max", self.solution_dim * per_coordinate)

    @property
    def solution_box(self) -> tuple[float, float]:
        return (-self.bound, self.bound)

    @property
    def chunk_size(self) -> int:
        return self.solution_dim // self.behavior_dim

    def quality_with_grad(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Scaled quality (B,) and its gradient (B, n)."""
        shifted = self.check_params(params) - self.offset
        rastrigin = _rastrigin_terms(shifted).sum(axis=1)
        scale = 100.0 / self.rastrigin_max
        quality = scale * (self.rastrigin_max - rastrigin)
        grad = -scale * (2.0 * shifted + 20.0 * math.pi * np.sin(2.0 * np.pi * shifted))
        return quality, grad

    def descriptor_with_jacobian(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalized descriptors (B, d) and the block-diagonal jacobian (B, d, n)."""
        return self._descriptors(params, with_jacobian=True)

    def _descriptors(
        self, params: np.ndarray, with_jacobian: bool
    ) -> tuple[np.ndarray, np.ndarray | None]:
        x = self.check_params(params)
        batch = x.shape[0]
        clipped, derivative = clip_descriptor(x, self.bound)
        chunks = clipped.reshape(batch, self.behavior_dim, self.chunk_size)
        width = 2.0 * self.bound
        if self.descriptor_formula is DescriptorFormula.CHUNK_MEAN:
            raw = chunks.mean(axis=2)
            divisor = self.chunk_size * width
            descriptors = (raw + self.bound) / width
            active = np.ones_like(descriptors, dtype=bool)
        else:
            raw = chunks.sum(axis=2) / self.behavior_dim
            divisor = self.behavior_dim * width
            unclamped = (raw + self.bound) / width
            descriptors = np.clip(unclamped, 0.0, 1.0)
            active = (unclamped >= 0.0) & (unclamped <= 1.0)
        if not with_jacobian:
            return descriptors, None

        blocks = derivative.reshape(batch, self.behavior_dim, self.chunk_size) / divisor
        blocks = blocks * active[:, :, np.newaxis]
        jacobian = np.zeros((batch, self.behavior_dim, self.solution_dim))
        for k in range(self.behavior_dim):
            start = k * self.chunk_size
            jacobian[:, k, start : start + self.chunk_size] = blocks[:, k, :]
        return descriptors, jacobian

    def eval_batch(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        quality, _ = self.quality_with_grad(params)
        descriptors, _ = self._descriptors(params, with_jacobian=False)
        return quality, descriptors

    def eval_batch_with_grads(
        self, params: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        quality, grad = self.quality_with_grad(params)
        descriptors, jacobian = self.descriptor_with_jacobian(params)
        return quality, descriptors, grad, jacobian
