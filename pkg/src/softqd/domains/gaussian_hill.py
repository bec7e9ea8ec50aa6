from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from softqd.core.errors import RejectedInputError
from softqd.domains.base import BaseProblem


@dataclass(frozen=True, eq=False)
class GaussianHillProblem(BaseProblem):
    """Two-dimensional hill with the solution itself as the descriptor."""

    center: Sequence[float] = (0.0, 0.0)
    low: float = -3.0
    high: float = 3.0
    height: float = 100.0

    solution_dim = 2
    behavior_dim = 2

    def __post_init__(self) -> None:
        center = np.array(self.center, dtype=np.float64)
        if center.shape != (2,):
            raise RejectedInputError(f"center must have two entries, got {self.center!r}")
        if not self.low < self.high:
            raise RejectedInputError("low must be below high")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

    @property
    def solution_box(self) -> tuple[float, float]:
        return (self.low, self.high)

    def eval_batch(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        quality, descriptors, _, _ = self.eval_batch_with_grads(params)
        return quality, descriptors

    def eval_batch_with_grads(
        self, params: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        x = self.check_params(params)
        offset = x - self.center
        quality = self.height * np.exp(-0.5 * np.sum(offset**2, axis=1))
        grad = -quality[:, np.newaxis] * offset

        width = self.high - self.low
        descriptors = np.clip((x - self.low) / width, 0.0, 1.0)
        inside = (x >= self.low) & (x <= self.high)
        jacobian = np.zeros((x.shape[0], 2, 2))
        jacobian[:, 0, 0] = inside[:, 0] / width
        jacobian[:, 1, 1] = inside[:, 1] / width
        return quality, descriptors, grad, jacobian
