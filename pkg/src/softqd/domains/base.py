from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from softqd.core.errors import RejectedInputError
from softqd.core.models import Evaluation


class BaseProblem(ABC):
    """Shared single-solution wrappers over a problem's batched evaluators."""

    solution_dim: int
    behavior_dim: int
    solution_box: tuple[float, float]

    @abstractmethod
    def eval_batch(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ...

    @abstractmethod
    def eval_batch_with_grads(
        self, params: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ...

    def eval(self, solution: np.ndarray) -> Evaluation:
        qualities, descriptors = self.eval_batch(self._as_row(solution))
        return Evaluation(quality=qualities[0], descriptor=descriptors[0])

    def eval_with_grads(
        self, solution: np.ndarray
    ) -> tuple[Evaluation, np.ndarray, np.ndarray]:
        qualities, descriptors, grads, jacs = self.eval_batch_with_grads(self._as_row(solution))
        return Evaluation(quality=qualities[0], descriptor=descriptors[0]), grads[0], jacs[0]

    def check_params(self, params: np.ndarray) -> np.ndarray:
        array = np.asarray(params, dtype=np.float64)
        if array.ndim != 2 or array.shape[1] != self.solution_dim:
            raise RejectedInputError(
                f"Expected solutions of length {self.solution_dim}, "
                f"got array of shape {array.shape}"
            )
        return array

    def _as_row(self, solution: np.ndarray) -> np.ndarray:
        array = np.asarray(solution, dtype=np.float64)
        if array.ndim != 1:
            raise RejectedInputError(f"A solution must be a vector, got shape {array.shape}")
        return self.check_params(array[np.newaxis, :])
