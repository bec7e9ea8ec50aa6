from __future__ import annotations

from typing import Protocol

import numpy as np

from softqd.core.models import Evaluation


class ProblemDefinition(Protocol):
    """Quality and descriptor functions with analytic derivatives.

    Batched methods take a (B, P) parameter matrix. Descriptors are already
    normalized into [0, 1]^d by the problem.
    """

    solution_dim: int
    behavior_dim: int
    solution_box: tuple[float, float]

    def eval(self, solution: np.ndarray) -> Evaluation:
        """Evaluate a single solution."""

    def eval_with_grads(self, solution: np.ndarray) -> tuple[Evaluation, np.ndarray, np.ndarray]:
        """Return (evaluation, grad_quality (P,), jac_descriptor (d, P))."""

    def eval_batch(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return qualities (B,) and descriptors (B, d)."""

    def eval_batch_with_grads(
        self, params: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return qualities (B,), descriptors (B, d), grad_quality (B, P), jac (B, d, P)."""
