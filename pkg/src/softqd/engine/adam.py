from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from softqd.core.errors import RejectedInputError


@dataclass
class AdamState:
    """Per-solution Adam moments; rows align with population indices."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n: int, p: int) -> AdamState:
        return cls(
            first_moment=np.zeros((n, p)),
            second_moment=np.zeros((n, p)),
            step_count=np.zeros(n, dtype=np.int64),
        )

    def rows(self, index: np.ndarray) -> AdamState:
        return AdamState(
            first_moment=self.first_moment[index].copy(),
            second_moment=self.second_moment[index].copy(),
            step_count=self.step_count[index].copy(),
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
        )

    def write_rows(self, index: np.ndarray, other: AdamState) -> None:
        self.first_moment[index] = other.first_moment
        self.second_moment[index] = other.second_moment
        self.step_count[index] = other.step_count


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam ascent step; inputs are left untouched."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise RejectedInputError(
            f"Shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    step_count = state.step_count + 1
    first = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    second = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads**2

    # step_count is per row (per solution), broadcast across parameters.
    t = step_count.astype(np.float64).reshape(step_count.shape + (1,) * (params.ndim - 1))
    first_hat = first / (1.0 - state.beta1**t)
    second_hat = second / (1.0 - state.beta2**t)
    new_params = params + lr * first_hat / (np.sqrt(second_hat) + state.epsilon)
    new_state = AdamState(
        first_moment=first,
        second_moment=second,
        step_count=step_count,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params, new_state
