from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from softqd.core.errors import RejectedInputError
from softqd.core.modes import ScoreMethod


def _frozen_array(values: object, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim:
        raise RejectedInputError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Evaluation:
    quality: float
    descriptor: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "quality", float(self.quality))
        object.__setattr__(self, "descriptor", _frozen_array(self.descriptor, 1, "descriptor"))


@dataclass(frozen=True, eq=False)
class EvaluationBatch:
    """Index-aligned qualities (N,) and normalized descriptors (N, d)."""

    qualities: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self) -> None:
        qualities = _frozen_array(self.qualities, 1, "qualities")
        descriptors = _frozen_array(self.descriptors, 2, "descriptors")
        if qualities.shape[0] != descriptors.shape[0]:
            raise RejectedInputError(
                f"qualities ({qualities.shape[0]}) and descriptors ({descriptors.shape[0]}) "
                "must have the same length"
            )
        object.__setattr__(self, "qualities", qualities)
        object.__setattr__(self, "descriptors", descriptors)

    @classmethod
    def from_evaluations(cls, evaluations: Sequence[Evaluation]) -> EvaluationBatch:
        if not evaluations:
            raise RejectedInputError("At least one evaluation is required")
        dims = {ev.descriptor.shape[0] for ev in evaluations}
        if len(dims) != 1:
            raise RejectedInputError(f"Descriptors have mixed dimensions: {sorted(dims)}")
        return cls(
            qualities=np.array([ev.quality for ev in evaluations]),
            descriptors=np.stack([ev.descriptor for ev in evaluations]),
        )

    @property
    def behavior_dim(self) -> int:
        return int(self.descriptors.shape[1])

    def __len__(self) -> int:
        return int(self.qualities.shape[0])

    def __getitem__(self, index: int) -> Evaluation:
        return Evaluation(quality=self.qualities[index], descriptor=self.descriptors[index])

    def __iter__(self) -> Iterator[Evaluation]:
        for index in range(len(self)):
            yield self[index]


@dataclass(frozen=True, eq=False)
class Population:
    """N solution parameter vectors with their cached evaluations."""

    params: np.ndarray
    evaluations: EvaluationBatch

    def __post_init__(self) -> None:
        params = _frozen_array(self.params, 2, "params")
        if params.shape[0] < 1:
            raise RejectedInputError("A population needs at least one solution")
        if params.shape[0] != len(self.evaluations):
            raise RejectedInputError(
                f"{params.shape[0]} solutions but {len(self.evaluations)} evaluations"
            )
        if not np.all(np.isfinite(params)):
            raise RejectedInputError("Solution parameters must be finite")
        object.__setattr__(self, "params", params)

    @property
    def qualities(self) -> np.ndarray:
        return self.evaluations.qualities

    @property
    def descriptors(self) -> np.ndarray:
        return self.evaluations.descriptors

    @property
    def size(self) -> int:
        return int(self.params.shape[0])

    @property
    def solution_dim(self) -> int:
        return int(self.params.shape[1])

    @property
    def behavior_dim(self) -> int:
        return self.evaluations.behavior_dim

    def __len__(self) -> int:
        return self.size


EvaluationsLike = Union[Population, EvaluationBatch, Sequence[Evaluation]]


def as_evaluation_batch(pop_eval: EvaluationsLike) -> EvaluationBatch:
    """Accept a Population, an EvaluationBatch or a list of Evaluations."""
    if isinstance(pop_eval, Population):
        return pop_eval.evaluations
    if isinstance(pop_eval, EvaluationBatch):
        return pop_eval
    return EvaluationBatch.from_evaluations(list(pop_eval))


@dataclass(frozen=True)
class KernelParams:
    """Soft QD kernel width sigma and SQUAD bandwidth gamma_sq = 8 sigma^2."""

    sigma: float
    gamma_sq: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0 and self.gamma_sq > 0):
            raise RejectedInputError("sigma and gamma_sq must both be positive")

    @classmethod
    def from_sigma(cls, sigma: float) -> KernelParams:
        return cls(sigma=float(sigma), gamma_sq=8.0 * float(sigma) ** 2)

    @classmethod
    def from_gamma_sq(cls, gamma_sq: float) -> KernelParams:
        return cls(sigma=math.sqrt(float(gamma_sq) / 8.0), gamma_sq=float(gamma_sq))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Monte Carlo sample points drawn from the box [low, high]."""

    points: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", _frozen_array(self.points, 2, "points"))
        object.__setattr__(self, "low", _frozen_array(self.low, 1, "low"))
        object.__setattr__(self, "high", _frozen_array(self.high, 1, "high"))

    @property
    def volume(self) -> float:
        return float(np.prod(self.high - self.low))

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class ScoreEstimate:
    value: float
    std_error: float
    n_samples: int
    method: ScoreMethod


@dataclass(frozen=True)
class ErrorBounds:
    eps1: float
    eps2: float

    @property
    def total(self) -> float:
        return self.eps1 + self.eps2


@dataclass(frozen=True)
class IterationRecord:
    epoch: int
    objective_tilde: float
    mean_quality: float
    max_quality: float
    wall_time: float


@dataclass(frozen=True)
class PropertyReport:
    name: str
    trials: int
    failures: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def merge(self, other: PropertyReport) -> PropertyReport:
        """Combine two reports of the same property (trial counts add up)."""
        return PropertyReport(
            name=self.name,
            trials=self.trials + other.trials,
            failures=self.failures + other.failures,
            worst_margin=min(self.worst_margin, other.worst_margin),
        )


@dataclass(frozen=True)
class MetricsReport:
    qd_score: float
    coverage_percent: float
    vendi: float
    qvs: float
    mean_objective: float
    max_objective: float
    qvs_zeroed: bool = False


@dataclass(frozen=True)
class MetricsSnapshot:
    """Metrics of the population at one epoch, with the optimizer objective alongside."""

    epoch: int
    report: MetricsReport
    s_tilde: float
