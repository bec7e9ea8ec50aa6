from __future__ import annotations

import logging
from typing import Any, Sequence

import numpy as np

from softqd.core.errors import EvaluationError, RejectedInputError
from softqd.core.interfaces import ProblemDefinition
from softqd.core.models import EvaluationBatch, Population

logger = logging.getLogger("Population")


def make_rng(seed: int) -> np.random.Generator:
    """All randomness flows through PCG64 generators created here."""
    return np.random.Generator(np.random.PCG64(seed))


def evaluate_params(problem: ProblemDefinition, params: np.ndarray) -> EvaluationBatch:
    """Evaluate a (B, P) matrix and reject non-finite outputs by row index."""
    qualities, descriptors = problem.eval_batch(params)
    check_finite_outputs(qualities, descriptors)
    return EvaluationBatch(qualities=qualities, descriptors=descriptors)


def check_finite_outputs(
    qualities: np.ndarray, descriptors: np.ndarray, index_offset: int = 0
) -> None:
    bad_rows = ~np.isfinite(qualities) | ~np.all(np.isfinite(descriptors), axis=1)
    if np.any(bad_rows):
        index = int(np.flatnonzero(bad_rows)[0]) + index_offset
        raise EvaluationError("Problem returned a non-finite quality or descriptor", index)


def evaluate_population(
    problem: ProblemDefinition, solutions: Sequence[np.ndarray] | np.ndarray
) -> Population:
    params = np.asarray(solutions, dtype=np.float64)
    if params.ndim != 2 or params.shape[0] < 1:
        raise RejectedInputError("evaluate_population needs a non-empty list of solutions")
    if params.shape[1] != problem.solution_dim:
        raise RejectedInputError(
            f"Solutions have length {params.shape[1]}, problem expects {problem.solution_dim}"
        )
    if not np.all(np.isfinite(params)):
        raise RejectedInputError("Solution parameters must be finite")
    return Population(params=params, evaluations=evaluate_params(problem, params))


def seeded_random_population(
    problem: ProblemDefinition,
    n: int,
    seed: int,
    init_box: tuple[float, float] | None = None,
) -> Population:
    """Uniform i.i.d. initialization inside ``init_box`` (default: the problem's box)."""
    if n < 1:
        raise RejectedInputError("Population size must be at least 1")
    low, high = init_box if init_box is not None else problem.solution_box
    if low > high:
        raise RejectedInputError(f"Initialization box is empty: low={low} > high={high}")
    params = make_rng(seed).uniform(low, high, size=(n, problem.solution_dim))
    logger.debug("Drew initial population", extra={"n": n, "seed": seed, "box": [low, high]})
    return evaluate_population(problem, params)


def population_to_dict(pop: Population) -> dict[str, Any]:
    return {
        "solution_dim": pop.solution_dim,
        "behavior_dim": pop.behavior_dim,
        "params": pop.params.tolist(),
        "qualities": pop.qualities.tolist(),
        "descriptors": pop.descriptors.tolist(),
    }


def population_from_dict(payload: dict[str, Any]) -> Population:
    try:
        params = np.array(payload["params"], dtype=np.float64)
        qualities = np.array(payload["qualities"], dtype=np.float64)
        descriptors = np.array(payload["descriptors"], dtype=np.float64)
        declared = (int(payload["solution_dim"]), int(payload["behavior_dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise RejectedInputError(f"Malformed population payload: {exc}") from exc
    pop = Population(
        params=params,
        evaluations=EvaluationBatch(qualities=qualities, descriptors=descriptors),
    )
    if (pop.solution_dim, pop.behavior_dim) != declared:
        raise RejectedInputError(
            f"Population payload declares dimensions {declared}, "
            f"arrays have {(pop.solution_dim, pop.behavior_dim)}"
        )
    return pop
