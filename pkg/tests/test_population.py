import json
import math

import numpy as np
import pytest

from softqd.core.errors import EvaluationError, RejectedInputError
from softqd.core.models import EvaluationBatch, Population
from softqd.domains.linear_projection import LinearProjectionProblem
from softqd.engine.population import (
    check_finite_outputs,
    evaluate_population,
    population_from_dict,
    population_to_dict,
    seeded_random_population,
)


def test_optimum_scores_one_hundred() -> None:
    problem = LinearProjectionProblem(solution_dim=1024, behavior_dim=4)
    pop = evaluate_population(problem, [np.full(1024, 2.048)])
    assert pop.qualities[0] == pytest.approx(100.0)
    assert pop.descriptors[0] == pytest.approx([0.7, 0.7, 0.7, 0.7])


def test_dimension_mismatch_rejected(small_lp: LinearProjectionProblem) -> None:
    with pytest.raises(RejectedInputError, match="length"):
        evaluate_population(small_lp, [np.zeros(small_lp.solution_dim + 1)])


def test_non_finite_solution_rejected(small_lp: LinearProjectionProblem) -> None:
    params = np.zeros((2, small_lp.solution_dim))
    params[1, 3] = np.nan
    with pytest.raises(RejectedInputError, match="finite"):
        evaluate_population(small_lp, params)


def test_non_finite_output_names_the_index() -> None:
    qualities = np.array([1.0, 2.0, np.inf])
    descriptors = np.zeros((3, 2))
    with pytest.raises(EvaluationError, match="index 7") as excinfo:
        check_finite_outputs(qualities, descriptors, index_offset=5)
    assert excinfo.value.index == 7


def test_evaluation_is_pure(small_lp: LinearProjectionProblem) -> None:
    pop = seeded_random_population(small_lp, 5, seed=3)
    again = evaluate_population(small_lp, pop.params)
    assert np.array_equal(pop.qualities, again.qualities)
    assert np.array_equal(pop.descriptors, again.descriptors)


def test_seeded_population_is_reproducible(small_lp: LinearProjectionProblem) -> None:
    box = (-2.0, 2.0)
    first = seeded_random_population(small_lp, 3, seed=7, init_box=box)
    second = seeded_random_population(small_lp, 3, seed=7, init_box=box)
    assert np.array_equal(first.params, second.params)
    assert np.array_equal(first.qualities, second.qualities)


def test_seeded_population_stays_in_box() -> None:
    problem = LinearProjectionProblem(solution_dim=64, behavior_dim=4)
    pop = seeded_random_population(problem, 1024, seed=1, init_box=(-1.0, 1.0))
    assert pop.size == 1024
    assert np.all(pop.params >= -1.0)
    assert np.all(pop.params <= 1.0)


def test_degenerate_box_gives_zeros(small_lp: LinearProjectionProblem) -> None:
    pop = seeded_random_population(small_lp, 100, seed=2, init_box=(0.0, 0.0))
    assert np.all(pop.params == 0.0)


def test_empty_population_rejected(small_lp: LinearProjectionProblem) -> None:
    with pytest.raises(RejectedInputError):
        seeded_random_population(small_lp, 0, seed=1)


def test_population_requires_aligned_lengths() -> None:
    with pytest.raises(RejectedInputError):
        Population(
            params=np.zeros((3, 2)),
            evaluations=EvaluationBatch(qualities=np.zeros(2), descriptors=np.zeros((2, 2))),
        )


def test_population_arrays_are_read_only(small_lp: LinearProjectionProblem) -> None:
    pop = seeded_random_population(small_lp, 2, seed=4)
    with pytest.raises(ValueError):
        pop.params[0, 0] = 1.0


def test_population_json_is_bit_exact(small_lp: LinearProjectionProblem) -> None:
    pop = seeded_random_population(small_lp, 4, seed=11)
    payload = json.loads(json.dumps(population_to_dict(pop)))
    assert set(payload) == {"solution_dim", "behavior_dim", "params", "qualities", "descriptors"}
    restored = population_from_dict(payload)
    assert np.array_equal(restored.params, pop.params)
    assert np.array_equal(restored.qualities, pop.qualities)
    assert np.array_equal(restored.descriptors, pop.descriptors)


def test_population_payload_with_wrong_dimensions_rejected(
    small_lp: LinearProjectionProblem,
) -> None:
    payload = population_to_dict(seeded_random_population(small_lp, 2, seed=1))
    payload["behavior_dim"] = 3
    with pytest.raises(RejectedInputError, match="declares"):
        population_from_dict(payload)


def test_malformed_population_payload_rejected() -> None:
    with pytest.raises(RejectedInputError, match="Malformed"):
        population_from_dict({"params": [[0.0]]})


def test_population_quality_sum_is_finite(small_lp: LinearProjectionProblem) -> None:
    pop = seeded_random_population(small_lp, 8, seed=5)
    assert math.isfinite(float(np.sum(pop.qualities)))
