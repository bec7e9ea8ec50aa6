import math

import numpy as np
import pytest

from softqd.core.errors import DomainError, RejectedInputError
from softqd.core.modes import DescriptorFormula
from softqd.domains.gaussian_hill import GaussianHillProblem
from softqd.domains.linear_projection import (
    LinearProjectionProblem,
    clip_descriptor,
    rastrigin_coordinate_max,
)
from softqd.plugins.registry import build_problem


def _scalar_lp(params: list[float], d: int) -> tuple[float, list[float]]:
    """Loop-by-loop LP reference."""
    n = len(params)
    per_coordinate = max(
        (t * t - 10 * math.cos(2 * math.pi * t) + 10)
        for t in np.linspace(-5.12 - 2.048, 5.12 - 2.048, 200_001)
    )
    r_max = n * per_coordinate
    rastrigin = 0.0
    for x in params:
        t = x - 2.048
        rastrigin += t * t - 10 * math.cos(2 * math.pi * t) + 10
    quality = 100.0 * (r_max - rastrigin) / r_max
    chunk = n // d
    descriptors = []
    for k in range(d):
        total = 0.0
        for x in params[k * chunk : (k + 1) * chunk]:
            total += x if abs(x) <= 5.12 else 5.12 / x
        descriptors.append((total / chunk + 5.12) / 10.24)
    return quality, descriptors


def _central_difference(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (fn(x + step) - fn(x - step)) / (2 * h)
    return grad


def test_zero_solution_matches_scalar_reference() -> None:
    problem = LinearProjectionProblem(solution_dim=32, behavior_dim=4)
    evaluation = problem.eval(np.zeros(32))
    quality, descriptors = _scalar_lp([0.0] * 32, 4)
    assert evaluation.quality == pytest.approx(quality, rel=1e-6)
    assert evaluation.descriptor == pytest.approx(descriptors)


def test_mixed_solution_matches_scalar_reference(rng: np.random.Generator) -> None:
    problem = LinearProjectionProblem(solution_dim=16, behavior_dim=4)
    params = rng.uniform(-8.0, 8.0, 16)
    evaluation = problem.eval(params)
    quality, descriptors = _scalar_lp(params.tolist(), 4)
    assert evaluation.quality == pytest.approx(quality, rel=1e-6)
    assert evaluation.descriptor == pytest.approx(descriptors)


def test_rastrigin_maximum_is_refined_beyond_the_grid() -> None:
    value = rastrigin_coordinate_max()
    grid = np.linspace(-5.12 - 2.048, 5.12 - 2.048, 1001)
    coarse = np.max(grid**2 - 10 * np.cos(2 * np.pi * grid) + 10)
    assert value >= coarse
    assert value == pytest.approx(coarse, rel=1e-3)


def test_eval_and_eval_with_grads_agree(
    small_lp: LinearProjectionProblem, rng: np.random.Generator
) -> None:
    params = rng.uniform(-6.0, 6.0, small_lp.solution_dim)
    plain = small_lp.eval(params)
    evaluation, grad, jacobian = small_lp.eval_with_grads(params)
    assert evaluation.quality == plain.quality
    assert np.array_equal(evaluation.descriptor, plain.descriptor)
    assert grad.shape == (small_lp.solution_dim,)
    assert jacobian.shape == (small_lp.behavior_dim, small_lp.solution_dim)


def test_quality_gradient_matches_finite_differences(small_lp: LinearProjectionProblem) -> None:
    rng = np.random.default_rng(0)
    for _ in range(20):
        params = rng.uniform(-5.0, 5.0, small_lp.solution_dim)
        _, grad, _ = small_lp.eval_with_grads(params)
        numeric = _central_difference(lambda x: small_lp.eval(x).quality, params)
        assert np.linalg.norm(grad - numeric) <= 1e-5 * np.linalg.norm(numeric)


def test_quality_peaks_only_at_the_shifted_optimum(small_lp: LinearProjectionProblem) -> None:
    optimum = np.full(small_lp.solution_dim, 2.048)
    best = small_lp.eval(optimum).quality
    assert best == pytest.approx(100.0, rel=1e-12)
    grid = np.linspace(-5.12, 5.12, 2049)
    for i in range(small_lp.solution_dim):
        params = np.tile(optimum, (grid.size, 1))
        params[:, i] = grid
        qualities, _ = small_lp.eval_batch(params)
        assert np.all(qualities < best)
    rng = np.random.default_rng(3)
    qualities, _ = small_lp.eval_batch(rng.uniform(-5.12, 5.12, (500, small_lp.solution_dim)))
    assert np.all(qualities < best)


def test_quality_gradient_vanishes_at_the_optimum(small_lp: LinearProjectionProblem) -> None:
    _, grad, _ = small_lp.eval_with_grads(np.full(small_lp.solution_dim, 2.048))
    assert np.all(grad == 0.0)


def test_descriptor_jacobian_matches_finite_differences(
    small_lp: LinearProjectionProblem,
) -> None:
    rng = np.random.default_rng(1)
    for _ in range(20):
        params = rng.uniform(-8.0, 8.0, small_lp.solution_dim)
        near_seam = np.abs(np.abs(params) - 5.12) < 1e-3
        params[near_seam] += 0.01
        _, _, jacobian = small_lp.eval_with_grads(params)
        for k in range(small_lp.behavior_dim):
            numeric = _central_difference(lambda x: small_lp.eval(x).descriptor[k], params)
            assert np.linalg.norm(jacobian[k] - numeric) <= 1e-5 * max(
                np.linalg.norm(numeric), 1e-12
            )


def test_jacobian_is_block_diagonal(small_lp: LinearProjectionProblem) -> None:
    _, _, jacobian = small_lp.eval_with_grads(np.ones(small_lp.solution_dim))
    chunk = small_lp.chunk_size
    for k in range(small_lp.behavior_dim):
        outside = np.delete(jacobian[k], np.arange(k * chunk, (k + 1) * chunk))
        assert np.all(outside == 0.0)


def test_clip_descriptor_inverts_outside_the_bound() -> None:
    clipped, derivative = clip_descriptor(np.array([1.0, 10.24, -10.24, 5.12]), 5.12)
    assert clipped == pytest.approx([1.0, 0.5, -0.5, 5.12])
    assert derivative == pytest.approx([1.0, -5.12 / 10.24**2, -5.12 / 10.24**2, 1.0])


def test_descriptors_stay_in_unit_cube(small_lp: LinearProjectionProblem) -> None:
    params = np.random.default_rng(2).normal(0.0, 50.0, (64, small_lp.solution_dim))
    _, descriptors = small_lp.eval_batch(params)
    assert np.all(descriptors >= 0.0)
    assert np.all(descriptors <= 1.0)


def test_scaled_sum_formula_is_clamped() -> None:
    problem = LinearProjectionProblem(
        solution_dim=32, behavior_dim=4, descriptor_formula=DescriptorFormula.SCALED_SUM
    )
    _, descriptors = problem.eval_batch(np.full((1, 32), 2.0))
    # chunk sum 16 / d = 4
    assert descriptors[0] == pytest.approx(np.full(4, 9.12 / 10.24))
    _, descriptors, _, jacobian = problem.eval_batch_with_grads(np.full((1, 32), -5.0))
    assert np.all(descriptors == 0.0)
    assert np.all(jacobian == 0.0)


def test_indivisible_dimensions_rejected() -> None:
    with pytest.raises(RejectedInputError, match="divisible"):
        LinearProjectionProblem(solution_dim=10, behavior_dim=4)


def test_hill_gradient_and_descriptor() -> None:
    problem = GaussianHillProblem(center=(0.5, -0.5))
    params = np.array([1.0, 0.0])
    evaluation, grad, jacobian = problem.eval_with_grads(params)
    assert evaluation.quality == pytest.approx(100.0 * math.exp(-0.25))
    assert grad == pytest.approx(-evaluation.quality * np.array([0.5, 0.5]))
    assert evaluation.descriptor == pytest.approx([4.0 / 6.0, 0.5])
    assert jacobian == pytest.approx(np.eye(2) / 6.0)


def test_hill_rejects_bad_center() -> None:
    with pytest.raises(RejectedInputError, match="center"):
        GaussianHillProblem(center=(1.0, 2.0, 3.0))


def test_registry_builds_named_domains() -> None:
    problem = build_problem("lp-16", solution_dim=64)
    assert problem.behavior_dim == 16
    assert problem.solution_dim == 64
    assert build_problem("hill").behavior_dim == 2


def test_registry_accepts_factory_paths() -> None:
    problem = build_problem(
        "softqd.domains.linear_projection:LinearProjectionProblem", solution_dim=8, behavior_dim=2
    )
    assert problem.behavior_dim == 2


def test_registry_errors_are_domain_errors() -> None:
    with pytest.raises(DomainError, match="Unknown domain"):
        build_problem("lp-5")
    with pytest.raises(DomainError, match="Unable to load"):
        build_problem("softqd.domains.nothing_here:Problem")
    with pytest.raises(DomainError, match="Invalid options"):
        build_problem("lp-4", descriptor_formula="median")
