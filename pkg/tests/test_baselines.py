import numpy as np
import pytest

from softqd.config.models import MapElitesConfig, SquadConfig
from softqd.core.errors import RejectedInputError
from softqd.domains.gaussian_hill import GaussianHillProblem
from softqd.domains.linear_projection import LinearProjectionProblem
from softqd.engine.archive import build_cvt
from softqd.engine.baselines import iso_line_mutate, resolve_total_evals, run_map_elites


def test_iso_line_with_zero_noise_returns_first_parent() -> None:
    rng = np.random.default_rng(0)
    x1 = np.array([1.0, 2.0])
    x2 = np.array([3.0, -1.0])
    assert np.array_equal(iso_line_mutate(x1, x2, 0.0, 0.0, rng), x1)


def test_line_component_stays_on_the_parent_line() -> None:
    rng = np.random.default_rng(1)
    x1 = np.zeros((50, 2))
    x2 = np.tile([1.0, 2.0], (50, 1))
    children = iso_line_mutate(x1, x2, 0.0, 0.5, rng)
    assert np.allclose(children[:, 1], 2.0 * children[:, 0])
    assert np.std(children[:, 0]) > 0.1


def test_iso_line_variance_per_coordinate() -> None:
    rng = np.random.default_rng(2)
    x1 = np.array([0.5, -1.0, 2.0, 0.0])
    x2 = x1 + np.array([0.0, 1.0, 3.0, -2.0])
    sigma_iso, sigma_line = 0.5, 0.2
    children = iso_line_mutate(
        np.tile(x1, (10_000, 1)), np.tile(x2, (10_000, 1)), sigma_iso, sigma_line, rng
    )
    expected = sigma_iso**2 + sigma_line**2 * (x2 - x1) ** 2
    assert np.var(children, axis=0) == pytest.approx(expected, rel=0.1)


def test_iso_line_rejects_mismatched_parents() -> None:
    with pytest.raises(RejectedInputError):
        iso_line_mutate(np.zeros(2), np.zeros(3), 0.1, 0.1, np.random.default_rng(0))


def test_budget_parity_with_squad() -> None:
    squad = SquadConfig(population_size=100, batch_size=10, epochs=4)
    assert resolve_total_evals(MapElitesConfig(), squad) == 500
    assert resolve_total_evals(MapElitesConfig(total_evals=200), squad) == 500
    assert resolve_total_evals(MapElitesConfig(total_evals=800), squad) == 800


def test_map_elites_spends_exactly_the_budget() -> None:
    problem = LinearProjectionProblem(solution_dim=8, behavior_dim=2)
    cvt = build_cvt(2, 50, seed=0, samples=5000)
    config = MapElitesConfig(archive_cells=50, batch=16)
    squad = SquadConfig(population_size=32, batch_size=8, neighbors=4, epochs=3)
    result = run_map_elites(problem, config, cvt, seed=1, total_evals=130, objective_config=squad)
    assert result.eval_count == 130
    assert [record.epoch for record in result.records] == [0, 1, 2, 3]
    elites = result.elites()
    assert elites.size == result.archive.occupied_count
    assert cvt.occupied_count == 0


def test_map_elites_is_deterministic() -> None:
    problem = GaussianHillProblem()
    cvt = build_cvt(2, 32, seed=0, samples=4000)
    config = MapElitesConfig(archive_cells=32, batch=8)
    squad = SquadConfig(population_size=16, batch_size=4, neighbors=2, epochs=5)
    first = run_map_elites(problem, config, cvt, seed=2, total_evals=96, objective_config=squad)
    second = run_map_elites(problem, config, cvt, seed=2, total_evals=96, objective_config=squad)
    assert np.array_equal(first.archive.qualities, second.archive.qualities)
    assert np.array_equal(first.elites().params, second.elites().params)


def test_ga_me_improves_on_the_hill() -> None:
    problem = GaussianHillProblem()
    cvt = build_cvt(2, 16, seed=0, samples=4000)
    config = MapElitesConfig(archive_cells=16, batch=16, grad_step=0.005)
    squad = SquadConfig(population_size=16, batch_size=4, neighbors=2, epochs=20)
    result = run_map_elites(
        problem, config, cvt, seed=3, total_evals=336, use_gradients=True, objective_config=squad
    )
    assert result.records[-1].max_quality >= result.records[0].max_quality
    assert result.records[-1].mean_quality > 0.0


def test_map_elites_rejects_mismatched_cvt() -> None:
    problem = LinearProjectionProblem(solution_dim=8, behavior_dim=4)
    cvt = build_cvt(2, 8, seed=0, samples=1000)
    with pytest.raises(RejectedInputError, match="CVT"):
        run_map_elites(problem, MapElitesConfig(), cvt, seed=0, total_evals=64)
