import csv
import json
from pathlib import Path
from typing import Any

import pytest
import yaml

import softqd.engine.metrics as metrics_module
import softqd.engine.orchestrator as orchestrator_module
from softqd.cli import main
from softqd.core.errors import NumericalError
from softqd.core.models import PropertyReport
from softqd.engine.archive import build_cvt
from softqd.engine.metrics import compute_metrics
from softqd.engine.population import seeded_random_population
from softqd.plugins.registry import build_problem


def _tiny_config(tmp_path: Path, **sections: dict[str, Any]) -> Path:
    payload: dict[str, Any] = {
        "runtime": {"log_level": "WARNING", "out_dir": str(tmp_path / "runs")},
        "experiment": {
            "domain": "hill",
            "seeds": [1, 2],
            "metrics_cells": 8,
            "metric_interval": 2,
            "cvt_samples": 500,
        },
        "domain_options": {"center": [0.5, -0.5]},
        "squad": {
            "population_size": 8,
            "batch_size": 4,
            "neighbors": 2,
            "epochs": 5,
            "gamma_sq": 0.05,
        },
        "checks": {
            "sandwich_trials": 1,
            "monotone_add_trials": 2,
            "monotone_quality_trials": 2,
            "submodular_trials": 2,
            "limit_trials": 1,
            "bonferroni_trials": 5,
            "lower_bound_trials": 1,
            "mc_samples": 256,
            "grid_points": 64,
        },
    }
    for section, values in sections.items():
        payload[section] = {**payload.get(section, {}), **values}
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(payload), encoding="utf-8")
    return path


def _exit_code(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    return int(excinfo.value.code)


def test_run_writes_per_seed_files_and_summary(tmp_path: Path) -> None:
    config = _tiny_config(tmp_path)
    main(["--config", str(config), "run"])
    out = tmp_path / "runs"
    for seed in (1, 2):
        assert (out / f"metrics_{seed}.csv").exists()
        assert (out / f"iterations_{seed}.csv").exists()
        assert (out / f"population_{seed}.json").exists()
        assert (out / f"scatter_{seed}.svg").exists()
    with (out / "metrics_1.csv").open(encoding="utf-8", newline="") as handle:
        epochs = [row["epoch"] for row in csv.DictReader(handle)]
    assert epochs == ["0", "2", "4", "5"]
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["seeds"] == [1, 2]
    assert summary["domain"] == "hill"
    population = json.loads((out / "population_1.json").read_text(encoding="utf-8"))
    assert len(population["qualities"]) == 8


def test_seed_override_and_out_flag(tmp_path: Path) -> None:
    config = _tiny_config(tmp_path)
    out = tmp_path / "elsewhere"
    main(["--config", str(config), "--seed-override", "9", "--out", str(out), "run"])
    assert (out / "metrics_9.csv").exists()
    assert not (out / "metrics_1.csv").exists()
    assert not (tmp_path / "runs").exists()


def test_same_seed_gives_identical_metrics(tmp_path: Path) -> None:
    config = _tiny_config(tmp_path)
    main(["--config", str(config), "--out", str(tmp_path / "a"), "run"])
    main(["--config", str(config), "--out", str(tmp_path / "b"), "run"])
    for name in ("metrics_1.csv", "metrics_2.csv", "summary.json", "scatter_1.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_pool_matches_serial_run(tmp_path: Path) -> None:
    serial = _tiny_config(tmp_path)
    main(["--config", str(serial), "--out", str(tmp_path / "serial"), "run"])
    pooled = _tiny_config(tmp_path, runtime={"workers": 2})
    main(["--config", str(pooled), "--out", str(tmp_path / "pooled"), "run"])
    for name in ("metrics_1.csv", "metrics_2.csv", "summary.json"):
        serial_bytes = (tmp_path / "serial" / name).read_bytes()
        assert serial_bytes == (tmp_path / "pooled" / name).read_bytes()


def test_eigensolver_setting_reaches_vendi(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    calls = []
    jacobi = metrics_module.jacobi_eigh

    def counting_jacobi(matrix):
        calls.append(matrix.shape)
        return jacobi(matrix)

    monkeypatch.setattr(metrics_module, "jacobi_eigh", counting_jacobi)
    lapack = _tiny_config(tmp_path, experiment={"seeds": [1]})
    main(["--config", str(lapack), "--out", str(tmp_path / "lapack"), "run"])
    assert calls == []
    config = _tiny_config(tmp_path, experiment={"seeds": [1], "eigensolver": "jacobi"})
    main(["--config", str(config), "--out", str(tmp_path / "jacobi"), "run"])
    assert calls

    def vendi_column(name: str) -> list[float]:
        with (tmp_path / name / "metrics_1.csv").open(encoding="utf-8", newline="") as handle:
            return [float(row["vendi"]) for row in csv.DictReader(handle)]

    assert vendi_column("jacobi") == pytest.approx(vendi_column("lapack"), abs=1e-8)


def test_baseline_run(tmp_path: Path) -> None:
    config = _tiny_config(
        tmp_path,
        experiment={"algorithm": "map_elites", "seeds": [1]},
        map_elites={"archive_cells": 16, "batch": 4},
    )
    main(["--config", str(config), "run"])
    summary = json.loads((tmp_path / "runs" / "summary.json").read_text(encoding="utf-8"))
    assert summary["algorithm"] == "map_elites"


def test_sweep_writes_table_and_per_value_runs(tmp_path: Path) -> None:
    config = _tiny_config(tmp_path, experiment={"seeds": [1]})
    main(["--config", str(config), "sweep", "--parameter", "gamma_sq", "--values", "0.05", "0.5"])
    out = tmp_path / "runs"
    with (out / "sweep_gamma_sq.csv").open(encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [(row["value"], row["seed"]) for row in rows] == [("0.05", "1"), ("0.5", "1")]
    assert (out / "sweep_gamma_sq" / "gamma_sq=0.5" / "summary.json").exists()


def test_check_prints_table_and_writes_csv(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = _tiny_config(tmp_path)
    main(["--config", str(config), "check"])
    assert "bound_sandwich" in capsys.readouterr().out
    assert (tmp_path / "runs" / "checks.csv").exists()


def test_failed_property_exits_3(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(
        orchestrator_module,
        "run_property_suite",
        lambda checks: [PropertyReport("monotone_add", 1, 1, -0.5)],
    )
    assert _exit_code(["--config", str(_tiny_config(tmp_path)), "check"]) == 3


def test_missing_config_exits_1(tmp_path: Path) -> None:
    assert _exit_code(["--config", str(tmp_path / "missing.yaml"), "run"]) == 1


def test_unknown_domain_exits_1(tmp_path: Path) -> None:
    config = _tiny_config(tmp_path, experiment={"domain": "no-such-domain"})
    assert _exit_code(["--config", str(config), "run"]) == 1


def test_sweep_usage_errors_exit_1(tmp_path: Path) -> None:
    config = str(_tiny_config(tmp_path))
    assert _exit_code(["--config", config, "sweep", "--parameter", "gamma_sq", "--values"]) == 1
    assert _exit_code(["--config", config, "sweep", "--parameter", "epochs", "--values", "3"]) == 1
    # batch_size may not exceed population_size (8).
    assert (
        _exit_code(["--config", config, "sweep", "--parameter", "batch_size", "--values", "64"])
        == 1
    )


def test_missing_subcommand_exits_1(tmp_path: Path) -> None:
    assert _exit_code(["--config", str(_tiny_config(tmp_path))]) == 1


def test_runtime_failure_exits_2(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    def explode(config: Any, seed: int, out_dir: Path) -> None:
        raise NumericalError("similarity matrix is not symmetric")

    monkeypatch.setattr(orchestrator_module, "run_seed", explode)
    assert _exit_code(["--config", str(_tiny_config(tmp_path)), "run"]) == 2


def test_zero_epochs_summarizes_the_initial_population(tmp_path: Path) -> None:
    config = _tiny_config(tmp_path, experiment={"seeds": [4]}, squad={"epochs": 0})
    main(["--config", str(config), "run"])
    out = tmp_path / "runs"

    problem = build_problem("hill", center=[0.5, -0.5])
    initial = seeded_random_population(problem, 8, seed=4)
    cvt = build_cvt(2, 8, 0, 500)
    expected = compute_metrics(initial, cvt, subsample_seed=4)

    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["metrics"]["qd_score"]["mean"] == expected.qd_score
    assert summary["metrics"]["vendi"]["mean"] == expected.vendi
    assert summary["metrics"]["mean_obj"]["mean"] == expected.mean_objective
    with (out / "metrics_4.csv").open(encoding="utf-8", newline="") as handle:
        assert [row["epoch"] for row in csv.DictReader(handle)] == ["0"]
