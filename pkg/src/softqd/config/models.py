from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator

from softqd.core.modes import Algorithm, Eigensolver, KnnSpace


class RuntimeConfig(BaseModel):
    log_level: str = "INFO"
    out_dir: str
    # Seeds run in a process pool when greater than 1.
    workers: int = 1

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, value: str) -> str:
        if value.upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError("Unsupported log level")
        return value.upper()

    @field_validator("workers")
    @classmethod
    def validate_workers(cls, value: int) -> int:
        if value < 1:
            raise ValueError("runtime.workers must be at least 1")
        return value


class ExperimentConfig(BaseModel):
    domain: str
    algorithm: Algorithm = Algorithm.SQUAD
    seeds: list[int] = Field(default_factory=lambda: [1, 2, 3])
    metrics_cells: int = 512
    # Defaults to d/6 for the domain's behavior dimension.
    sigma_v_sq: float | None = None
    metric_interval: int = 100
    cvt_seed: int = 0
    cvt_samples: int = 100_000
    # Larger populations (baseline elites) are subsampled for the Vendi Score.
    vendi_max_points: int = 2048
    eigensolver: Eigensolver = Eigensolver.LAPACK
    emit_svg: bool = True

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("experiment.seeds must be a non-empty list")
        return value

    @field_validator("metrics_cells", "metric_interval", "cvt_samples", "vendi_max_points")
    @classmethod
    def validate_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("sigma_v_sq")
    @classmethod
    def validate_sigma_v_sq(cls, value: float | None) -> float | None:
        if value is not None and value <= 0:
            raise ValueError("experiment.sigma_v_sq must be positive")
        return value


class SquadConfig(BaseModel):
    """Algorithm hyperparameters; defaults are the standard LP settings."""

    population_size: int = 1024
    batch_size: int = 64
    neighbors: int = 16
    epochs: int = 1000
    learning_rate: float = 0.05
    gamma_sq: float = 0.1
    logit_clip_eps: float = 1e-6
    transform_enabled: bool = True
    knn_space: KnnSpace = KnnSpace.TRANSFORMED
    init_low: float | None = None
    init_high: float | None = None

    @field_validator("population_size")
    @classmethod
    def validate_population_size(cls, value: int) -> int:
        if value < 1:
            raise ValueError("squad.population_size must be at least 1")
        return value

    @field_validator("epochs")
    @classmethod
    def validate_epochs(cls, value: int) -> int:
        if value < 0:
            raise ValueError("squad.epochs must be non-negative")
        return value

    @field_validator("learning_rate", "gamma_sq")
    @classmethod
    def validate_strictly_positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("must be positive")
        return value

    @field_validator("logit_clip_eps")
    @classmethod
    def validate_logit_clip_eps(cls, value: float) -> float:
        if not 0 < value < 0.5:
            raise ValueError("squad.logit_clip_eps must lie in (0, 0.5)")
        return value

    @model_validator(mode="after")
    def validate_sizes(self) -> SquadConfig:
        if not 1 <= self.batch_size <= self.population_size:
            raise ValueError("squad.batch_size must lie in [1, population_size]")
        if not 0 <= self.neighbors <= self.population_size - 1:
            raise ValueError("squad.neighbors must lie in [0, population_size - 1]")
        if (self.init_low is None) != (self.init_high is None):
            raise ValueError("squad.init_low and squad.init_high must be set together")
        if self.init_low is not None and self.init_high is not None:
            if self.init_low > self.init_high:
                raise ValueError("squad.init_low must not exceed squad.init_high")
        return self


class MapElitesConfig(BaseModel):
    archive_cells: int = 10_000
    batch: int = 64
    # None means 1% of the domain's solution box width.
    sigma_iso: float | None = None
    sigma_line: float = 0.2
    # None means budget parity with the matching SQUAD run, N * (T + 1).
    total_evals: int | None = None
    grad_step: float = 0.05

    @field_validator("archive_cells", "batch")
    @classmethod
    def validate_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("sigma_line", "grad_step")
    @classmethod
    def validate_non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("must be non-negative")
        return value

    @field_validator("sigma_iso")
    @classmethod
    def validate_sigma_iso(cls, value: float | None) -> float | None:
        if value is not None and value < 0:
            raise ValueError("map_elites.sigma_iso must be non-negative")
        return value

    @model_validator(mode="after")
    def validate_budget(self) -> MapElitesConfig:
        if self.total_evals is not None and self.total_evals < self.batch:
            raise ValueError("map_elites.total_evals must be at least map_elites.batch")
        return self


class ChecksConfig(BaseModel):
    seed: int = 0
    sandwich_trials: int = 100
    monotone_add_trials: int = 200
    monotone_quality_trials: int = 200
    submodular_trials: int = 500
    limit_trials: int = 20
    bonferroni_trials: int = 1000
    lower_bound_trials: int = 100
    mc_samples: int = 4096
    grid_points: int = 512

    @field_validator("*")
    @classmethod
    def validate_non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("check counts must be non-negative")
        return value


class RunConfig(BaseModel):
    runtime: RuntimeConfig
    experiment: ExperimentConfig
    domain_options: dict[str, Any] = Field(default_factory=dict)
    squad: SquadConfig = Field(default_factory=SquadConfig)
    map_elites: MapElitesConfig = Field(default_factory=MapElitesConfig)
    checks: ChecksConfig = Field(default_factory=ChecksConfig)

    def with_overrides(self, **sections: dict[str, Any]) -> RunConfig:
        """Return a re-validated copy with the given per-section field overrides."""
        payload = self.model_dump(mode="python")
        for section, values in sections.items():
            payload[section] = {**payload[section], **values}
        return RunConfig.model_validate(payload)
