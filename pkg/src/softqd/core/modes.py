from __future__ import annotations

from enum import Enum


class Algorithm(str, Enum):
    SQUAD = "squad"
    MAP_ELITES = "map_elites"
    GA_ME = "ga_me"


class ScoreMethod(str, Enum):
    MONTE_CARLO = "monte_carlo"
    GRID_QUADRATURE = "grid_quadrature"


class KnnSpace(str, Enum):
    """Descriptor space used for SQUAD neighbor search."""

    TRANSFORMED = "transformed"
    RAW = "raw"


class DescriptorFormula(str, Enum):
    CHUNK_MEAN = "chunk_mean"
    SCALED_SUM = "scaled_sum"


class Eigensolver(str, Enum):
    LAPACK = "lapack"
    JACOBI = "jacobi"
