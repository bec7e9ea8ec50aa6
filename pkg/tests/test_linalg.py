import numpy as np
import pytest
import scipy.linalg

from softqd.core.errors import NumericalError, RejectedInputError
from softqd.engine.linalg import jacobi_eigh


def test_jacobi_matches_lapack_on_random_symmetric_matrices() -> None:
    rng = np.random.default_rng(8)
    for size in (1, 2, 5, 20):
        raw = rng.normal(size=(size, size))
        matrix = raw + raw.T
        values, vectors = jacobi_eigh(matrix)
        assert values == pytest.approx(scipy.linalg.eigh(matrix, eigvals_only=True), abs=1e-9)
        assert np.allclose(matrix @ vectors, vectors * values, atol=1e-9)
        assert np.allclose(vectors.T @ vectors, np.eye(size), atol=1e-9)


def test_jacobi_sorts_ascending() -> None:
    values, _ = jacobi_eigh(np.diag([3.0, -1.0, 2.0]))
    assert values.tolist() == [-1.0, 2.0, 3.0]


def test_jacobi_rejects_non_symmetric_input() -> None:
    with pytest.raises(RejectedInputError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(RejectedInputError):
        jacobi_eigh(np.zeros((2, 3)))


def test_jacobi_reports_non_convergence() -> None:
    raw = np.random.default_rng(9).normal(size=(12, 12))
    with pytest.raises(NumericalError):
        jacobi_eigh(raw + raw.T, max_sweeps=1)
