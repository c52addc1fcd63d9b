"""Pytest configuration and shared fixtures."""

import pytest
from app.linalg.matrix import IntMatrix, block_diag, parse_matrix


@pytest.fixture
def cat() -> IntMatrix:
    """Arnold cat map [[2,1],[1,1]] (symmetric, so it is its own Fourier-side matrix)."""
    return parse_matrix("2,1;1,1")


@pytest.fixture
def shear() -> IntMatrix:
    """Shear [[1,1],[0,1]], nonergodic and nondiagonalizable."""
    return parse_matrix("1,1;0,1")


@pytest.fixture
def identity2() -> IntMatrix:
    """2×2 identity."""
    return IntMatrix.identity(2)


@pytest.fixture
def plastic() -> IntMatrix:
    """Companion matrix of x³ - x - 1."""
    return parse_matrix("0,1,0;0,0,1;1,1,0")


@pytest.fixture
def rotation() -> IntMatrix:
    """Quarter turn [[0,-1],[1,0]], a finite-order map."""
    return parse_matrix("0,-1;1,0")


@pytest.fixture
def cat_with_fixed_axis(cat: IntMatrix) -> IntMatrix:
    """blockdiag(cat, [1]): positive entropy but not ergodic."""
    return block_diag(cat, IntMatrix.identity(1))


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep a developer's TORUSLAB_* environment out of the tests."""
    import os

    for name in list(os.environ):
        if name.startswith("TORUSLAB_"):
            monkeypatch.delenv(name)
