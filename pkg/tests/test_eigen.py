import numpy as np
import pytest
from scipy.linalg import eigh

from henon.eigen import TridiagonalPencil


def _dense(diag, off):
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def test_standard_problem_matches_dense(rng):
    n = 60
    a, e = rng.normal(size=n), rng.normal(size=n - 1)
    ref = np.linalg.eigvalsh(_dense(a, e))
    pencil = TridiagonalPencil(a, e)
    for i in range(4):
        assert pencil.eigenvalue(i) == pytest.approx(ref[i], abs=1e-10)
    assert pencil.count_below(ref[3] + 1e-9) == 4


def test_generalized_problem_matches_dense(rng):
    n = 50
    a, e = rng.normal(size=n) + 4, rng.normal(size=n - 1)
    b, f = 2 + rng.random(n), 0.3 * rng.random(n - 1)
    ref = eigh(_dense(a, e), _dense(b, f), eigvals_only=True)
    pencil = TridiagonalPencil(a, e, b, f)
    lam, vec = pencil.eigenpair(0)
    assert lam == pytest.approx(ref[0], abs=1e-10)
    resid = _dense(a, e) @ vec - lam * _dense(b, f) @ vec
    assert np.max(np.abs(resid)) <= 1e-8 * np.max(np.abs(vec))
    assert pencil.eigenvalue(1) == pytest.approx(ref[1], abs=1e-10)


def test_laplacian_eigenvalues():
    n = 200
    h = 1.0 / n
    pencil = TridiagonalPencil(np.full(n - 1, 2 / h**2), np.full(n - 2, -1 / h**2))
    exact = 4 / h**2 * np.sin(np.pi * h / 2) ** 2
    assert pencil.eigenvalue(0) == pytest.approx(exact, rel=1e-12)
