import numpy as np
import pytest
import scipy.sparse as sp

from mechanochem.errors import FactorizationError
from mechanochem.linalg import LuFactor, SaddleSystem, lu_solve


def test_identity_solve():
    b = np.array([3.0, -1.0, 2.5, 0.0, 7.0])
    x = lu_solve(sp.identity(5, format="csr"), b)
    assert np.array_equal(x, b)


def test_two_by_two_hand_solve():
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    x = lu_solve(A, np.array([3.0, 4.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-14)


def test_tridiagonal_hand_solve():
    A = sp.diags([-np.ones(3), 2 * np.ones(4), -np.ones(3)], [-1, 0, 1], format="csr")
    x = lu_solve(A, np.ones(4))
    assert np.allclose(x, [2.0, 3.0, 3.0, 2.0], atol=1e-12)


def test_residual_contract():
    rng = np.random.default_rng(5)
    n = 200
    A = sp.random(n, n, density=0.05, random_state=np.random.RandomState(1), format="csr")
    A = A + sp.diags(np.full(n, 4.0))
    b = rng.normal(size=n)
    x = lu_solve(A, b)
    res = np.max(np.abs(A @ x - b))
    bound = 1e-10 * (np.max(np.abs(A).sum(axis=1)) * np.max(np.abs(x)) + np.max(np.abs(b)))
    assert res <= bound


def test_singular_matrix_rejected():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(FactorizationError):
        lu_solve(A, np.ones(2))


def test_factorization_reuse_is_deterministic():
    rng = np.random.default_rng(9)
    A = sp.random(50, 50, density=0.1, random_state=np.random.RandomState(2),
                  format="csr") + sp.diags(np.full(50, 3.0))
    lu = LuFactor(A)
    b = rng.normal(size=50)
    x1 = lu.solve(b)
    x2 = lu.solve(b.copy())
    assert np.array_equal(x1, x2)
    x3 = LuFactor(A).solve(b)
    assert np.array_equal(x1, x3)


def _stokes_like_blocks(n=6):
    rng = np.random.RandomState(4)
    A = sp.random(n, n, density=0.4, random_state=rng, format="csr")
    A = A @ A.T + sp.identity(n) * n
    B = sp.csr_matrix(np.random.default_rng(8).normal(size=(2, n)))
    C = sp.identity(2, format="csr") * 0.1
    return A, B, C


def test_saddle_zero_load():
    A, B, C = _stokes_like_blocks()
    sys_ = SaddleSystem(A, B, C)
    u, p = sys_.solve(np.zeros(A.shape[0]))
    assert np.allclose(u, 0.0) and np.allclose(p, 0.0)


def test_saddle_incompressible_limit_enforces_divergence():
    A, B, _ = _stokes_like_blocks()
    sys_ = SaddleSystem(A, B, None)  # C = 0
    F = np.arange(1.0, A.shape[0] + 1.0)
    u, p = sys_.solve(F)
    assert np.max(np.abs(B @ u)) < 1e-9 * max(1.0, np.max(np.abs(u)))


def test_saddle_block_residuals():
    A, B, C = _stokes_like_blocks()
    sys_ = SaddleSystem(A, B, C)
    F = np.random.default_rng(3).normal(size=A.shape[0])
    u, p = sys_.solve(F)
    r1 = A @ u + B.T @ p - F
    r2 = B @ u - C @ p
    scale = max(np.max(np.abs(F)), 1.0)
    assert np.max(np.abs(r1)) < 1e-9 * scale
    assert np.max(np.abs(r2)) < 1e-9 * scale


def test_saddle_fully_unconstrained_is_singular():
    # zero A block and zero C: the system has a nullspace
    n = 4
    A = sp.csr_matrix((n, n))
    B = sp.csr_matrix((2, n))
    with pytest.raises(FactorizationError):
        SaddleSystem(A, B, None)
