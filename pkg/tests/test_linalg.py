import numpy as np
import pytest
from hypothesis import given, strategies as st

from circlab.linalg import (ContractViolation, NumericalFailure, as_matrix, eigenvalues,
                            golub_kahan_singular_values, hoffman_wielandt_gap, hs_norm_sq,
                            right_singular_basis, small_singular_projection_norm, svd)
from conftest import random_complex

shapes = st.tuples(st.integers(1, 9), st.integers(1, 9))


@given(shapes, st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.5, 0.9]))
def test_golub_kahan_matches_lapack(shape, seed, sparsity):
    M = random_complex(np.random.default_rng(seed), shape, sparsity)
    ref = np.linalg.svd(M, compute_uv=False)
    got = golub_kahan_singular_values(M)
    assert np.allclose(got, ref, atol=1e-12 * max(1.0, ref[0]))


def test_golub_kahan_rank_deficient():
    M = np.outer([1, 2, 3], [1j, 0, 2]).astype(complex)
    got = golub_kahan_singular_values(M)
    assert got[0] == pytest.approx(np.linalg.norm(M))
    assert np.all(np.abs(got[1:]) < 1e-12)


@given(shapes, st.integers(0, 2**32 - 1))
def test_svd_identities(shape, seed):
    M = random_complex(np.random.default_rng(seed), shape)
    spec = svd(M, want_vectors=True)
    assert np.sum(spec.values**2) == pytest.approx(hs_norm_sq(M), rel=1e-10)
    recon = spec.left @ np.diag(spec.values) @ spec.right.conj().T
    assert np.allclose(recon, M, atol=1e-10)
    assert np.all(np.diff(spec.values) <= 1e-12)
    assert spec.sigma(len(spec) + 3) == 0.0


def test_sigma_is_one_based():
    with pytest.raises(ContractViolation):
        svd(np.eye(2)).sigma(0)


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ContractViolation):
        as_matrix(np.zeros(3))
    with pytest.raises(ContractViolation):
        as_matrix(np.array([[np.nan]]))


def test_svd_empty_rejected():
    with pytest.raises(ContractViolation):
        svd(np.zeros((0, 3)))


def test_numerical_failure_carries_context():
    err = NumericalFailure("boom", (3, 3), 7)
    assert err.shape == (3, 3) and err.seed == 7 and "seed=7" in str(err)


def test_eigenvalues_square_only():
    with pytest.raises(ContractViolation):
        eigenvalues(np.zeros((2, 3)))
    lam = eigenvalues(np.diag([1.0, 2j])).values
    assert sorted(lam, key=abs) == pytest.approx([1.0, 2j])


def test_right_basis_pads_wide_matrices():
    s, V = right_singular_basis(np.array([[3.0, 0, 0], [0, 1.0, 0]]))
    assert s == pytest.approx([3, 1, 0])
    assert np.allclose(V.conj().T @ V, np.eye(3))


def test_small_projection_norm():
    M = np.diag([3.0, 2.0, 1.0])
    x = np.array([1.0, 1.0, 1.0])
    assert small_singular_projection_norm(M, 1, x) == pytest.approx(1.0)
    assert small_singular_projection_norm(M, 2, x) == pytest.approx(np.sqrt(2))
    norm, tie = small_singular_projection_norm(np.eye(3), 1, x, return_tie=True)
    assert tie
    with pytest.raises(ContractViolation):
        small_singular_projection_norm(M, 0, x)


@given(shapes, st.integers(0, 2**32 - 1))
def test_hoffman_wielandt(shape, seed):
    rng = np.random.default_rng(seed)
    A, B = random_complex(rng, shape), random_complex(rng, shape)
    assert hoffman_wielandt_gap(A, B) >= -1e-9 * hs_norm_sq(A - B)
