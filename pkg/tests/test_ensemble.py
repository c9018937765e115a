import numpy as np
import pytest

from circlab.ensemble import (BetaUndefined, ShiftSpec, SparseSample, XiSpec, beta_of_xi,
                              identity_block, sample_col, sample_matrix, sample_row,
                              shift_and_scale)
from circlab.linalg import ContractViolation

RAD = XiSpec("rademacher")


def test_xi_second_moment_enforced():
    with pytest.raises(ContractViolation):
        XiSpec("two-point", a=2.0, b=0.0, prob=0.5)
    XiSpec("two-point", a=2.0, b=0.0, prob=0.25)


def test_unknown_kind():
    with pytest.raises(ContractViolation):
        XiSpec("cauchy")


@pytest.mark.parametrize("kind", ["complex-gaussian", "rademacher", "unit-circle-uniform"])
def test_unit_variance(kind):
    x = XiSpec(kind).draw(200_000, 1)
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, abs=0.02)


def test_submatrix_consistency():
    big = sample_matrix(50, 60, 0.1, RAD, 9)
    for rows, cols in [(10, 10), (20, 21), (50, 30)]:
        assert np.array_equal(big.submatrix(rows, cols),
                              sample_matrix(rows, cols, 0.1, RAD, 9).to_dense())


def test_row_and_col_match_matrix():
    xi = XiSpec("complex-gaussian")
    dense = sample_matrix(30, 30, 0.2, xi, 4).to_dense()
    assert np.array_equal(sample_row(30, 0.2, xi, 4, index=7), dense[7])
    assert np.array_equal(sample_col(30, 0.2, xi, 4, index=11), dense[:, 11])


def test_density():
    s = sample_matrix(400, 400, 0.05, RAD, 1)
    assert s.nnz / 400**2 == pytest.approx(0.05, rel=0.05)
    assert s.d == pytest.approx(20)


def test_p_validation():
    with pytest.raises(ContractViolation):
        sample_matrix(5, 5, 0.7, RAD, 0)
    sample_matrix(5, 5, 0.7, RAD, 0, strict=False)
    with pytest.raises(ContractViolation):
        sample_matrix(5, 5, 1.5, RAD, 0, strict=False)


def test_csv_roundtrip_bitwise():
    s = sample_matrix(20, 25, 0.2, XiSpec("complex-gaussian"), 3)
    back = SparseSample.from_csv(s.to_csv())
    assert back == s
    assert np.array_equal(back.to_dense(), s.to_dense())


def test_beta_values():
    assert beta_of_xi(RAD) == 0.5
    assert beta_of_xi(XiSpec("bernoulli-scaled", q=0.5)) == 0.5
    assert 0.05 <= beta_of_xi(XiSpec("complex-gaussian")) <= 0.95
    with pytest.raises(BetaUndefined):
        beta_of_xi(XiSpec("two-point", a=1.0, b=1.0, prob=1.0))


def test_identity_block_and_shift():
    assert np.array_equal(identity_block(2, 3), np.eye(2, 3))
    with pytest.raises(ContractViolation):
        identity_block(2, 4)
    A = np.ones((2, 3))
    assert np.allclose(shift_and_scale(A, ShiftSpec(2.0, d=4.0)), A / 2 - 2 * np.eye(2, 3))
    assert np.allclose(shift_and_scale(A, ShiftSpec(1.0, "raw")), A - np.eye(2, 3))
    with pytest.raises(ContractViolation):
        ShiftSpec(1.0, "rescaled")
