import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from circlab.ensemble import XiSpec
from circlab.linalg import ContractViolation
from circlab.potential import DeltaSchedule, TruncationIndices
from circlab.process import (ProcessConfig, ProcessRunner, TRACE_CSV_FIELDS, h_star,
                             interlacing_check, replay_chain, run_process, simulate_drift_walk,
                             walk_row_bound_check)

RAD = XiSpec("rademacher")


def cfg(n=40, eps=0.2, d=8.0, z=1.0, seed=11, **kw):
    return ProcessConfig(n, eps, d, RAD, z, seed, **kw)


def test_h_star():
    assert h_star(0.5) == 0.0 and h_star(1.5) == 1.5 and h_star(0) == 0


def test_forced_acceptance_and_rejection():
    up = run_process(cfg(), DeltaSchedule.constant(40, math.inf))
    assert up.h_final == 0 and up.acceptance_rate() == 1.0
    down = run_process(cfg(), DeltaSchedule.constant(40, -math.inf))
    keep = TruncationIndices.of(40, 0.2).keep
    assert down.h_final == 40 - keep
    assert not any(rec.accepted for rec in down.records)


def test_block_shapes_follow_half_steps():
    run = ProcessRunner(cfg())
    assert run.block(20).shape == (10, 10)
    assert run.block(21).shape == (10, 11)
    assert np.array_equal(run.block(21)[:, :10], run.block(20))
    kinds = [rec.step_kind for rec in run.run().records]
    assert kinds[0] == "col" and kinds[1] == "row"


def test_trace_records_are_consistent():
    tr = run_process(cfg(n=60, d=12.0, seed=3))
    m = TruncationIndices.of(60, 0.2).m
    assert len(tr.records) == 2 * (60 - m)
    for prev, rec in zip(tr.records, tr.records[1:]):
        assert rec.T_before == prev.T_after
        assert rec.r - prev.r in (0, 1)
    assert all(rec.h_star >= 0 for rec in tr.records)
    csv = tr.to_csv()
    assert csv.splitlines()[0] == ",".join(TRACE_CSV_FIELDS)
    assert csv.splitlines()[-1].startswith("# summary {")


@pytest.mark.parametrize("seed", range(5))
def test_chain_replay(seed):
    tr = run_process(cfg(seed=seed), DeltaSchedule.constant(40, math.inf))
    rep = replay_chain(tr)
    assert rep.applicable and rep.ok and rep.slack >= -1e-9


def test_chain_replay_detects_tampering():
    tr = run_process(cfg(seed=1))
    rec = tr.records[3]
    tr.records[3] = type(rec)(**{**rec.__dict__, "T_after": rec.T_before + 10.0,
                                 "accepted": False})
    assert not replay_chain(tr).ok


def test_rejected_steps_never_raise_T():
    tr = run_process(cfg(seed=4), DeltaSchedule.constant(40, -math.inf))
    for rec in tr.records:
        assert rec.T_after <= rec.T_before + 1e-12


def test_acceptance_rate_small_case():
    rates = [run_process(ProcessConfig(60, 0.2, 15.0, RAD, 1.0, s)).acceptance_rate()
             for s in range(3)]
    assert min(rates) >= 0.8


def test_zero_z_rejected():
    with pytest.raises(ContractViolation):
        ProcessRunner(cfg(z=0))


def test_interlacing_hand():
    assert interlacing_check(np.diag([3.0, 1.0]), np.array([[3, 0], [0, 1], [0, 2.0]])) <= 1e-12
    M = np.array([[1.0, 2.0]])
    assert interlacing_check(M, np.array([[1.0, 2.0, 5.0]])) <= 1e-12
    with pytest.raises(ContractViolation):
        interlacing_check(M, np.array([[9.0, 2.0], [0, 0]]))


def test_interlacing_random():
    rng = np.random.default_rng(7)
    worst = -math.inf
    for k in range(500):
        a, b = rng.integers(1, 9, size=2)
        M = rng.standard_normal((a, b)) + 1j * rng.standard_normal((a, b))
        M *= rng.random((a, b)) < 0.6
        if k % 2:
            Mp = np.hstack([M, rng.standard_normal((a, 1))])
        else:
            Mp = np.vstack([M, rng.standard_normal((1, b))])
        worst = max(worst, interlacing_check(M, Mp))
    assert worst <= 1e-12


def test_walk_row_hand():
    res = walk_row_bound_check(np.diag([2.0, 1.0]), np.array([0, 3.0]), 1)
    assert res.rhs == pytest.approx(6.0) and res.ok
    # M' = diag(2, 1) plus row (0, 3) has singular values sqrt(10) and 2.
    assert res.lhs == pytest.approx(2 * math.sqrt(10))


@given(st.integers(0, 10**6), st.integers(1, 8), st.integers(2, 8))
def test_walk_row_random(seed, rows, m):
    rng = np.random.default_rng(seed)
    M = (rng.standard_normal((rows, m)) + 1j * rng.standard_normal((rows, m)))
    M *= rng.random((rows, m)) < 0.7
    X = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    for r in range(m):
        assert walk_row_bound_check(M, X, r).ok


def test_walk_row_contract():
    with pytest.raises(ContractViolation):
        walk_row_bound_check(np.eye(2), np.ones(3), 0)
    with pytest.raises(ContractViolation):
        walk_row_bound_check(np.eye(2), np.ones(2), 2)


@pytest.mark.parametrize("adversary", ["always-up", "random", "stay"])
def test_drift_walk_policies(adversary):
    res = simulate_drift_walk(128, 2.0**-20, adversary=adversary, trials=5000, seed=1)
    assert res.passed and res.p_zero >= res.bound


@pytest.mark.parametrize("adversary", ["always-up", "random", "stay"])
def test_drift_walk_exponential_moment(adversary):
    res = simulate_drift_walk(64, 2.0**-8, adversary=adversary, trials=20_000, seed=2)
    assert res.mean_Z_T <= 4 + 3 * res.se_Z_T


def test_drift_walk_q_zero():
    assert simulate_drift_walk(64, 0.0, trials=500).p_zero == 1.0


def test_drift_walk_contracts():
    with pytest.raises(ContractViolation):
        simulate_drift_walk(16, 0.1, adversary=lambda s, y, g: np.full_like(y, 3), trials=10)
    with pytest.raises(ContractViolation):
        simulate_drift_walk(16, 0.1, Y0=5.0, trials=10)
    with pytest.raises(ContractViolation):
        simulate_drift_walk(16, 1.0, trials=10)
