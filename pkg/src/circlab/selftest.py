"""Quick closed-form and hand-traced example checks plus one small run per experiment."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Callable

import numpy as np

from .anticonc import DiscreteLaw, flat_basis, levy_estimate, lkr_check
from .config import parse_config
from .ensemble import XiSpec, beta_of_xi, sample_matrix
from .lawcheck import circular_cdf, esd_summary, ginibre_reference
from .linalg import ContractViolation, eigenvalues, golub_kahan_singular_values
from .potential import DeltaSchedule, delta_r, log_potential, u_circ
from .process import (ProcessConfig, interlacing_check, run_process, simulate_drift_walk,
                      walk_row_bound_check)
from .quasirandom import (CertificateConfig, alpha, check_event_B, check_event_Q,
                          check_event_R, g_and_tau, lambda_count, unique_neighborhood)
from .runner import manifest_exit_code, run_experiment

RAD = XiSpec("rademacher")


def _close(a, b, tol=1e-12) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(b))


def _gk_matches():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((7, 5)) + 1j * rng.standard_normal((7, 5))
    err = float(np.max(np.abs(golub_kahan_singular_values(M) - np.linalg.svd(M, compute_uv=False))))
    return err < 1e-12, err


def _eig_nonsquare():
    try:
        eigenvalues(np.zeros((2, 3)))
    except ContractViolation:
        return True, "raised"
    return False, "no error"


def _submatrix_consistency():
    big = sample_matrix(40, 40, 0.1, RAD, 5)
    small = sample_matrix(25, 30, 0.1, RAD, 5)
    return bool(np.array_equal(big.submatrix(25, 30), small.to_dense())), small.nnz


def _fact81():
    from .ensemble import ShiftSpec, shift_and_scale
    from .potential import TruncationIndices, potential_report
    from .linalg import svd
    n, d, eps = 60, 10.0, 0.1
    A = sample_matrix(n, n, d / n, RAD, 3).to_dense()
    m = TruncationIndices.of(n, eps).m
    worst = math.inf
    for z in (0.5, 1.0, 3.0):
        sh = ShiftSpec(z, d=d)
        rep = potential_report(svd(shift_and_scale(A, sh)).values,
                               svd(shift_and_scale(A[:m, :m], sh)).values,
                               n=n, eps=eps, z=z, d=d, seed=3)
        worst = min(worst, *rep.sandwich_slacks())
    return worst >= -1e-9, worst


def _planted_q():
    A = np.zeros((10, 10), dtype=complex)
    A[0, 0] = 10.0**4
    return check_event_Q(A, 10, CertificateConfig(beta=0.5), n=10, d=3).verdict == "fail", "max"


def _flat_dft():
    n = 16
    F = np.fft.fft(np.eye(n)) / math.sqrt(n)
    fb = flat_basis(F, 0.25)
    return fb.ok and fb.strategy == "input", fb.achieved_flatness


def _sentinel(value, expect_h):
    cfg = ProcessConfig(40, 0.2, 8.0, RAD, 1.0, 11)
    tr = run_process(cfg, DeltaSchedule.constant(40, value))
    return tr.h_final == expect_h, tr.h_final


def _zero_esd():
    s = esd_summary(np.zeros((20, 20)), 4.0)
    return s.disk_mass == 1.0, s.discrepancy


def _ginibre_tau0():
    g = ginibre_reference(100, 1.0, [0])
    return g.tau(0) < 0.05 and bool(np.all(np.diff(g.quantile(np.linspace(0, 1, 11))) >= 0)), g.tau(0)


CHECKS: list[tuple[str, Callable[[], tuple]]] = [
    ("linalg.golub_kahan_matches_lapack", _gk_matches),
    ("linalg.eigenvalues_nonsquare_rejected", _eig_nonsquare),
    ("ensemble.submatrix_consistency", _submatrix_consistency),
    ("ensemble.beta_rademacher", lambda: (beta_of_xi(RAD) == 0.5, beta_of_xi(RAD))),
    ("potential.u_circ_branches",
     lambda: (u_circ(0) == 0.5 and u_circ(1) == 0 and _close(u_circ(2), -math.log(2)), u_circ(2))),
    ("potential.delta_high_regime",
     lambda: (_close(delta_r(1000, 100, 999), math.log(100) ** 8 * math.log(500) ** 8 / 1000),
              delta_r(1000, 100, 999))),
    ("potential.delta_low_regime",
     lambda: (_close(delta_r(1000, 100, 1), math.log(1000 / 1000) ** 2 / 1000), delta_r(1000, 100, 1))),
    ("potential.log_potential_pair",
     lambda: (_close(log_potential([4, 3], 2), -(math.log(4) + math.log(3)) / 2),
              log_potential([4, 3], 2))),
    ("potential.fact81_sandwich", _fact81),
    ("quasirandom.identity_U_empty",
     lambda: (unique_neighborhood(np.eye(3), [0], 0.5) == frozenset(), "empty")),
    ("quasirandom.zero_column_U",
     lambda: (unique_neighborhood(np.array([[0, 1], [0, 1.0]]), [0], 0.5) == frozenset({0}), "{0}")),
    ("quasirandom.alpha_n_over_e", lambda: (_close(alpha(100, 100 / math.e), 1.0), alpha(100, 100 / math.e))),
    ("quasirandom.alpha_n_over_e2",
     lambda: (_close(alpha(100, 100 / math.e**2), 0.25), alpha(100, 100 / math.e**2))),
    ("quasirandom.tau_trivial",
     lambda: (g_and_tau(1000, 50, 900, CertificateConfig(beta=0.5)).tau == 0, 0)),
    ("quasirandom.B_zero_matrix",
     lambda: (check_event_B(np.zeros((8, 8)), 8, CertificateConfig(beta=0.5), n=8, d=3).ok, "pass")),
    ("quasirandom.Q_planted_giant", _planted_q),
    ("quasirandom.R_zero_matrix",
     lambda: (check_event_R(np.zeros((8, 8)), 8, CertificateConfig(beta=0.5), n=8, d=3).ok, "pass")),
    ("quasirandom.lambda_example", lambda: (lambda_count([3, 1, 0.5], 1) == 2, 2)),
    ("anticonc.levy_constant",
     lambda: (levy_estimate(lambda r, s: np.full(s, 2.0), 0.3).estimate == 1.0, 1.0)),
    ("anticonc.levy_bernoulli_half",
     lambda: (abs(levy_estimate(lambda r, s: (r.random(s) < 0.5) * 1.0, 0.4).estimate - 0.5) < 0.02,
              levy_estimate(lambda r, s: (r.random(s) < 0.5) * 1.0, 0.4).estimate)),
    ("anticonc.lkr_single_rademacher",
     lambda: (_close(lkr_check([DiscreteLaw.from_xi(RAD)], [0.5], 0.5).C_achieved,
                     0.5 / math.sqrt(2), 1e-9),
              lkr_check([DiscreteLaw.from_xi(RAD)], [0.5], 0.5).C_achieved)),
    ("anticonc.flat_basis_full_dft", _flat_dft),
    ("anticonc.flat_basis_e1",
     lambda: (flat_basis(np.eye(8)[:, :1], 0.25).strategy == "input", "input")),
    ("process.forced_acceptance", lambda: _sentinel(math.inf, 0.0)),
    ("process.forced_rejection", lambda: _sentinel(-math.inf, 40 - 30)),
    ("process.interlacing_diag",
     lambda: (interlacing_check(np.diag([3.0, 1.0]), np.array([[3, 0], [0, 1], [0, 2.0]])) <= 1e-9,
              "ok")),
    ("process.walk_row_hand",
     lambda: (walk_row_bound_check(np.diag([2.0, 1.0]), np.array([0, 3.0]), 1).ok
              and _close(walk_row_bound_check(np.diag([2.0, 1.0]), np.array([0, 3.0]), 1).rhs, 6.0),
              walk_row_bound_check(np.diag([2.0, 1.0]), np.array([0, 3.0]), 1).lhs)),
    ("process.walk_q0", lambda: (simulate_drift_walk(64, 0.0, trials=1000).p_zero == 1.0, 1.0)),
    ("lawcheck.quadrant_quarter", lambda: (_close(circular_cdf(0, 0), 0.25), circular_cdf(0, 0))),
    ("lawcheck.zero_matrix_disk", _zero_esd),
    ("lawcheck.ginibre_tau0", _ginibre_tau0),
]

MINI_RUNS = {
    "law": {"grid": {"n": [120], "d": [12], "eps": [0.1], "z": [1.5], "xi": ["rademacher"]}},
    "potential": {"grid": {"n": [80], "d": [10], "eps": [0.1], "z": [0.5, 2.0],
                           "xi": ["rademacher"]}},
    "process": {"grid": {"n": [60], "d": [12], "eps": [0.2], "z": [1.0], "xi": ["rademacher"]}},
    "certify": {"grid": {"n": [80], "d": [10], "xi": ["rademacher"]}, "trials": 100},
    "anticonc": {"grid": {"n": [60], "d": [10], "eps": [0.1], "z": [1.0], "xi": ["rademacher"]},
                 "trials": 50},
    "walk": {"grid": {"T": [64], "q": [2.0**-16]}, "trials": 2000},
}


def run_selftest(out_dir) -> tuple[bool, list[dict]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, fn in CHECKS:
        try:
            ok, value = fn()
        except Exception as exc:
            ok, value = False, f"{type(exc).__name__}: {exc}"
        rows.append({"check": name, "ok": bool(ok), "value": _fmt(value)})
    for kind, body in MINI_RUNS.items():
        cfg = parse_config({"experiment": kind, "seeds": [0, 1], "output": str(out / kind), **body})
        man = run_experiment(cfg, workers=1)
        rows.append({"check": f"run.{kind}", "ok": manifest_exit_code(man) == 0,
                     "value": man["outputs"][f"{kind}.csv"][:16]})
    lines = ["check,ok,value"] + [f"{r['check']},{int(r['ok'])},{r['value']}" for r in rows]
    (out / "selftest.csv").write_text("\n".join(lines) + "\n")
    return all(r["ok"] for r in rows), rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v).replace(",", ";")
