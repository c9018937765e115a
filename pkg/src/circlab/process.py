"""Half-integer growth process, its linear-algebra invariants and the drift walk.

At integer time t the matrix is the t x t top-left block of one fixed n x n
draw; going to t + 1/2 appends a column (t x (t+1)), going on to t + 1 appends
a row. Times are stored doubled so that they stay integers.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .ensemble import ShiftSpec, XiSpec, sample_matrix, shift_and_scale
from .linalg import ContractViolation, as_matrix, right_singular_basis, svd
from .potential import DeltaSchedule, TruncationIndices, truncated_potential
from .quasirandom import CertificateConfig, certify

TRACE_CSV_FIELDS = ("t", "r", "h_star", "accepted", "eligible", "step_kind", "delta_used",
                    "T_before", "T_after", "sigma_new", "certificates")
WALK_CSV_FIELDS = ("seed", "T", "q", "adversary", "trials", "p_zero", "bound", "mean_Z_T",
                   "max_mean_Z", "pass")

REPLAY_TOL = 1e-10


def h_star(h: float) -> float:
    return 0.0 if h == 0.5 else h


@dataclass(frozen=True)
class ProcessConfig:
    n: int
    eps: float
    d: float
    xi: XiSpec
    z: complex
    seed: int
    C_sched: float = 1.0
    certify: bool = False
    cert_divisor: int = 8
    walk_divisor: int = 16
    beta: float | None = None
    strict: bool = True

    @property
    def p(self) -> float:
        return self.d / self.n

    @property
    def in_regime(self) -> bool:
        """d^{-1/2} <= |z| <= d^{1/2}."""
        return self.d ** -0.5 <= abs(self.z) <= self.d ** 0.5


@dataclass
class ProcessState:
    t2: int  # twice the time
    r: int
    T_current: float

    @property
    def t(self) -> float:
        return self.t2 / 2

    @property
    def shape(self) -> tuple[int, int]:
        k = self.t2 // 2
        return (k, k) if self.t2 % 2 == 0 else (k, k + 1)

    @property
    def h(self) -> float:
        return self.t - self.r

    @property
    def h_star(self) -> float:
        return h_star(self.h)


@dataclass(frozen=True)
class StepRecord:
    t: float
    r: int
    h_star: float
    accepted: bool
    eligible: bool
    step_kind: str
    delta_used: float
    T_before: float
    T_after: float
    sigma_new: float
    certificates: str = ""


@dataclass
class ProcessTrace:
    config: ProcessConfig
    r_start: int
    T_start: float
    records: list[StepRecord] = field(default_factory=list)
    U_n: float = math.nan
    schedule: DeltaSchedule | None = None

    @property
    def h_final(self) -> float:
        if not self.records:
            return self.config.n - self.r_start
        return self.records[-1].t - self.records[-1].r

    @property
    def delta_sum(self) -> float:
        return float(sum(rec.delta_used for rec in self.records if rec.accepted))

    @property
    def chain_slack(self) -> float:
        """T_n + sum of accepted deltas - U_n."""
        return self.T_start + self.delta_sum - self.U_n

    def acceptance_rate(self) -> float:
        """Accepted fraction of eligible steps (r < ceil(t)); nan if none were eligible."""
        eligible = [rec for rec in self.records if rec.eligible]
        if not eligible:
            return math.nan
        return sum(rec.accepted for rec in eligible) / len(eligible)

    def summary(self) -> dict:
        c = self.config
        return {"n": c.n, "eps": c.eps, "d": c.d, "z_re": complex(c.z).real,
                "z_im": complex(c.z).imag, "seed": c.seed, "xi": c.xi.to_config(),
                "in_regime": c.in_regime, "r_start": self.r_start, "h_final": self.h_final,
                "U_n": self.U_n, "T_n": self.T_start, "delta_sum": self.delta_sum,
                "chain_slack": self.chain_slack, "acceptance_rate": self.acceptance_rate()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_CSV_FIELDS) + "\n")
        for rec in self.records:
            row = asdict(rec)
            row["accepted"] = int(rec.accepted)
            row["eligible"] = int(rec.eligible)
            buf.write(",".join(_fmt(row[k]) for k in TRACE_CSV_FIELDS) + "\n")
        buf.write("# summary " + json.dumps(self.summary(), sort_keys=True, default=_json_num) + "\n")
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_num(v):
    return repr(v)


def _top_sum(values: np.ndarray, r: int, n: int) -> float:
    return truncated_potential(values, r, n)


class ProcessRunner:
    """Drives one process instance; ``step`` advances by half a unit."""

    def __init__(self, config: ProcessConfig, schedule: DeltaSchedule | None = None):
        c = config
        if c.z == 0:
            raise ContractViolation("z must be nonzero")
        self.config = c
        self.schedule = schedule or DeltaSchedule.build(c.n, c.d, c.C_sched)
        if self.schedule.n != c.n:
            raise ContractViolation("schedule length differs from n")
        self.sample = sample_matrix(c.n, c.n, c.p, c.xi, c.seed, strict=c.strict)
        self.dense = self.sample.to_dense()
        self.shift = ShiftSpec(c.z, "rescaled", c.d)
        idx = TruncationIndices.of(c.n, c.eps)
        self.indices = idx
        start = self.spectrum(2 * idx.m)
        self.state = ProcessState(2 * idx.m, idx.keep, _top_sum(start, idx.keep, c.n))
        self.cert_config = None
        if c.certify:
            if c.beta is None:
                raise ContractViolation("certify needs beta")
            self.cert_config = CertificateConfig(beta=c.beta, seed=c.seed)

    def block(self, t2: int) -> np.ndarray:
        k = t2 // 2
        cols = k if t2 % 2 == 0 else k + 1
        return self.dense[:k, :cols]

    def spectrum(self, t2: int) -> np.ndarray:
        return svd(shift_and_scale(self.block(t2), self.shift), seed=self.config.seed).values

    def _certificates(self, state: ProcessState) -> str:
        # Logged only; acceptance never looks at them.
        c = self.config
        threshold = state.t - math.floor((c.n - state.t) / c.cert_divisor)
        if self.cert_config is None or state.r + 1 > threshold:
            return ""
        A = self.block(state.t2)
        if state.t2 % 2 == 0:
            A = A.conj().T
        rep = certify(A, state.t, state.r + 1, self.cert_config, n=c.n, d=c.d)
        return ";".join(f"{k}={v.verdict}" for k, v in rep.events.items())

    def step(self) -> StepRecord:
        s = self.state
        c = self.config
        if s.t2 >= 2 * c.n:
            raise ContractViolation("process already reached t = n")
        certs = self._certificates(s)
        new_t2 = s.t2 + 1
        values = self.spectrum(new_t2)
        eligible = s.r < math.ceil(s.t)
        if eligible:
            delta = self.schedule.delta(s.r + 1)
            T_candidate = _top_sum(values, s.r + 1, c.n)
            accepted = bool(T_candidate <= s.T_current + delta)
        else:
            delta, accepted = math.nan, False
        if accepted:
            r_new, T_new = s.r + 1, T_candidate
        else:
            r_new, T_new = s.r, _top_sum(values, s.r, c.n)
        sigma_new = float(values[r_new - 1]) if 0 < r_new <= len(values) else 0.0
        rec = StepRecord(new_t2 / 2, r_new, h_star(new_t2 / 2 - r_new), accepted, eligible,
                         "col" if s.t2 % 2 == 0 else "row",
                         delta,
                         s.T_current, T_new, sigma_new, certs)
        self.state = ProcessState(new_t2, r_new, T_new)
        return rec

    def run(self) -> ProcessTrace:
        trace = ProcessTrace(self.config, self.state.r, self.state.T_current,
                             schedule=self.schedule)
        while self.state.t2 < 2 * self.config.n:
            trace.records.append(self.step())
        full = self.spectrum(2 * self.config.n)
        trace.U_n = truncated_potential(full, self.config.n, self.config.n)
        return trace


def run_process(config: ProcessConfig, schedule: DeltaSchedule | None = None) -> ProcessTrace:
    return ProcessRunner(config, schedule).run()


@dataclass(frozen=True)
class ChainReplay:
    ok: bool
    slack: float
    worst_step_violation: float
    applicable: bool


def replay_chain(trace: ProcessTrace, tol: float = REPLAY_TOL) -> ChainReplay:
    """Re-check every recorded inequality and the chained bound U_n <= T_n + sum delta.

    Accepted steps must satisfy T_after <= T_before + delta; the others
    T_after <= T_before (interlacing). Only meaningful when h(n) = 0.
    """
    worst = -math.inf
    T = trace.T_start
    for rec in trace.records:
        if rec.T_before != T:
            worst = max(worst, abs(rec.T_before - T))
        bound = rec.T_before + (rec.delta_used if rec.accepted else 0.0)
        if math.isfinite(rec.T_after) and math.isfinite(bound):
            worst = max(worst, rec.T_after - bound)
        elif rec.T_after > bound:
            worst = math.inf
        T = rec.T_after
    applicable = trace.h_final == 0
    slack = trace.chain_slack
    ok = worst <= tol * max(1.0, abs(trace.T_start))
    if applicable:
        ok = ok and abs(T - trace.U_n) <= tol * max(1.0, abs(T)) and slack >= -1e-9
    return ChainReplay(bool(ok), slack, worst, applicable)


def _padded_singular_values(M: np.ndarray, length: int) -> np.ndarray:
    s = np.linalg.svd(M, compute_uv=False)
    out = np.zeros(length)
    out[: min(len(s), length)] = s[:length]
    return out


def interlacing_check(M, M_plus) -> float:
    """Worst signed violation of sigma_i(M) <= sigma_i(M') <= sigma_{i-1}(M).

    ``M_plus`` is ``M`` with one appended row (or one appended column, which
    is handled by transposing). The result is relative to sigma_1(M'); values
    <= 0 mean the interlacing holds.
    """
    M, Mp = as_matrix(M, name="M"), as_matrix(M_plus, name="M_plus")
    if Mp.shape == (M.shape[0], M.shape[1] + 1):
        M, Mp = M.T, Mp.T
    if Mp.shape != (M.shape[0] + 1, M.shape[1]):
        raise ContractViolation(f"{Mp.shape} is not {M.shape} plus one row or column")
    if not np.array_equal(Mp[: M.shape[0]], M):
        raise ContractViolation("M_plus does not extend M")
    m = M.shape[1]
    s = _padded_singular_values(M, m)
    sp = _padded_singular_values(Mp, m)
    scale = max(sp[0], 1e-300)
    lower = s - sp
    upper = sp[1:] - s[:-1]
    worst = float(np.max(lower))
    if len(upper):
        worst = max(worst, float(np.max(upper)))
    return worst / scale


@dataclass(frozen=True)
class WalkRowBound:
    lhs: float
    rhs: float
    margin: float
    ok: bool


def walk_row_bound_check(M, X, r: int) -> WalkRowBound:
    """prod_{i<=r+1} sigma_i(M') >= ||P X^H|| prod_{i<=r} sigma_i(M) for M' = [M; X].

    P projects onto the m - r smallest right-singular directions of M.
    """
    M = as_matrix(M, name="M")
    rows, m = M.shape
    X = np.asarray(X, dtype=np.complex128)
    if X.shape != (m,):
        raise ContractViolation(f"row has shape {X.shape}, expected ({m},)")
    if not 0 <= r < m:
        raise ContractViolation(f"need 0 <= r < m = {m}")
    s, V = right_singular_basis(M)
    proj = float(np.linalg.norm(V[:, r:].conj().T @ np.conj(X)))
    Mp = np.vstack([M, X[None, :]])
    sp = _padded_singular_values(Mp, m)
    lhs = float(np.prod(sp[: r + 1]))
    rhs = proj * float(np.prod(s[:r]))
    # Roundoff floor for rank-deficient products.
    floor = 1e-12 * max(sp[0], 1.0) ** (r + 1)
    return WalkRowBound(lhs, rhs, lhs - rhs, lhs >= rhs - 1e-9 * rhs - floor)


Adversary = Callable[[int, np.ndarray, np.random.Generator], np.ndarray]


def _always_up(s, y2, rng):
    return np.full_like(y2, 2)


def _stay(s, y2, rng):
    return np.zeros_like(y2)


def _random(s, y2, rng):
    return rng.integers(-2, 3, size=y2.shape)


ADVERSARIES: dict[str, Adversary] = {"always-up": _always_up, "random": _random, "stay": _stay}


@dataclass(frozen=True)
class WalkResult:
    T: int
    q: float
    adversary: str
    trials: int
    p_zero: float
    bound: float
    mean_Z_T: float
    se_Z_T: float
    max_mean_Z: float
    seed: int

    @property
    def passed(self) -> bool:
        return self.p_zero >= self.bound

    def csv_row(self) -> dict:
        return {"seed": self.seed, "T": self.T, "q": self.q, "adversary": self.adversary,
                "trials": self.trials, "p_zero": self.p_zero, "bound": self.bound,
                "mean_Z_T": self.mean_Z_T, "max_mean_Z": self.max_mean_Z,
                "pass": int(self.passed)}


def _log_mean(log_values: np.ndarray) -> float:
    return float(logsumexp(log_values) - math.log(len(log_values)))


def simulate_drift_walk(T: int, q: float, *, Y0: float | None = None,
                        adversary: str | Adversary = "always-up", trials: int = 100_000,
                        seed: int = 0, divisor: int = 16) -> WalkResult:
    """Walks on (1/2)Z>=0 that step down by 1/2 with probability 1 - q whenever
    Y_s >= floor((T - s)/divisor), the adversary moving otherwise.

    Reports P(Y_T = 0) against 1 - 4 q^{1/8} and the empirical means of
    Z_s = q^{(T-s)/16} q^{-Y_s/2} (in log space).
    """
    if not 0 <= q < 1:
        raise ContractViolation("q must lie in [0, 1)")
    if Y0 is None:
        Y0 = math.floor(T / 4) / 2
    if not 0 <= Y0 <= T / 8 or (2 * Y0) != int(2 * Y0):
        raise ContractViolation("Y0 must be a half-integer in [0, T/8]")
    name = adversary if isinstance(adversary, str) else getattr(adversary, "__name__", "custom")
    policy = ADVERSARIES[adversary] if isinstance(adversary, str) else adversary
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    y2 = np.full(trials, int(2 * Y0), dtype=np.int64)
    logq = math.log(q) if q > 0 else -math.inf

    def log_z(s, y2):
        return ((T - s) / 16 - y2 / 4) * logq

    max_mean = _log_mean(log_z(0, y2)) if q > 0 else math.nan
    for s in range(T):
        thr2 = 2 * math.floor((T - s) / divisor)
        active = y2 >= thr2
        good = active & (rng.random(trials) >= q)
        move = np.asarray(policy(s, y2, rng), dtype=np.int64)
        if move.shape != y2.shape or np.any(move > 2):
            raise ContractViolation("adversary moved by more than +1")
        y2 = np.where(good, np.maximum(y2 - 1, 0), np.maximum(y2 + move, 0))
        if q > 0:
            max_mean = max(max_mean, _log_mean(log_z(s + 1, y2)))
    p_zero = float(np.mean(y2 == 0))
    if q > 0:
        z_T = np.exp(np.minimum(log_z(T, y2), 700.0))
        mean_z, se_z = float(np.mean(z_T)), float(np.std(z_T) / math.sqrt(trials))
        max_mean = math.exp(min(max_mean, 700.0))
    else:
        mean_z = se_z = math.nan
    return WalkResult(T, q, name, trials, p_zero, 1 - 4 * q ** 0.125, mean_z, se_z, max_mean,
                      seed)
