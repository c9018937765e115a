"""Quasi-randomness certificates and spread-vector checks.

The four events are checked on a concrete matrix: unique-neighbourhood
expansion (``U_r``), bounded heavy row/column sums (``B``), few large entries
(``Q``) and few heavy rows (``R``). A failing check always returns a witness
that can be re-verified independently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .linalg import ContractViolation, as_matrix
from .potential import DeltaSchedule

PASS, FAIL, SAMPLED_PASS = "pass", "fail", "sampled-pass"
CERT_CSV_FIELDS = ("seed", "n", "d", "t", "r", "event", "verdict", "witness_size", "trials")


@dataclass(frozen=True)
class CertificateConfig:
    beta: float
    c_star: float = 0.25
    C_prime: float = 8.0
    B_big_O: float = 4.0
    subset_trials: int = 200
    exhaustive_limit: int = 10_000
    tau_K: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("beta", "c_star", "C_prime", "B_big_O", "tau_K"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        if self.subset_trials < 100:
            raise ContractViolation("subset_trials must be at least 100")


@dataclass
class EventResult:
    event: str
    verdict: str
    witness: object = None
    trials: int = 0
    vacuous: bool = False
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.verdict != FAIL

    @property
    def witness_size(self) -> int:
        if self.witness is None:
            return 0
        if isinstance(self.witness, (tuple, list, frozenset, set)):
            return len(self.witness)
        return 1


@dataclass
class CertificateReport:
    events: dict[str, EventResult]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.events.values())

    def csv_rows(self, *, seed, n, d, t, r) -> list[dict]:
        return [{"seed": seed, "n": n, "d": d, "t": t, "r": r, "event": name,
                 "verdict": ev.verdict, "witness_size": ev.witness_size, "trials": ev.trials}
                for name, ev in self.events.items()]


def _ceil_t(t: float) -> int:
    return math.ceil(t)


def alpha(n: int, x: float) -> float:
    if not 0 < x < n:
        raise ContractViolation(f"alpha needs 0 < x < n, got x={x}, n={n}")
    return math.log(n / x) ** -2


def spread_target(n: int, d: float) -> float:
    """(n / (2d)) log log d, the spread the near-kernel vectors must reach."""
    if d <= math.e:
        raise ContractViolation(f"d={d} must exceed e so that log log d > 0")
    return n / (2.0 * d) * math.log(math.log(d))


def unique_neighborhood_parts(B, S, beta: float) -> tuple[frozenset, frozenset]:
    """(U(S) minus S, U(S) intersect S) for the column set S of B.

    Outside S: rows with exactly one nonzero among the S-columns, of modulus
    at least beta. Inside S: rows (indexed like columns) whose S-columns are
    all zero.
    """
    B = as_matrix(B, name="B")
    rows, cols = B.shape
    S = np.asarray(sorted(set(int(j) for j in S)), dtype=np.int64)
    if S.size and (S[0] < 0 or S[-1] >= cols):
        raise ContractViolation("S must be a subset of the column indices")
    sub = B[:, S]
    nz = sub != 0
    count = nz.sum(axis=1)
    in_S = np.zeros(rows, dtype=bool)
    in_S[S[S < rows]] = True
    single = count == 1
    big = np.zeros(rows, dtype=bool)
    if single.any():
        pos = np.argmax(nz[single], axis=1)
        big[single] = np.abs(sub[single, pos]) >= beta
    outside = np.flatnonzero(~in_S & single & big)
    inside = np.flatnonzero(in_S & (count == 0))
    return frozenset(outside.tolist()), frozenset(inside.tolist())


def unique_neighborhood(B, S, beta: float) -> frozenset:
    outside, inside = unique_neighborhood_parts(B, S, beta)
    return outside | inside


def _un_size_fast(nz: np.ndarray, big: np.ndarray, S: np.ndarray, rows: int) -> int:
    # nz, big: boolean masks of the whole matrix; S sorted column indices.
    cnt = nz[:, S].sum(axis=1)
    single_big = (cnt == 1) & (big[:, S].sum(axis=1) == 1)
    in_S = np.zeros(rows, dtype=bool)
    in_S[S[S < rows]] = True
    return int(np.count_nonzero(~in_S & single_big) + np.count_nonzero(in_S & (cnt == 0)))


def g_step(n: int, d: float, x: float, C_prime: float) -> int:
    return math.ceil(d * alpha(n, x) * x / (C_prime * (d + math.log(n / x))))


@dataclass(frozen=True)
class GTau:
    sequence: tuple[int, ...]
    tau: int
    K_achieved: float
    bound_ok: bool


def g_and_tau(n: int, d: float, k: int, config: CertificateConfig) -> GTau:
    """Iterate k_i = k_{i-1} + g(k_{i-1}) past the spread target.

    The returned sequence is k_1..k_tau (empty when k already exceeds the
    target). K_achieved is tau / log(n/k)^4.
    """
    if not 1 <= k < n:
        raise ContractViolation(f"k={k} outside [1, n)")
    target = spread_target(n, d)
    seq = []
    cur = k
    while cur <= target:
        cur = cur + g_step(n, d, cur, config.C_prime)
        seq.append(cur)
    tau = len(seq)
    K = tau / math.log(n / k) ** 4
    return GTau(tuple(seq), tau, K, K <= config.tau_K)


def size_grid(lo: int, hi: int) -> list[int]:
    """Geometric (ratio 2) grid on [lo, hi] including both ends."""
    if lo > hi:
        return []
    out, s = [], max(lo, 1)
    while s < hi:
        out.append(s)
        s *= 2
    out.append(hi)
    return sorted(set(out))


def check_event_U_r(A, t: float, r: int, config: CertificateConfig, *, n: int, d: float,
                    size_range: tuple[int, int] | None = None) -> EventResult:
    """Check |U(S)| >= alpha(|S|) d |S| over the column subsets of A_t.

    Sizes whose subset count is at most ``exhaustive_limit`` are enumerated;
    the rest are sampled on a geometric size grid, each with
    ``subset_trials`` uniform subsets plus the lowest-degree columns.
    """
    B = as_matrix(A, name="A")
    rows, cols = B.shape
    if r < t - n / d**0.25:
        raise ContractViolation(f"r={r} below t - n/d^(1/4) = {t - n / d**0.25:.3f}")
    if size_range is None:
        lo = math.ceil(config.c_star * (_ceil_t(t) - r + 1))
        hi = math.floor(spread_target(n, d))
    else:
        lo, hi = size_range
    hi = min(hi, cols)
    lo = max(lo, 1)
    if lo > hi:
        return EventResult("U_r", PASS, vacuous=True, detail={"lo": lo, "hi": hi})
    nz = B != 0
    big = np.abs(B) >= config.beta
    degree = nz.sum(axis=0)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, int(2 * t), r)))
    trials = 0
    exhaustive_all = True

    def violates(S) -> bool:
        return _un_size_fast(nz, big, S, rows) < alpha(n, len(S)) * d * len(S)

    sampled_sizes = []
    for s in range(lo, hi + 1):
        if math.comb(cols, s) <= config.exhaustive_limit:
            for S in combinations(range(cols), s):
                trials += 1
                S = np.array(S)
                if violates(S):
                    return EventResult("U_r", FAIL, tuple(S.tolist()), trials)
        else:
            exhaustive_all = False
    if not exhaustive_all:
        sampled_sizes = [s for s in size_grid(lo, hi) if math.comb(cols, s) > config.exhaustive_limit]
    for s in sampled_sizes:
        candidates = [np.sort(np.argsort(degree, kind="stable")[:s])]
        candidates += [np.sort(rng.choice(cols, size=s, replace=False))
                       for _ in range(config.subset_trials)]
        for S in candidates:
            trials += 1
            if violates(S):
                return EventResult("U_r", FAIL, tuple(S.tolist()), trials)
    verdict = PASS if exhaustive_all else SAMPLED_PASS
    return EventResult("U_r", verdict, None, trials, detail={"lo": lo, "hi": hi})


def u_r_witness_holds(A, S, *, n: int, d: float, beta: float) -> bool:
    """Re-verify a U_r witness: True when |U(S)| really is below the bound."""
    return len(unique_neighborhood(A, S, beta)) < alpha(n, len(S)) * d * len(S)


def check_event_B(A, t: float, config: CertificateConfig, *, n: int, d: float) -> EventResult:
    """Top-s row (and column) degree means must stay below B_big_O (d + log(n/s))."""
    B = as_matrix(A, name="A")
    nz = B != 0
    for axis, label in ((1, "row"), (0, "col")):
        sums = np.sort(nz.sum(axis=axis))[::-1]
        count = len(sums)
        prefix = np.cumsum(sums)
        for s in size_grid(1, count):
            mean = prefix[s - 1] / s
            bound = config.B_big_O * (d + math.log(n / s))
            if mean > bound:
                witness = tuple(np.argsort(-nz.sum(axis=axis), kind="stable")[:s].tolist())
                return EventResult("B", FAIL, witness, detail={"axis": label, "size": s,
                                                              "mean": float(mean),
                                                              "bound": bound})
    return EventResult("B", PASS)


def check_event_Q(A, t: float, config: CertificateConfig, *, n: int, d: float) -> EventResult:
    """Few entries above 8H/beta for dyadic H in [1, n^4], and max entry <= n^3."""
    B = as_matrix(A, name="A")
    mags = np.sort(np.abs(B[B != 0]))
    if mags.size and mags[-1] > n**3:
        idx = np.unravel_index(np.argmax(np.abs(B)), B.shape)
        return EventResult("Q", FAIL, (int(idx[0]), int(idx[1])), detail={"clause": "max"})
    H = 1.0
    while H <= float(n) ** 4:
        threshold = 8.0 * H / config.beta
        count = mags.size - np.searchsorted(mags, threshold, side="right")
        bound = 2.0 * d * n / H**2 + math.log(n) ** 2
        if count > bound:
            return EventResult("Q", FAIL, int(count), detail={"H": H, "bound": bound})
        H *= 2.0
    return EventResult("Q", PASS)


def check_event_R(A, t: float, config: CertificateConfig, *, n: int, d: float) -> EventResult:
    """For dyadic l <= n/2, rows and columns with absolute sum > L/beta are rare."""
    B = as_matrix(A, name="A")
    absB = np.abs(B)
    sums = {"row": absB.sum(axis=1), "col": absB.sum(axis=0)}
    ell = 1
    checked = 0
    while ell <= n / 2:
        L = (d * n / (config.beta * ell)) ** 5
        bound = alpha(n, ell) * d * ell / 4.0
        for label, s in sums.items():
            heavy = np.flatnonzero(s > L / config.beta)
            if len(heavy) > bound:
                return EventResult("R", FAIL, tuple(heavy.tolist()),
                                   detail={"axis": label, "ell": ell, "bound": bound})
        checked += 1
        ell *= 2
    return EventResult("R", PASS, vacuous=checked == 0)


def certify(A, t: float, r: int, config: CertificateConfig, *, n: int, d: float) -> CertificateReport:
    """All four events; U_r is skipped (vacuous) when r is outside its regime."""
    events = {}
    if r >= t - n / d**0.25:
        events["U_r"] = check_event_U_r(A, t, r, config, n=n, d=d)
    else:
        events["U_r"] = EventResult("U_r", PASS, vacuous=True, detail={"reason": "regime"})
    events["B"] = check_event_B(A, t, config, n=n, d=d)
    events["Q"] = check_event_Q(A, t, config, n=n, d=d)
    events["R"] = check_event_R(A, t, config, n=n, d=d)
    return CertificateReport(events)


def lambda_count(v, x: float) -> int:
    """Number of coordinates with modulus at least x."""
    if x < 0:
        raise ContractViolation("lambda_count needs x >= 0")
    return int(np.count_nonzero(np.abs(np.asarray(v)) >= x))


def log_lambda_count(v, log_x: float) -> int:
    """lambda_count with a log-scale threshold, for thresholds below float range."""
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(np.asarray(v)))
    return int(np.count_nonzero(logs >= log_x))


def descending_moduli(v) -> tuple[np.ndarray, np.ndarray]:
    """v* (moduli sorted descending) and the permutation, ties broken by index."""
    mod = np.abs(np.asarray(v))
    order = np.argsort(-mod, kind="stable")
    return mod[order], order


def observation_margin(A, z: complex, v, ell: int, beta: float) -> float:
    """min over i in U(S) of |(A_z v_S)_i| - beta v*_ell, S the ell largest coordinates.

    Returns +inf when U(S) is empty.
    """
    B = as_matrix(A, name="A")
    rows, cols = B.shape
    vstar, order = descending_moduli(v)
    S = np.sort(order[:ell])
    vS = np.zeros(cols, dtype=np.complex128)
    vS[S] = np.asarray(v)[S]
    Az = B - z * np.eye(rows, cols)
    image = Az @ vS
    U = unique_neighborhood(B, S, beta)
    if not U:
        return math.inf
    idx = np.array(sorted(U))
    return float(np.min(np.abs(image[idx])) - beta * vstar[ell - 1])


@dataclass
class SpreadVerdict:
    verdict: str
    margin: float = math.nan
    reason: str = ""
    decay_trace: list = field(default_factory=list)


def spread_check(M, v, r: int, t: float, schedule: DeltaSchedule, config: CertificateConfig,
                 *, z: complex, n: int, d: float) -> SpreadVerdict:
    """Check that a near-kernel vector of M = A_t - zI is spread out.

    Preconditions: 1 <= |z| <= d, ||M v|| <= d^{1/2} eta_r and
    lambda(v; k^2 n^{-5/2}) >= k with k = c*(ceil(t) - r + 1). The conclusion
    lambda(v; eta_r d^{1/2} k^{-1/2}) >= (n/(2d)) log log d is evaluated in log
    space because eta_r routinely underflows.
    """
    M = as_matrix(M)
    v = np.asarray(v, dtype=np.complex128)
    k = config.c_star * (_ceil_t(t) - r + 1)
    log_eta = schedule.log_eta(r)
    trace = _decay_trace(v, k, n, d, config)
    if not 1.0 <= abs(z) <= d:
        return SpreadVerdict("not-applicable", reason="|z| outside [1, d]", decay_trace=trace)
    residual = float(np.linalg.norm(M @ v))
    log_res = math.log(residual) if residual > 0 else -math.inf
    if log_res > 0.5 * math.log(d) + log_eta:
        return SpreadVerdict("not-applicable", reason="||Mv|| above d^{1/2} eta_r",
                             decay_trace=trace)
    if lambda_count(v, k**2 * n**-2.5) < k:
        return SpreadVerdict("not-applicable", reason="v too concentrated", decay_trace=trace)
    target = spread_target(n, d)
    count = log_lambda_count(v, log_eta + 0.5 * math.log(d) - 0.5 * math.log(k))
    verdict = "pass" if count >= target else "fail"
    return SpreadVerdict(verdict, count - target, decay_trace=trace)


def _decay_trace(v, k: float, n: int, d: float, config: CertificateConfig) -> list:
    # v*_{k_i} >= v*_{k_{i-1}} * (beta k / (d n))^7 along the g-sequence.
    vstar, _ = descending_moduli(v)
    k0 = max(1, math.ceil(k))
    if k0 >= n or k0 > len(vstar):
        return []
    try:
        seq = (k0,) + g_and_tau(n, d, k0, config).sequence
    except ContractViolation:
        return []
    factor = (config.beta * k / (d * n)) ** 7
    out = []
    for prev, cur in zip(seq, seq[1:]):
        if cur > len(vstar):
            break
        ok = vstar[cur - 1] >= vstar[prev - 1] * factor
        out.append((prev, cur, float(vstar[cur - 1]), bool(ok)))
    return out
