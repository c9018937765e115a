"""Log-potentials from singular values, truncated sums and the slack schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import ContractViolation, SingularSpectrum

POTENTIAL_CSV_FIELDS = ("seed", "n", "d", "eps", "z_re", "z_im", "U_n", "T_n", "T1", "T2",
                        "U_circ", "inf_flag")


def u_circ(z: complex) -> float:
    """Logarithmic potential of the uniform law on the unit disk."""
    a = abs(z)
    if a >= 1.0:
        return -math.log(a) + 0.0
    return (1.0 - a * a) / 2.0


def high_regime_start(n: int, d: float) -> float:
    return n * (1.0 - d ** -0.25)


def delta_r(n: int, d: float, r: int, C_sched: float = 1.0) -> float:
    if not 1 <= r <= n:
        raise ContractViolation(f"r={r} outside [1, {n}]")
    if d <= 1:
        raise ContractViolation(f"d={d} must exceed 1")
    ratio = math.log(n / (n - r + 1))
    if r < high_regime_start(n, d):
        return ratio**2 / n
    return C_sched * math.log(d) ** 8 * ratio**8 / n


@dataclass(frozen=True)
class DeltaSchedule:
    """delta_r for r = 1..n. ``values[r - 1]`` is delta_r.

    eta_r = exp(-n delta_r) underflows for most of the high regime, so the
    schedule also carries log eta_r = -n delta_r.
    """

    n: int
    d: float
    C_sched: float
    values: np.ndarray

    @classmethod
    def build(cls, n: int, d: float, C_sched: float = 1.0) -> "DeltaSchedule":
        vals = np.array([delta_r(n, d, r, C_sched) for r in range(1, n + 1)])
        return cls(n, d, C_sched, vals)

    @classmethod
    def constant(cls, n: int, value: float) -> "DeltaSchedule":
        """Sentinel schedule; +inf forces acceptance, -inf forbids it."""
        return cls(n, float("nan"), float("nan"), np.full(n, float(value)))

    def delta(self, r: int) -> float:
        return float(self.values[r - 1])

    def log_eta(self, r: int) -> float:
        return -self.n * self.delta(r)

    def eta(self, r: int) -> float:
        return math.exp(self.log_eta(r))

    def tail_sum(self, start: int) -> float:
        """sum_{r=start}^{n} delta_r."""
        start = max(int(start), 1)
        return float(np.sum(self.values[start - 1:]))


def _values(spectrum) -> np.ndarray:
    if isinstance(spectrum, SingularSpectrum):
        return spectrum.values
    return np.asarray(spectrum, dtype=float)


def _neg_log_sum(values: np.ndarray) -> float:
    if np.any(values <= 0.0):
        return math.inf
    return -float(np.sum(np.log(values)))


def log_potential(spectrum, n: int) -> float:
    """U_n(z) = -(1/n) sum_j log sigma_j; +inf when a singular value is zero."""
    vals = _values(spectrum)
    if len(vals) != n:
        raise ContractViolation(f"spectrum has {len(vals)} values, expected {n}")
    return _neg_log_sum(vals) / n


def truncated_potential(spectrum, r: int, n: int) -> float:
    """-(1/n) times the sum of log of the r largest singular values.

    Indices past the end of the spectrum count as zero singular values.
    """
    if r < 0:
        raise ContractViolation("r must be nonnegative")
    if r == 0:
        return 0.0
    vals = _values(spectrum)
    if r > len(vals):
        return math.inf
    return _neg_log_sum(vals[:r]) / n


@dataclass(frozen=True)
class TruncationIndices:
    """Rounded-down index bookkeeping for the truncated sums.

    m = floor((1 - eps) n) is the minor size, keep = floor((1 - eps/4) m) the
    number of retained minor singular values, shift = 2 (n - m) the number of
    deleted rows plus columns.
    """

    n: int
    eps: float
    m: int
    keep: int
    shift: int

    @classmethod
    def of(cls, n: int, eps: float) -> "TruncationIndices":
        if not 0.0 <= eps < 1.0:
            raise ContractViolation(f"eps={eps} outside [0, 1)")
        m = math.floor((1.0 - eps) * n + 1e-9)
        keep = math.floor((1.0 - eps / 4.0) * m + 1e-9)
        shift = 2 * (n - m)
        if m - shift < 0 or keep < 1:
            raise ContractViolation(
                f"eps={eps} is too large for n={n}: the shifted range "
                f"[{shift + 1}, {m}] is empty")
        return cls(n, eps, m, keep, shift)


@dataclass(frozen=True)
class TruncatedPair:
    T1: float
    T2: float
    T1_normalized: float
    indices: TruncationIndices


def t1_t2(full_spec, minor_spec, n: int, eps: float) -> TruncatedPair:
    """Both truncated potentials built from the full n x n spectrum.

    T1 keeps the ``keep`` largest full singular values. T2 sums the full
    values at positions shift+1..m, which by interlacing dominate minor values
    1..m-shift in -log, then pads with the ``keep - (m - shift)`` copies of the
    smallest retained minor value.
    """
    idx = TruncationIndices.of(n, eps)
    full = _values(full_spec)
    minor = _values(minor_spec)
    if len(full) != n or len(minor) != idx.m:
        raise ContractViolation(
            f"spectra of length {len(full)}, {len(minor)}; expected {n}, {idx.m}")
    T1 = truncated_potential(full, idx.keep, n)
    middle = _neg_log_sum(full[idx.shift: idx.m]) / n
    pad = idx.keep - (idx.m - idx.shift)
    sigma_keep = minor[idx.keep - 1]
    tail = math.inf if sigma_keep <= 0 else -pad * math.log(sigma_keep) / n
    T2 = middle + tail if pad else middle
    return TruncatedPair(T1, T2, T1 * n / idx.keep, idx)


@dataclass(frozen=True)
class PotentialReport:
    seed: int
    n: int
    d: float
    eps: float
    z: complex
    U_n: float
    T_n: float
    T1: float
    T2: float
    T1_normalized: float
    U_circ: float
    indices: TruncationIndices

    @property
    def inf_flag(self) -> bool:
        return not all(math.isfinite(v) for v in (self.U_n, self.T_n, self.T1, self.T2))

    def sandwich_slacks(self) -> tuple[float, float]:
        """(T2 - T_n, U_n - T1_normalized); both are nonnegative by interlacing."""
        return self.T2 - self.T_n, self.U_n - self.T1_normalized

    def csv_row(self) -> dict:
        return {"seed": self.seed, "n": self.n, "d": self.d, "eps": self.eps,
                "z_re": self.z.real, "z_im": self.z.imag, "U_n": self.U_n, "T_n": self.T_n,
                "T1": self.T1, "T2": self.T2, "U_circ": self.U_circ,
                "inf_flag": int(self.inf_flag)}


def potential_report(full_spec, minor_spec, *, n: int, eps: float, z: complex, d: float,
                     seed: int) -> PotentialReport:
    pair = t1_t2(full_spec, minor_spec, n, eps)
    return PotentialReport(
        seed=seed, n=n, d=d, eps=eps, z=complex(z),
        U_n=log_potential(full_spec, n),
        T_n=truncated_potential(minor_spec, pair.indices.keep, n),
        T1=pair.T1, T2=pair.T2, T1_normalized=pair.T1_normalized,
        U_circ=u_circ(z), indices=pair.indices,
    )
