"""Empirical checks against the circular law and the Ginibre reference."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import ShiftSpec, XiSpec, sample_matrix, shift_and_scale
from .linalg import ContractViolation, as_matrix, eigenvalues, hs_norm_sq, svd
from .potential import TruncationIndices, t1_t2, truncated_potential, u_circ

LAW_CSV_FIELDS = ("seed", "n", "d", "eps", "z_re", "z_im", "disk_mass", "discrepancy",
                  "T1_dev", "T2_dev", "HS_bound_ok")

DEFAULT_GRID = tuple(np.round(np.linspace(-1.2, 1.2, 25), 10))
_GINIBRE_STREAM = 2


def _strip_integral(x: float) -> float:
    # Antiderivative of sqrt(1 - x^2) on [-1, 1].
    x = min(max(x, -1.0), 1.0)
    return (x * math.sqrt(1.0 - x * x) + math.asin(x)) / 2.0


def _quadrant_area(a: float, b: float) -> float:
    """Area of the unit disk intersected with {x <= a, y <= b}."""
    a = min(max(a, -1.0), 1.0)
    if b <= -1.0 or a <= -1.0:
        return 0.0
    if b >= 1.0:
        return 2.0 * (_strip_integral(a) - _strip_integral(-1.0))
    s = math.sqrt(1.0 - b * b)
    # Integrand in x of the vertical chord length below b, per segment.
    if b >= 0:
        pieces = [(-1.0, -s, "full"), (-s, s, "cut"), (s, 1.0, "full")]
    else:
        pieces = [(-1.0, -s, "none"), (-s, s, "cut"), (s, 1.0, "none")]
    area = 0.0
    for lo, hi, kind in pieces:
        hi = min(hi, a)
        if hi <= lo:
            continue
        w = _strip_integral(hi) - _strip_integral(lo)
        if kind == "full":
            area += 2.0 * w
        elif kind == "cut":
            area += w + b * (hi - lo)
    return area


def disk_rectangle_mass(x0: float, x1: float, y0: float, y1: float) -> float:
    """Uniform-disk probability of [x0, x1] x [y0, y1]; infinite ends allowed."""
    if x1 < x0 or y1 < y0:
        raise ContractViolation("rectangle corners out of order")
    area = (_quadrant_area(x1, y1) - _quadrant_area(x0, y1)
            - _quadrant_area(x1, y0) + _quadrant_area(x0, y0))
    return max(area, 0.0) / math.pi


def circular_cdf(s: float, t: float) -> float:
    return disk_rectangle_mass(-math.inf, s, -math.inf, t)


@dataclass(frozen=True)
class EsdSummary:
    eigenvalues: np.ndarray
    grid: tuple
    cdf: np.ndarray  # cdf[i, j] = fraction with Re <= grid[i], Im <= grid[j]
    reference: np.ndarray
    disk_mass: float

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.cdf - self.reference)))


def esd_summary(A, d: float, grid=DEFAULT_GRID) -> EsdSummary:
    """Eigenvalues of d^{-1/2} A against the circular law on a rectangle-CDF grid."""
    M = as_matrix(A.to_dense() if hasattr(A, "to_dense") else A, name="A")
    if M.shape[0] != M.shape[1]:
        raise ContractViolation("esd_summary needs a square matrix")
    lam = eigenvalues(M / math.sqrt(d)).values
    g = np.asarray(grid, dtype=float)
    below_re = lam.real[None, :] <= g[:, None]
    below_im = lam.imag[None, :] <= g[:, None]
    cdf = (below_re.astype(float) @ below_im.T.astype(float)) / len(lam)
    ref = np.array([[circular_cdf(s, t) for t in g] for s in g])
    disk = float(np.mean(np.abs(lam) <= 1.0))
    return EsdSummary(lam, tuple(g), cdf, ref, disk)


def ginibre_matrix(n: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(_GINIBRE_STREAM,))))
    return (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)


@dataclass(frozen=True)
class GinibreReference:
    n: int
    z: complex
    per_seed: tuple  # descending singular values of n^{-1/2} G - z I, one array per seed
    pooled: np.ndarray  # ascending

    def quantile(self, u):
        return np.quantile(self.pooled, u, method="inverted_cdf")

    def tau(self, eps_prime: float) -> float:
        if eps_prime <= 0:
            return float(self.pooled[0])
        return float(self.quantile(eps_prime))

    @property
    def C_emp(self) -> float:
        return float(self.pooled[-1] - abs(self.z))

    def small_ball_constant(self, grid=None) -> float:
        """max over t of mass([0, t)) / t."""
        if grid is None:
            grid = np.linspace(0.01, max(float(self.pooled[-1]), 0.02), 200)
        mass = np.searchsorted(self.pooled, grid, side="left") / len(self.pooled)
        return float(np.max(mass / grid))

    def log_integral(self, clamp_quantile: float = 0.01) -> float:
        """-integral of log t, with values clamped below at the given quantile."""
        floor = self.quantile(clamp_quantile) if clamp_quantile > 0 else 0.0
        vals = np.maximum(self.pooled, floor)
        with np.errstate(divide="ignore"):
            return -float(np.mean(np.log(vals)))

    def raw_log_integral(self) -> float:
        return self.log_integral(0.0)

    def truncated_integral(self, keep: int) -> float:
        """Seed average of -(1/n) sum of log of the ``keep`` largest values."""
        return float(np.mean([truncated_potential(s, keep, self.n) for s in self.per_seed]))


def ginibre_reference(n: int, z: complex, seeds) -> GinibreReference:
    if n < 100:
        raise ContractViolation("ginibre_reference needs n >= 100")
    per_seed = []
    for seed in seeds:
        G = ginibre_matrix(n, seed) / math.sqrt(n) - z * np.eye(n)
        per_seed.append(svd(G, seed=seed).values)
    pooled = np.sort(np.concatenate(per_seed))
    return GinibreReference(n, complex(z), tuple(per_seed), pooled)


@dataclass(frozen=True)
class LawReport:
    seed: int
    n: int
    d: float
    eps: float
    z: complex
    disk_mass: float
    discrepancy: float
    T1: float
    T2: float
    U_n: float
    hs_norm_sq: float

    @property
    def T1_dev(self) -> float:
        return abs(self.T1 - u_circ(self.z))

    @property
    def T2_dev(self) -> float:
        return abs(self.T2 - u_circ(self.z))

    @property
    def hs_bound_ok(self) -> bool:
        return self.hs_norm_sq <= 4.0 * (abs(self.z) ** 2 + 1.0) * self.n

    def csv_row(self) -> dict:
        return {"seed": self.seed, "n": self.n, "d": self.d, "eps": self.eps,
                "z_re": self.z.real, "z_im": self.z.imag, "disk_mass": self.disk_mass,
                "discrepancy": self.discrepancy, "T1_dev": self.T1_dev, "T2_dev": self.T2_dev,
                "HS_bound_ok": int(self.hs_bound_ok)}


def law_report(n: int, d: float, eps: float, z: complex, xi: XiSpec, seed: int, *,
               strict: bool = True, with_esd: bool = True) -> LawReport:
    if z == 0:
        raise ContractViolation("z must be nonzero")
    sample = sample_matrix(n, n, d / n, xi, seed, strict=strict)
    A = sample.to_dense()
    shift = ShiftSpec(z, "rescaled", d)
    full_mat = shift_and_scale(A, shift)
    idx = TruncationIndices.of(n, eps)
    full = svd(full_mat, seed=seed).values
    minor = svd(shift_and_scale(A[: idx.m, : idx.m], shift), seed=seed).values
    pair = t1_t2(full, minor, n, eps)
    disk = disc = math.nan
    if with_esd:
        esd = esd_summary(A, d)
        disk, disc = esd.disk_mass, esd.discrepancy
    return LawReport(seed, n, d, eps, complex(z), disk, disc, pair.T1, pair.T2,
                     truncated_potential(full, n, n), hs_norm_sq(full_mat))


@dataclass(frozen=True)
class ConvergenceSummary:
    z: complex
    reports: tuple
    ginibre_truncated: float
    u_circ: float

    @property
    def mean_T1_dev(self) -> float:
        return float(np.mean([r.T1_dev for r in self.reports]))

    @property
    def mean_T2_dev(self) -> float:
        return float(np.mean([r.T2_dev for r in self.reports]))

    @property
    def mean_T1_vs_ginibre(self) -> float:
        return float(np.mean([abs(r.T1 - self.ginibre_truncated) for r in self.reports]))

    def fraction_T1_within(self, tol: float) -> float:
        return float(np.mean([r.T1_dev <= tol for r in self.reports]))


def truncated_convergence_experiment(n: int, d: float, eps: float, z: complex, xi: XiSpec,
                                     seeds, *, ginibre_seeds=range(5), strict: bool = True,
                                     with_esd: bool = False) -> ConvergenceSummary:
    """T1 and T2 per seed against U°(z) and a same-size Ginibre truncated integral."""
    reports = tuple(law_report(n, d, eps, z, xi, s, strict=strict, with_esd=with_esd)
                    for s in seeds)
    keep = TruncationIndices.of(n, eps).keep
    ref = ginibre_reference(n, z, ginibre_seeds)
    return ConvergenceSummary(complex(z), reports, ref.truncated_integral(keep), u_circ(z))
