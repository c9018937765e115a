"""Anti-concentration: Lévy concentration, the LKR bound, flat bases and
projection small-ball experiments.

``L(G, r) = sup_y P(|G - y| <= r)`` uses closed balls throughout. Discrete laws
are handled exactly; anything else goes through Monte Carlo with an explicit
+3 sigma margin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .ensemble import XiSpec, sample_row
from .linalg import ContractViolation, as_matrix, right_singular_basis
from .potential import DeltaSchedule

ANTICONC_CSV_FIELDS = ("seed", "n", "d", "t", "r", "h", "z_re", "z_im", "trials", "freq",
                       "bound_shape_value")

_TOL = 1e-12
_MAX_GRID = 250_000
_MAX_EXACT_ATOMS = 60

Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class LevyEstimate:
    radius: float
    estimate: float
    samples: int
    center_grid_pitch: float
    conservative_upper: float
    degenerate: bool = False


def _interval_sup(values: np.ndarray, weights: np.ndarray, r: float) -> float:
    # Largest weight inside a closed interval of length 2r; an optimal
    # interval can always be slid until its left end hits a point.
    order = np.argsort(values, kind="stable")
    x = values[order]
    cum = np.concatenate([[0.0], np.cumsum(weights[order])])
    right = np.searchsorted(x, x + 2.0 * r + _TOL * max(1.0, abs(r)), side="right")
    return float(np.max(cum[right] - cum[:-1]))


def _circumcentre(a: complex, b: complex, c: complex):
    d = 2 * (a.real * (b.imag - c.imag) + b.real * (c.imag - a.imag) + c.real * (a.imag - b.imag))
    if abs(d) < 1e-15:
        return None
    aa, bb, cc = abs(a) ** 2, abs(b) ** 2, abs(c) ** 2
    ux = (aa * (b.imag - c.imag) + bb * (c.imag - a.imag) + cc * (a.imag - b.imag)) / d
    uy = (aa * (c.real - b.real) + bb * (a.real - c.real) + cc * (b.real - a.real)) / d
    return complex(ux, uy)


@dataclass(frozen=True)
class DiscreteLaw:
    """Finitely supported law; atoms are merged after rounding to 12 decimals."""

    values: np.ndarray
    probs: np.ndarray

    @classmethod
    def of(cls, atoms) -> "DiscreteLaw":
        vals = np.array([complex(v) for v, _ in atoms], dtype=np.complex128)
        probs = np.array([float(w) for _, w in atoms])
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ContractViolation("atom probabilities must be nonnegative and sum to 1")
        return cls._merged(vals, probs)

    @classmethod
    def point(cls, value: complex) -> "DiscreteLaw":
        return cls.of([(value, 1.0)])

    @classmethod
    def from_xi(cls, xi: XiSpec, p: float = 1.0) -> "DiscreteLaw":
        """Law of Ber(p) * xi for an atomic xi."""
        atoms = xi.atoms()
        if atoms is None:
            raise ContractViolation(f"{xi.kind} has no finite support")
        return cls.of([(v, p * w) for v, w in atoms] + [(0.0, 1.0 - p)])

    @classmethod
    def _merged(cls, vals: np.ndarray, probs: np.ndarray) -> "DiscreteLaw":
        keys = np.round(vals.real, 12) + 1j * np.round(vals.imag, 12)
        uniq, inv = np.unique(keys, return_inverse=True)
        merged = np.bincount(inv.ravel(), weights=probs, minlength=len(uniq))
        keep = merged > 0
        return cls(uniq[keep], merged[keep])

    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))

    def scale(self, c: complex) -> "DiscreteLaw":
        return DiscreteLaw._merged(self.values * c, self.probs)

    def map(self, f) -> "DiscreteLaw":
        return DiscreteLaw._merged(np.asarray(f(self.values), dtype=np.complex128), self.probs)

    def __add__(self, other: "DiscreteLaw") -> "DiscreteLaw":
        vals = (self.values[:, None] + other.values[None, :]).ravel()
        probs = (self.probs[:, None] * other.probs[None, :]).ravel()
        return DiscreteLaw._merged(vals, probs)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.values, size=size, p=self.probs / self.probs.sum())

    def concentration(self, r: float) -> float:
        return levy_exact(self, r)


def levy_exact(law: DiscreteLaw, r: float) -> float:
    """Exact L(G, r) for a finitely supported G.

    Real laws use a sliding interval (a complex centre never beats its real
    projection). Complex laws test every centre of a minimal enclosing circle
    of at most three atoms.
    """
    if r < 0:
        raise ContractViolation("radius must be nonnegative")
    if law.is_real():
        return min(1.0, _interval_sup(law.values.real, law.probs, r))
    vals = law.values
    if len(vals) > _MAX_EXACT_ATOMS:
        raise ContractViolation(f"{len(vals)} complex atoms is too many for the exact sup")
    centres = list(vals)
    centres += [(a + b) / 2 for a, b in combinations(vals, 2) if abs(a - b) <= 2 * r + _TOL]
    for a, b, c in combinations(vals, 3):
        cc = _circumcentre(complex(a), complex(b), complex(c))
        if cc is not None and abs(cc - a) <= r + _TOL:
            centres.append(cc)
    centres = np.array(centres)
    inside = np.abs(centres[:, None] - vals[None, :]) <= r + _TOL * max(1.0, r)
    return float(min(1.0, np.max(inside.astype(float) @ law.probs)))


def levy_estimate(sampler: Sampler, radius: float, samples: int = 10_000,
                  seed: int = 0) -> LevyEstimate:
    """Monte Carlo L(G, r) from ``samples`` draws of ``sampler(rng, size)``.

    Real samples get the exact empirical sup. Complex samples use a centre
    grid of pitch r/4 over the sample box plus the sample points themselves.
    """
    if samples < 10_000:
        raise ContractViolation("levy_estimate needs at least 1e4 samples")
    if radius < 0:
        raise ContractViolation("radius must be nonnegative")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = np.asarray(sampler(rng, samples), dtype=np.complex128)
    N = len(x)
    pitch = 0.0
    if np.all(x.imag == 0):
        est = round(_interval_sup(x.real, np.ones(N), radius)) / N
    else:
        xy = np.column_stack([x.real, x.imag])
        tree = cKDTree(xy)
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        best = 0
        if radius > 0:
            pitch = radius / 4.0
            span = np.maximum(hi - lo, 0.0)
            cells = np.prod(span / pitch + 1)
            if cells > _MAX_GRID:
                # Shrink the box to the central 98% before ever widening the pitch.
                lo, hi = np.quantile(xy, 0.01, axis=0), np.quantile(xy, 0.99, axis=0)
                cells = np.prod((hi - lo) / pitch + 1)
                if cells > _MAX_GRID:
                    pitch = float(np.sqrt(np.prod(hi - lo) / _MAX_GRID))
            gx = np.arange(lo[0], hi[0] + pitch, pitch)
            gy = np.arange(lo[1], hi[1] + pitch, pitch)
            grid = np.array(np.meshgrid(gx, gy)).reshape(2, -1).T
            best = int(np.max(tree.query_ball_point(grid, r=radius, return_length=True)))
        probe = xy[: min(N, 2000)]
        best = max(best, int(np.max(tree.query_ball_point(probe, r=radius, return_length=True))))
        est = best / N
    degenerate = radius == 0 and est <= 1.0 / N
    sigma = math.sqrt(max(est * (1 - est), 1.0 / N) / N)
    return LevyEstimate(radius, est, N, pitch, min(1.0, est + 3 * sigma), degenerate)


@dataclass(frozen=True)
class LKRResult:
    lhs: float
    rhs_unit: float
    C_achieved: float
    verdict: str
    exact: bool


def lkr_check(laws: Sequence[DiscreteLaw], radii: Sequence[float], r: float, *,
              samples: int = 100_000, seed: int = 0, max_atoms: int = 200_000) -> LKRResult:
    """Measure the constant in L(sum xi_i, r) <= C r / sqrt(sum (1 - L(xi_i, r_i)) r_i^2).

    Per-term concentrations are exact. The left side is exact while the
    convolved support stays below ``max_atoms``, otherwise Monte Carlo
    (conservative upper value). ``rhs_unit`` is the right side with C = 1.
    """
    if len(laws) != len(radii) or not laws:
        raise ContractViolation("need one radius per law")
    if any(ri <= 0 for ri in radii) or r < max(radii):
        raise ContractViolation("radii must be positive and r >= max r_i")
    for law in laws:
        if not law.is_real():
            raise ContractViolation("LKR is stated for real-valued variables")
    denom = sum((1.0 - levy_exact(law, ri)) * ri**2 for law, ri in zip(laws, radii))
    if denom <= _TOL:
        return LKRResult(math.nan, math.inf, math.nan, "not-applicable", True)
    rhs_unit = r / math.sqrt(denom)
    total, exact = DiscreteLaw.point(0.0), True
    for law in laws:
        if len(total.values) * len(law.values) > max_atoms:
            exact = False
            break
        total = total + law
    if exact:
        lhs = levy_exact(total, r)
    else:
        def sampler(rng, size):
            return sum(law.sample(rng, size).real for law in laws)
        lhs = levy_estimate(sampler, r, samples, seed).conservative_upper
    return LKRResult(lhs, rhs_unit, lhs / rhs_unit, "measured", exact)


class FlatBasisFailure(RuntimeError):
    def __init__(self, best: "FlatBasis", retries: int):
        super().__init__(f"no flat basis after {retries} rotations; best flatness "
                         f"{best.achieved_flatness:.3e} vs target {best.target:.3e}")
        self.best = best


@dataclass(frozen=True)
class FlatBasis:
    vectors: np.ndarray  # n x k, orthonormal columns
    c_star: float
    achieved_flatness: float
    target: float
    strategy: str

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def ok(self) -> bool:
        return self.achieved_flatness >= self.target


def flatness(V: np.ndarray, c_star: float) -> float:
    """min over columns v of v*_{ceil(c* k)}."""
    k = V.shape[1]
    idx = max(1, math.ceil(c_star * k)) - 1
    mods = -np.sort(-np.abs(V), axis=0)
    return float(np.min(mods[idx]))


def _haar_unitary(k: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def flat_basis(V, c_star: float = 0.25, max_retries: int = 50, seed: int = 0) -> FlatBasis:
    """Orthonormal basis of span(V) whose vectors all satisfy
    v*_{ceil(c* k)} >= c* k^{1/2} / n.

    Tries V itself, then V times the unitary DFT, then Haar-random rotations.
    """
    V = as_matrix(V, name="V")
    n, k = V.shape
    if k > n or k < 1:
        raise ContractViolation(f"need 1 <= k <= n, got k={k}, n={n}")
    if np.max(np.abs(V.conj().T @ V - np.eye(k))) > 1e-10:
        raise ContractViolation("input vectors are not orthonormal")
    target = c_star * math.sqrt(k) / n
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    F = np.fft.fft(np.eye(k)) / math.sqrt(k)
    tries = [("input", V), ("dft", V @ F)]
    best = None
    attempt = 0
    while True:
        if tries:
            name, W = tries.pop(0)
        else:
            if attempt >= max_retries:
                raise FlatBasisFailure(best, max_retries)
            attempt += 1
            name, W = f"haar-{attempt}", V @ _haar_unitary(k, rng)
        cand = FlatBasis(W, c_star, flatness(W, c_star), target, name)
        if best is None or cand.achieved_flatness > best.achieved_flatness:
            best = cand
        if cand.ok:
            return cand


def projector_distance(V: np.ndarray, W: np.ndarray) -> float:
    """Max entry of |V V^H - W W^H|, zero iff the spans agree."""
    return float(np.max(np.abs(V @ V.conj().T - W @ W.conj().T)))


@dataclass(frozen=True)
class ProjExperiment:
    t: float
    r: int
    h: int
    trials: int
    hits: int
    log_threshold: float
    hypothesis_met: bool
    bound_shape_value: float

    @property
    def freq(self) -> float:
        return self.hits / self.trials

    @property
    def implied_constant(self) -> float:
        return self.freq / self.bound_shape_value

    def csv_row(self, *, seed, n, d, z) -> dict:
        z = complex(z)
        return {"seed": seed, "n": n, "d": d, "t": self.t, "r": self.r, "h": self.h,
                "z_re": z.real, "z_im": z.imag, "trials": self.trials, "freq": self.freq,
                "bound_shape_value": self.bound_shape_value}


def proj_anticonc_experiment(M, t: float, r: int, *, p: float, xi: XiSpec, d: float,
                             eps: float, schedule: DeltaSchedule | None = None, w=None,
                             trials: int = 1000, seed: int = 0,
                             log_threshold: float | None = None,
                             strict: bool = True) -> ProjExperiment:
    """Frequency of ||P (X + w)^H|| < d^{1/2} eta_r over fresh rows X.

    M is the current shifted matrix with ceil(t) columns and P projects onto
    its ceil(t) - r + 1 smallest right-singular directions. ``log_threshold``
    overrides log(d^{1/2} eta_r). The hypothesis sigma_r(M) <= d^{1/2} eta_r
    is checked and reported, never enforced.
    """
    M = as_matrix(M)
    cols = M.shape[1]
    if cols != math.ceil(t):
        raise ContractViolation(f"M has {cols} columns, expected ceil(t) = {math.ceil(t)}")
    if not 1 <= r <= cols:
        raise ContractViolation(f"r={r} outside [1, {cols}]")
    h = cols - r + 1
    if log_threshold is None:
        if schedule is None:
            raise ContractViolation("need a schedule or an explicit log_threshold")
        log_threshold = 0.5 * math.log(d) + schedule.log_eta(r)
    s, Vfull = right_singular_basis(M)
    sigma_r = s[r - 1]
    hypothesis = (math.log(sigma_r) if sigma_r > 0 else -math.inf) <= log_threshold
    W = Vfull[:, cols - h:]
    w = np.zeros(cols, dtype=np.complex128) if w is None else np.asarray(w, np.complex128)
    hits = 0
    for k in range(trials):
        X = sample_row(cols, p, xi, seed, index=k, strict=strict)
        norm = float(np.linalg.norm(W.conj().T @ np.conj(X + w)))
        if (math.log(norm) if norm > 0 else -math.inf) < log_threshold:
            hits += 1
    shape = eps + math.log(math.log(d)) ** -0.5 if d > math.e else math.inf
    return ProjExperiment(t, r, h, trials, hits, log_threshold, bool(hypothesis), shape)


@dataclass(frozen=True)
class DichotomyResult:
    z: complex
    L_re: float
    L_im: float
    bound: float

    @property
    def ok(self) -> bool:
        return min(self.L_re, self.L_im) <= self.bound + _TOL


def complex_dichotomy(xi_law: DiscreteLaw, beta: float, z: complex) -> DichotomyResult:
    """Exact L(Re(z xi), beta|z|/sqrt2) and L(Im(z xi), ...) against 1 - beta/2."""
    if z == 0:
        raise ContractViolation("z must be nonzero")
    rad = beta * abs(z) / math.sqrt(2)
    zx = xi_law.scale(z)
    L_re = levy_exact(zx.map(np.real), rad)
    L_im = levy_exact(zx.map(np.imag), rad)
    return DichotomyResult(complex(z), L_re, L_im, 1.0 - beta / 2)


@dataclass(frozen=True)
class InnerProductCheck:
    k: int
    p: float
    rho: float
    r: float
    lhs: float
    rhs: float
    C_needed: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + _TOL


def inner_product_small_ball(xi: XiSpec, beta: float, v, k: int, p: float, rho: float,
                             r: float, C_beta: float | None = None) -> InnerProductCheck:
    """Exact L(<X, v>, r) for X with iid Ber(p) xi entries, against C_beta r / (rho sqrt(kp)).

    Requires v*_k >= rho and r >= beta rho / sqrt2. C_beta defaults to 8 beta^{-3/2}.
    """
    v = np.asarray(v, dtype=np.complex128)
    if np.sort(np.abs(v))[::-1][k - 1] < rho - _TOL:
        raise ContractViolation("v*_k is below rho")
    if r < beta * rho / math.sqrt(2) - _TOL:
        raise ContractViolation("r must be at least beta rho / sqrt2")
    if C_beta is None:
        C_beta = 8.0 * beta ** -1.5
    entry = DiscreteLaw.from_xi(xi, p)
    total = DiscreteLaw.point(0.0)
    for vi in v:
        if vi != 0:
            total = total + entry.scale(np.conj(vi))
    lhs = levy_exact(total, r)
    unit = r / (rho * math.sqrt(k * p))
    return InnerProductCheck(k, p, rho, r, lhs, C_beta * unit, lhs / unit)
