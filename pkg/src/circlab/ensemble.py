"""Entry laws, sparse sampling with splittable streams, and shifted matrices.

Every entry (i, j) of a sampled matrix is a pure function of (seed, i, j): row
i draws from its own Philox stream, three uniforms per column, so any prefix
or submatrix can be regenerated without touching the rest.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .linalg import ContractViolation, as_matrix

XI_KINDS = ("complex-gaussian", "rademacher", "unit-circle-uniform", "two-point",
            "bernoulli-scaled")
BETA_GRID = tuple(round(0.05 * k, 2) for k in range(19, 0, -1))
_UNIFORMS_PER_ENTRY = 3
_ROW_STREAM = 0


class BetaUndefined(ValueError):
    pass


@dataclass(frozen=True)
class XiSpec:
    """Law of the nonzero entries.

    ``two-point`` takes value ``a`` with probability ``prob`` and ``b``
    otherwise; ``bernoulli-scaled`` takes value ``q**-0.5`` with probability
    ``q`` and 0 otherwise.
    """

    kind: str
    a: complex = 1.0
    b: complex = -1.0
    prob: float = 0.5
    q: float = 0.5

    def __post_init__(self):
        if self.kind not in XI_KINDS:
            raise ContractViolation(f"unknown xi kind {self.kind!r}; expected one of {XI_KINDS}")
        if self.kind == "two-point":
            if not 0.0 <= self.prob <= 1.0:
                raise ContractViolation("two-point prob must lie in [0, 1]")
        if self.kind == "bernoulli-scaled" and not 0.0 < self.q <= 1.0:
            raise ContractViolation("bernoulli-scaled q must lie in (0, 1]")
        atoms = self.atoms()
        if atoms is not None:
            m2 = sum(w * abs(v) ** 2 for v, w in atoms)
            if abs(m2 - 1.0) > 1e-9:
                raise ContractViolation(f"E|xi|^2 = {m2}, must equal 1")

    @classmethod
    def from_config(cls, value) -> "XiSpec":
        if isinstance(value, XiSpec):
            return value
        if isinstance(value, str):
            return cls(value)
        params = dict(value)
        for key in ("a", "b"):
            if key in params:
                params[key] = complex(params[key])
        return cls(**params)

    def to_config(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "two-point":
            out.update(a=_complex_str(self.a), b=_complex_str(self.b), prob=self.prob)
        elif self.kind == "bernoulli-scaled":
            out.update(q=self.q)
        return out

    def atoms(self) -> list[tuple[complex, float]] | None:
        """Finite support as (value, probability) pairs, or None for continuous laws."""
        if self.kind == "rademacher":
            return [(1.0 + 0j, 0.5), (-1.0 + 0j, 0.5)]
        if self.kind == "two-point":
            if self.a == self.b:
                return [(complex(self.a), 1.0)]
            return [(complex(self.a), self.prob), (complex(self.b), 1.0 - self.prob)]
        if self.kind == "bernoulli-scaled":
            if self.q == 1.0:
                return [(1.0 + 0j, 1.0)]
            return [(complex(self.q ** -0.5), self.q), (0j, 1.0 - self.q)]
        return None

    def is_real(self) -> bool:
        atoms = self.atoms()
        return atoms is not None and all(v.imag == 0 for v, _ in atoms)

    def from_uniforms(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        """Inverse-transform two independent uniform arrays into xi draws."""
        if self.kind == "complex-gaussian":
            radius = np.sqrt(-np.log1p(-u1))
            return radius * np.exp(2j * np.pi * u2)
        if self.kind == "rademacher":
            return np.where(u1 < 0.5, 1.0, -1.0).astype(np.complex128)
        if self.kind == "unit-circle-uniform":
            return np.exp(2j * np.pi * u1)
        if self.kind == "two-point":
            return np.where(u1 < self.prob, complex(self.a), complex(self.b))
        return np.where(u1 < self.q, self.q ** -0.5, 0.0).astype(np.complex128)

    def draw(self, size: int, seed: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        u = rng.random((size, 2))
        return self.from_uniforms(u[:, 0], u[:, 1])


def _complex_str(value: complex) -> str:
    return repr(complex(value))


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ContractViolation(f"seed {seed} is not a 64-bit unsigned integer")
    return seed


def _max_ball_mass_atoms(atoms, beta: float) -> float:
    # Open ball of radius beta; candidate centres are atoms, midpoints and
    # circumcentres, which include every minimal enclosing circle centre.
    values = [complex(v) for v, _ in atoms]
    weights = [w for _, w in atoms]
    centres = list(values)
    centres += [(x + y) / 2 for x, y in combinations(values, 2)]
    for x, y, z in combinations(values, 3):
        c = _circumcentre(x, y, z)
        if c is not None:
            centres.append(c)
    best = 0.0
    for c in centres:
        mass = sum(w for v, w in zip(values, weights) if abs(v - c) < beta - 1e-12)
        best = max(best, mass)
    return best


def _circumcentre(a: complex, b: complex, c: complex):
    d = 2 * (a.real * (b.imag - c.imag) + b.real * (c.imag - a.imag) + c.real * (a.imag - b.imag))
    if abs(d) < 1e-15:
        return None
    aa, bb, cc = abs(a) ** 2, abs(b) ** 2, abs(c) ** 2
    ux = (aa * (b.imag - c.imag) + bb * (c.imag - a.imag) + cc * (a.imag - b.imag)) / d
    uy = (aa * (c.real - b.real) + bb * (a.real - c.real) + cc * (b.real - a.real)) / d
    return complex(ux, uy)


def _max_ball_mass_mc(points: np.ndarray, beta: float) -> float:
    xy = np.column_stack([points.real, points.imag])
    lo = np.quantile(xy, 0.01, axis=0)
    hi = np.quantile(xy, 0.99, axis=0)
    pitch = beta / 4
    gx = np.arange(lo[0], hi[0] + pitch, pitch)
    gy = np.arange(lo[1], hi[1] + pitch, pitch)
    centres = np.array(np.meshgrid(gx, gy)).reshape(2, -1).T
    counts = cKDTree(xy).query_ball_point(centres, r=beta, return_length=True)
    return float(np.max(counts)) / len(points)


def beta_of_xi(xi: XiSpec, samples: int = 100_000, seed: int = 0) -> float:
    """Largest grid beta with max_y P(|xi - y| < beta) <= 1 - beta.

    Atomic laws are evaluated exactly; continuous laws by Monte Carlo with a
    centre grid of pitch beta/4 over the empirical 1%-99% quantile box.
    """
    if samples < 100_000:
        raise ContractViolation("beta_of_xi needs at least 1e5 samples")
    atoms = xi.atoms()
    points = None if atoms is not None else xi.draw(int(samples), seed)
    for beta in BETA_GRID:
        if atoms is not None:
            mass = _max_ball_mass_atoms(atoms, beta)
        else:
            mass = _max_ball_mass_mc(points, beta)
        if mass <= 1.0 - beta + 1e-12:
            return beta
    raise BetaUndefined(
        f"no beta in the grid works for {xi.kind}: the law is too concentrated. "
        "Compose xi with an independent Ber(1/2) (and rescale p) before sampling."
    )


@dataclass
class SparseSample:
    """A draw from the sparse ensemble, stored as a coordinate list."""

    n_rows: int
    n_cols: int
    p: float
    xi: XiSpec
    seed: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def d(self) -> float:
        return self.p * max(self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_dense(self) -> np.ndarray:
        M = np.zeros((self.n_rows, self.n_cols), dtype=np.complex128)
        M[self.rows, self.cols] = self.values
        return M

    def submatrix(self, n_rows: int, n_cols: int) -> np.ndarray:
        """Top-left block, extracted from the stored draw (never resampled)."""
        if n_rows > self.n_rows or n_cols > self.n_cols:
            raise ContractViolation("submatrix larger than the sample")
        keep = (self.rows < n_rows) & (self.cols < n_cols)
        M = np.zeros((n_rows, n_cols), dtype=np.complex128)
        M[self.rows[keep], self.cols[keep]] = self.values[keep]
        return M

    def mask(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = {"n": self.n_rows, "m": self.n_cols, "p": self.p,
                  "xi": self.xi.to_config(), "seed": self.seed}
        buf.write(json.dumps(header, sort_keys=True) + "\n")
        buf.write("i,j,re,im\n")
        for i, j, v in zip(self.rows, self.cols, self.values):
            buf.write(f"{int(i)},{int(j)},{float(v.real)!r},{float(v.imag)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SparseSample":
        lines = text.splitlines()
        header = json.loads(lines[0])
        if lines[1] != "i,j,re,im":
            raise ValueError("malformed SparseSample CSV: missing column header")
        body = [ln.split(",") for ln in lines[2:] if ln]
        rows = np.array([int(r[0]) for r in body], dtype=np.int64)
        cols = np.array([int(r[1]) for r in body], dtype=np.int64)
        values = np.array([complex(float(r[2]), float(r[3])) for r in body], dtype=np.complex128)
        return cls(header["n"], header["m"], header["p"], XiSpec.from_config(header["xi"]),
                   header["seed"], rows, cols, values)

    def __eq__(self, other):
        if not isinstance(other, SparseSample):
            return NotImplemented
        return (
            (self.n_rows, self.n_cols, self.p, self.xi, self.seed)
            == (other.n_rows, other.n_cols, other.p, other.xi, other.seed)
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values.view(np.float64), other.values.view(np.float64))
        )


def _row_uniforms(seed: int, row: int, length: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(_ROW_STREAM, row))
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.random((length, _UNIFORMS_PER_ENTRY))


def _check_p(p: float, strict: bool) -> float:
    p = float(p)
    if strict and not 0.0 < p <= 0.5:
        raise ContractViolation(f"p={p} outside (0, 1/2]")
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"p={p} is not a probability")
    return p


def _row_entries(seed: int, row: int, length: int, p: float, xi: XiSpec):
    u = _row_uniforms(seed, row, length)
    hit = np.flatnonzero(u[:, 0] < p)
    return hit, xi.from_uniforms(u[hit, 1], u[hit, 2])


def sample_matrix(n: int, m: int, p: float, xi: XiSpec, seed: int, *,
                  strict: bool = True) -> SparseSample:
    """Draw an n x m matrix with iid Ber(p) * xi entries.

    ``strict=False`` admits any p in [0, 1] (test fixtures, dense sanity runs).
    """
    if n < 1 or m < 1:
        raise ContractViolation("matrix dimensions must be positive")
    p = _check_p(p, strict)
    seed = _check_seed(seed)
    rows, cols, vals = [], [], []
    for i in range(n):
        hit, v = _row_entries(seed, i, m, p, xi)
        rows.append(np.full(len(hit), i, dtype=np.int64))
        cols.append(hit.astype(np.int64))
        vals.append(v)
    return SparseSample(n, m, p, xi, seed, np.concatenate(rows), np.concatenate(cols),
                        np.concatenate(vals).astype(np.complex128))


def sample_row(length: int, p: float, xi: XiSpec, seed: int, index: int = 0, *,
               strict: bool = True) -> np.ndarray:
    """Row ``index`` of the matrix family keyed by ``seed``, first ``length`` entries."""
    p = _check_p(p, strict)
    seed = _check_seed(seed)
    out = np.zeros(length, dtype=np.complex128)
    hit, v = _row_entries(seed, index, length, p, xi)
    out[hit] = v
    return out


def sample_col(length: int, p: float, xi: XiSpec, seed: int, index: int = 0, *,
               strict: bool = True) -> np.ndarray:
    """Column ``index`` of the matrix family keyed by ``seed``, first ``length`` entries."""
    p = _check_p(p, strict)
    seed = _check_seed(seed)
    out = np.zeros(length, dtype=np.complex128)
    for i in range(length):
        u = _row_uniforms(seed, i, index + 1)[index]
        if u[0] < p:
            out[i] = xi.from_uniforms(u[1:2], u[2:3])[0]
    return out


@dataclass(frozen=True)
class ShiftSpec:
    """``raw`` gives A - zI; ``rescaled`` gives d^{-1/2} A - zI."""

    z: complex
    scale_mode: str = "rescaled"
    d: float | None = None

    def __post_init__(self):
        if self.scale_mode not in ("raw", "rescaled"):
            raise ContractViolation(f"unknown scale_mode {self.scale_mode!r}")
        if self.scale_mode == "rescaled" and (self.d is None or self.d <= 0):
            raise ContractViolation("rescaled mode needs d > 0")


def identity_block(rows: int, cols: int) -> np.ndarray:
    """Square identity, or the k x (k+1) identity used at half-integer times."""
    if cols not in (rows, rows + 1):
        raise ContractViolation(f"shape {rows}x{cols} is neither t x t nor t x (t+1)")
    return np.eye(rows, cols, dtype=np.complex128)


def shift_and_scale(A, spec: ShiftSpec) -> np.ndarray:
    M = as_matrix(A.to_dense() if isinstance(A, SparseSample) else A, name="A")
    rows, cols = M.shape
    eye = identity_block(rows, cols)
    if spec.scale_mode == "raw":
        return M - spec.z * eye
    return M / math.sqrt(spec.d) - spec.z * eye


