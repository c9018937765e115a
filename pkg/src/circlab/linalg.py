"""Dense complex linear algebra kernels.

Production paths call LAPACK through numpy; ``golub_kahan_singular_values`` is a
from-scratch Householder bidiagonalization plus implicit-shift QR used as an
independent cross-check of the singular values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative tolerance for equality contracts, scaled by matrix norm.
RTOL = 1e-8


class ContractViolation(ValueError):
    """An input violated an operation's stated precondition."""


class NumericalFailure(RuntimeError):
    def __init__(self, message: str, shape=None, seed=None):
        detail = f"{message} (shape={shape}, seed={seed})"
        super().__init__(detail)
        self.shape = shape
        self.seed = seed


def as_matrix(M, *, name: str = "M") -> np.ndarray:
    """Validate and return ``M`` as a 2-D complex128 array."""
    A = np.asarray(M, dtype=np.complex128)
    if A.ndim != 2:
        raise ContractViolation(f"{name} must be 2-D, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise ContractViolation(f"{name} has non-finite entries")
    return A


@dataclass(frozen=True)
class SingularSpectrum:
    """Descending singular values, optionally with singular vectors.

    ``left`` holds u_i as columns (rows x k), ``right`` holds v_i as columns
    (cols x k), so that ``M @ right[:, i] == values[i] * left[:, i]``.
    """

    values: np.ndarray
    left: np.ndarray | None = None
    right: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.values)

    def sigma(self, i: int) -> float:
        """1-based singular value with the convention sigma_i = 0 past the end."""
        if i < 1:
            raise ContractViolation("singular value index is 1-based")
        return float(self.values[i - 1]) if i <= len(self.values) else 0.0


@dataclass(frozen=True)
class EigenSpectrum:
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def hs_norm_sq(M) -> float:
    """Squared Hilbert-Schmidt norm, the entrywise sum of |M_ij|^2."""
    A = as_matrix(M)
    return float(np.sum(A.real**2 + A.imag**2))


def svd(M, want_vectors: bool = False, *, seed=None) -> SingularSpectrum:
    A = as_matrix(M)
    if A.size == 0:
        raise ContractViolation("svd of an empty matrix")
    try:
        if want_vectors:
            U, s, Vh = np.linalg.svd(A, full_matrices=False)
        else:
            s = np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}", A.shape, seed) from exc
    hs = hs_norm_sq(A)
    if abs(float(np.sum(s**2)) - hs) > RTOL * max(hs, 1e-300) + 1e-300:
        raise NumericalFailure("sum of squared singular values disagrees with HS norm",
                               A.shape, seed)
    if want_vectors:
        return SingularSpectrum(s, U, Vh.conj().T)
    return SingularSpectrum(s)


def eigenvalues(M, *, seed=None) -> EigenSpectrum:
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"eigenvalues need a square matrix, got {A.shape}")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue QR did not converge: {exc}", A.shape, seed) from exc
    return EigenSpectrum(lam)


def right_singular_basis(M) -> tuple[np.ndarray, np.ndarray]:
    """All ``cols`` right-singular directions and their values, descending.

    Wide matrices get zero singular values for the null directions, matching
    the convention sigma_r(M) = 0 for r beyond the row count.
    """
    A = as_matrix(M)
    try:
        _, s, Vh = np.linalg.svd(A, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}", A.shape) from exc
    cols = A.shape[1]
    padded = np.zeros(cols)
    padded[: len(s)] = s
    return padded, Vh.conj().T


def small_singular_projection_norm(M, h: int, x, *, return_tie: bool = False):
    """Norm of the projection of ``x`` onto the h smallest right-singular directions.

    With ``return_tie`` the result is ``(norm, tie)`` where ``tie`` flags equal
    singular values straddling the cut, in which case the subspace is one of
    several valid choices.
    """
    A = as_matrix(M)
    cols = A.shape[1]
    if not 1 <= h <= cols:
        raise ContractViolation(f"h={h} outside [1, {cols}]")
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (cols,):
        raise ContractViolation(f"x has shape {x.shape}, expected ({cols},)")
    s, V = right_singular_basis(A)
    W = V[:, cols - h:]
    norm = float(np.linalg.norm(W.conj().T @ x))
    if not return_tie:
        return norm
    tie = False
    if h < cols:
        hi, lo = s[cols - h - 1], s[cols - h]
        tie = bool(hi - lo <= RTOL * max(s[0], 1.0))
    return norm, tie


def _householder(x: np.ndarray) -> tuple[np.ndarray, float]:
    # Reflector H = I - beta v v^H with H x = -phase(x0) |x| e_1.
    v = x.astype(np.complex128).copy()
    alpha = np.linalg.norm(x)
    if alpha == 0.0:
        return v, 0.0
    phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
    v[0] += phase * alpha
    vnorm2 = float(np.vdot(v, v).real)
    return v, 2.0 / vnorm2


def bidiagonalize(M) -> tuple[np.ndarray, np.ndarray]:
    """Reduce ``M`` to real upper bidiagonal form by Householder reflections.

    Returns the diagonal and superdiagonal. Phases are absorbed into diagonal
    unitaries, which leave singular values unchanged.
    """
    B = as_matrix(M).copy()
    if B.shape[0] < B.shape[1]:
        B = B.conj().T
    m, n = B.shape
    for j in range(n):
        v, beta = _householder(B[j:, j])
        if beta:
            B[j:, j:] -= beta * np.outer(v, v.conj() @ B[j:, j:])
        if j < n - 2:
            v, beta = _householder(B[j, j + 1:].conj())
            if beta:
                B[j:, j + 1:] -= beta * np.outer(B[j:, j + 1:] @ v, v.conj())
    d = np.abs(np.diag(B)[:n])
    e = np.abs(np.diag(B, 1)[: n - 1])
    return d, e


def _givens(a: float, b: float) -> tuple[float, float, float]:
    r = float(np.hypot(a, b))
    if r == 0.0:
        return 1.0, 0.0, 0.0
    return a / r, b / r, r


def golub_kahan_singular_values(M, max_sweeps: int = 75) -> np.ndarray:
    """Singular values by bidiagonalization and implicit Wilkinson-shift QR.

    O(n^3) pure-numpy reference, intended for matrices up to a few dozen rows.
    """
    d, e = bidiagonalize(M)
    n = len(d)
    B = np.diag(d) + np.diag(e, 1) if n > 1 else np.diag(d)
    eps = np.finfo(float).eps
    scale = max(float(np.max(np.abs(B))) if B.size else 0.0, 1e-300)
    cap = max_sweeps * max(n, 1)
    for _ in range(cap):
        for i in range(n - 1):
            if abs(B[i, i + 1]) <= eps * (abs(B[i, i]) + abs(B[i + 1, i + 1])):
                B[i, i + 1] = 0.0
        q = n - 1
        while q > 0 and B[q - 1, q] == 0.0:
            q -= 1
        if q == 0:
            return np.sort(np.abs(np.diag(B)))[::-1]
        p = q - 1
        while p > 0 and B[p - 1, p] != 0.0:
            p -= 1
        # Active unreduced block is B[p:q+1, p:q+1].
        zero = next((i for i in range(p, q + 1) if abs(B[i, i]) <= eps * scale), None)
        if zero is not None:
            B[zero, zero] = 0.0
            if zero < q:
                _chase_zero_row(B, zero, q)
            else:
                _chase_zero_col(B, p, q)
            continue
        _gk_step(B, p, q)
    raise NumericalFailure("Golub-Kahan QR exceeded its sweep cap", (n, n))


def _chase_zero_row(B: np.ndarray, i: int, q: int) -> None:
    # d_i == 0: rotate row i against rows j > i until its superdiagonal is gone.
    for j in range(i + 1, q + 1):
        a, b = B[j, j], B[i, j]
        if b == 0.0:
            break
        c, s, _ = _givens(a, b)
        row_j, row_i = B[j].copy(), B[i].copy()
        B[j] = c * row_j + s * row_i
        B[i] = -s * row_j + c * row_i
        B[i, j] = 0.0


def _chase_zero_col(B: np.ndarray, p: int, q: int) -> None:
    # d_q == 0: rotate column q against columns j < q until its entries are gone.
    for j in range(q - 1, p - 1, -1):
        a, b = B[j, j], B[j, q]
        if b == 0.0:
            break
        c, s, _ = _givens(a, b)
        col_j, col_q = B[:, j].copy(), B[:, q].copy()
        B[:, j] = c * col_j + s * col_q
        B[:, q] = -s * col_j + c * col_q
        B[j, q] = 0.0


def _gk_step(B: np.ndarray, p: int, q: int) -> None:
    d = np.diag(B)
    f = B[q - 1, q]
    g = B[q - 2, q - 1] if q - 2 >= p else 0.0
    # Wilkinson shift from the trailing 2x2 of B^T B.
    t11 = d[q - 1] ** 2 + g**2
    t22 = d[q] ** 2 + f**2
    t12 = d[q - 1] * f
    delta = (t11 - t22) / 2.0
    denom = delta + np.copysign(np.hypot(delta, t12), delta if delta != 0 else 1.0)
    mu = t22 - t12**2 / denom if denom != 0 else t22
    y = d[p] ** 2 - mu
    z = d[p] * B[p, p + 1]
    for k in range(p, q):
        c, s, _ = _givens(y, z)
        col_k, col_k1 = B[:, k].copy(), B[:, k + 1].copy()
        B[:, k] = c * col_k + s * col_k1
        B[:, k + 1] = -s * col_k + c * col_k1
        y, z = B[k, k], B[k + 1, k]
        c, s, _ = _givens(y, z)
        row_k, row_k1 = B[k].copy(), B[k + 1].copy()
        B[k] = c * row_k + s * row_k1
        B[k + 1] = -s * row_k + c * row_k1
        B[k + 1, k] = 0.0
        if k < q - 1:
            y, z = B[k, k + 1], B[k, k + 2]


def hoffman_wielandt_gap(A, B) -> float:
    """||A - B||_HS^2 - sum_i (sigma_i(A) - sigma_i(B))^2, nonnegative for equal shapes."""
    A, B = as_matrix(A, name="A"), as_matrix(B, name="B")
    if A.shape != B.shape:
        raise ContractViolation(f"shapes differ: {A.shape} vs {B.shape}")
    sa = np.linalg.svd(A, compute_uv=False)
    sb = np.linalg.svd(B, compute_uv=False)
    return hs_norm_sq(A - B) - float(np.sum((sa - sb) ** 2))
