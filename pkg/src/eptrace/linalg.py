"""Dense complex linear algebra with left and right eigenvectors.

Left eigenvectors follow the transpose convention: ``left_k`` solves
``M.T @ left_k = value_k * left_k``.  With that choice the natural pairing
between left and right vectors is the bilinear c-product ``sum(u * v)``
(no conjugation), and for complex-symmetric matrices ``left_k == right_k``.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonConvergence, Singular

__all__ = [
    "TOL_EIG", "TOL_NORM", "TOL_SYM", "TOL_SOLVE", "GAP_MIN", "TOL_DEFECT",
    "EigenPair", "EigenSystem", "as_cmatrix", "as_cvector",
    "eig_general", "eig_right", "c_product", "h_product", "biorthonormalize",
    "solve_linear", "is_complex_symmetric", "tolerances", "current_tolerances",
]

TOL_EIG = 1e-10
TOL_NORM = 1e-8
TOL_SYM = 1e-8
TOL_SOLVE = 1e-10
GAP_MIN = 1e-8
TOL_DEFECT = 1e-3

_DEFAULTS = {
    "tol_eig": TOL_EIG, "tol_norm": TOL_NORM, "tol_sym": TOL_SYM,
    "tol_solve": TOL_SOLVE, "gap_min": GAP_MIN, "tol_defect": TOL_DEFECT,
}
_ACTIVE = ContextVar("eptrace_linalg_tolerances", default=_DEFAULTS)


def current_tolerances():
    return dict(_ACTIVE.get())


@contextmanager
def tolerances(**overrides):
    """Override default tolerances for calls made inside the block.

    The override is context-local, so concurrent threads are unaffected.
    """
    unknown = set(overrides) - set(_DEFAULTS)
    if unknown:
        raise TypeError(f"unknown tolerance(s): {sorted(unknown)}")
    token = _ACTIVE.set({**_ACTIVE.get(), **overrides})
    try:
        yield
    finally:
        _ACTIVE.reset(token)


def _tol(name, value):
    return _ACTIVE.get()[name] if value is None else value


# Relative pivot size below which an LU factorization is declared singular.
PIVOT_TOL = 1e-14


def as_cmatrix(m, square=False):
    """Return ``m`` as a finite 2-D complex128 array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def as_cvector(v):
    """Return ``v`` as a finite 1-D complex128 array."""
    a = np.asarray(v, dtype=complex)
    if a.ndim != 1 or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("vector has non-finite entries")
    return a


def c_product(u, v):
    """Bilinear product ``sum(u * v)`` without complex conjugation."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatch(f"c_product of shapes {u.shape} and {v.shape}")
    return complex(np.dot(u, v))


def h_product(u, v):
    """Hermitian inner product ``sum(conj(u) * v)``."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionMismatch(f"h_product of shapes {u.shape} and {v.shape}")
    return complex(np.vdot(u, v))


def is_complex_symmetric(m, tol=None):
    tol = _tol("tol_sym", tol)
    m = np.asarray(m)
    scale = np.linalg.norm(m)
    return bool(np.linalg.norm(m - m.T) <= tol * scale)


@dataclass(frozen=True)
class EigenPair:
    """One eigenvalue with its right and (transpose-convention) left vector."""

    value: complex
    right: np.ndarray
    left: np.ndarray
    c_norm: complex
    h_norm: float
    near_defective: bool = False

    @property
    def width(self):
        """Decay width ``-2 Im(value)``."""
        return -2.0 * self.value.imag

    @property
    def rigidity(self):
        """Phase rigidity ``c(right, right) / h(right, right)``."""
        return c_product(self.right, self.right) / self.h_norm


@dataclass(frozen=True)
class EigenSystem:
    """Full eigendecomposition of an N x N matrix.

    Eigenvectors are stored column-wise: ``right[:, k]`` and ``left[:, k]``
    belong to ``values[k]``.  Values are sorted by ascending real part, then
    ascending imaginary part, then original LAPACK index.
    """

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    max_residual: float
    near_defective: np.ndarray = field(default=None)
    normalized: bool = False
    max_cross: float | None = None

    def __post_init__(self):
        if self.near_defective is None:
            object.__setattr__(self, "near_defective", np.zeros(len(self.values), dtype=bool))

    @property
    def matrix_dim(self):
        return len(self.values)

    def __len__(self):
        return len(self.values)

    @property
    def c_norms(self):
        return np.sum(self.left * self.right, axis=0)

    @property
    def h_norms(self):
        return np.sum(np.abs(self.right) ** 2, axis=0)

    @property
    def widths(self):
        return -2.0 * self.values.imag

    @property
    def rigidities(self):
        """Complex phase rigidity of every right eigenvector."""
        return np.sum(self.right * self.right, axis=0) / self.h_norms

    def pair(self, k):
        r = self.right[:, k]
        l_ = self.left[:, k]
        return EigenPair(
            value=complex(self.values[k]),
            right=r,
            left=l_,
            c_norm=complex(np.dot(l_, r)),
            h_norm=float(np.vdot(r, r).real),
            near_defective=bool(self.near_defective[k]),
        )

    @property
    def pairs(self):
        return [self.pair(k) for k in range(len(self.values))]


def _fix_phase(vecs):
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    lead = vecs[idx, np.arange(vecs.shape[1])]
    mag = np.abs(lead)
    phase = np.where(mag > 0, lead / np.where(mag > 0, mag, 1.0), 1.0)
    return vecs / phase


def _colnorms(a):
    # cheaper than np.linalg.norm(axis=0) for the tiny matrices that dominate
    return np.sqrt(np.sum(a.real ** 2 + a.imag ** 2, axis=0))


def _fro(a):
    return float(np.sqrt(np.sum(a.real ** 2 + a.imag ** 2)))


def _residuals(m, values, vecs):
    r = m @ vecs - vecs * values
    norms = _colnorms(vecs)
    norms[norms == 0] = 1.0
    return _colnorms(r) / norms


def eig_general(m, tol_eig=None, tol_sym=None):
    """Eigenvalues with right and left eigenvectors of a general complex matrix.

    Parameters
    ----------
    m : array_like, shape (N, N)
        Square complex matrix with finite entries.
    tol_eig : float
        Every residual ``|M r - lambda r|`` (and the transpose counterpart
        for the left vectors) must be below ``tol_eig * ||M||_F``.
    tol_sym : float
        If ``||M - M^T||_F <= tol_sym * ||M||_F`` the matrix is treated as
        complex symmetric and left vectors are aligned with right vectors.

    Returns
    -------
    EigenSystem
        Raw (not biorthonormalized) decomposition.  Right vectors have unit
        Hermitian norm with the largest entry real positive.  Defective
        matrices still yield N values; their eigenvectors may be nearly
        parallel.

    Raises
    ------
    NonConvergence
        LAPACK failed or a residual exceeds the tolerance.
    """
    tol_eig = _tol("tol_eig", tol_eig)
    tol_sym = _tol("tol_sym", tol_sym)
    m = as_cmatrix(m, square=True)
    n = m.shape[0]
    scale = _fro(m)
    asym = _fro(m - m.T)
    try:
        if asym == 0.0:
            w, vr = scipy.linalg.eig(m, left=False, right=True, check_finite=False)
            vl = None
        else:
            w, vl, vr = scipy.linalg.eig(m, left=True, right=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigensolver failed: {exc}") from exc

    order = np.lexsort((np.arange(n), w.imag, w.real))
    w = w[order]
    vr = vr[:, order]
    vr = vr / _colnorms(vr)
    vr = _fix_phase(vr)

    if vl is None:
        left = vr.copy()
    else:
        # scipy returns vl with vl^H M = w vl^H, so conj(vl) is an eigenvector of M^T.
        left = vl[:, order].conj()
        left = left / _colnorms(left)
        if asym <= tol_sym * scale:
            # near-symmetric: rescale left onto right
            s = np.sum(left.conj() * vr, axis=0)
            mag = np.abs(s)
            left = left * np.where(mag > 0, s / np.where(mag > 0, mag, 1.0), 1.0)
        else:
            # make the raw c-norm real non-negative
            c = np.sum(left * vr, axis=0)
            mag = np.abs(c)
            left = left * np.where(mag > 0, mag / np.where(mag > 0, c, 1.0), 1.0)

    res = np.concatenate([_residuals(m, w, vr), _residuals(m.T, w, left)])
    worst = float(res.max()) if res.size else 0.0
    if worst > tol_eig * scale:
        raise NonConvergence(
            f"eigen residual {worst:.3e} exceeds {tol_eig:.1e} * ||M||_F = {tol_eig * scale:.3e}",
            worst_residual=worst,
        )
    return EigenSystem(values=w, right=vr, left=left, max_residual=worst)


def eig_right(m, tol_eig=None):
    """Sorted eigenvalues and unit right eigenvectors only.

    Same ordering, normalization and residual check as :func:`eig_general`
    but without left vectors; used where only right vectors are needed
    (branch tracing), at roughly half the cost for small matrices.
    """
    tol_eig = _tol("tol_eig", tol_eig)
    m = as_cmatrix(m, square=True)
    n = m.shape[0]
    try:
        w, vr = scipy.linalg.eig(m, left=False, right=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigensolver failed: {exc}") from exc
    order = np.lexsort((np.arange(n), w.imag, w.real))
    w = w[order]
    vr = _fix_phase(vr[:, order] / _colnorms(vr[:, order]))
    res = _residuals(m, w, vr)
    worst = float(res.max()) if res.size else 0.0
    if worst > tol_eig * _fro(m):
        raise NonConvergence(f"eigen residual {worst:.3e} exceeds tolerance", worst_residual=worst)
    return w, vr


def biorthonormalize(sys, tol_defect=None, tol_norm=None, gap_min=None):
    """Scale eigenvector pairs so that ``c_product(left_k, right_k) == 1``.

    Both vectors of a pair are divided by the principal square root of the
    raw c-norm, which keeps ``left == right`` for complex-symmetric input.
    The remaining sign freedom is fixed by putting the argument of the
    largest-magnitude right component in ``(-pi/2, pi/2]``.

    Pairs with ``|c_norm| < tol_defect * |left| * |right|`` are flagged in
    ``near_defective`` and left unscaled: dividing by a vanishing c-norm is
    exactly the blow-up that signals a nearby exceptional point.  A pair
    whose c-norm still misses 1 by more than ``tol_norm`` after scaling is
    flagged as well.

    ``max_cross`` on the result is the largest ``|c(left_i, right_j)|``
    over ``i != j`` with eigenvalue gap above ``gap_min``.
    """
    tol_defect = _tol("tol_defect", tol_defect)
    tol_norm = _tol("tol_norm", tol_norm)
    gap_min = _tol("gap_min", gap_min)
    right = sys.right.copy()
    left = sys.left.copy()
    c = np.sum(left * right, axis=0)
    size = np.linalg.norm(left, axis=0) * np.linalg.norm(right, axis=0)
    flags = np.abs(c) < tol_defect * size
    ok = ~flags
    s = np.sqrt(c[ok])
    right[:, ok] /= s
    left[:, ok] /= s

    idx = np.argmax(np.abs(right), axis=0)
    lead = right[idx, np.arange(right.shape[1])]
    ang = np.angle(lead)
    flip = ok & ((ang <= -np.pi / 2) | (ang > np.pi / 2))
    right[:, flip] *= -1
    left[:, flip] *= -1

    cross = np.abs(left.T @ right)
    flags = flags | (np.abs(np.diag(cross) - 1.0) > tol_norm) & ok
    w = sys.values
    far = np.abs(w[:, None] - w[None, :]) > gap_min
    max_cross = float(cross[far].max()) if far.any() else 0.0
    return replace(sys, right=right, left=left, near_defective=flags, normalized=True,
                   max_cross=max_cross)


def solve_linear(m, b, tol_solve=None):
    """Solve ``M x = b`` by LU with one step of iterative refinement.

    Raises
    ------
    Singular
        A pivot falls below ``PIVOT_TOL * ||M||_F`` or the residual stays
        above ``tol_solve * ||b||`` after refinement.
    """
    tol_solve = _tol("tol_solve", tol_solve)
    m = as_cmatrix(m, square=True)
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != m.shape[0]:
        raise DimensionMismatch(f"matrix is {m.shape}, right-hand side has {b.shape[0]} rows")
    scale = np.linalg.norm(m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    pivot = np.min(np.abs(np.diag(lu)))
    if scale == 0.0 or pivot <= PIVOT_TOL * scale:
        raise Singular(f"pivot {pivot:.3e} below threshold (||M||_F = {scale:.3e})")
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    r = b - m @ x
    bnorm = np.linalg.norm(b)
    if np.linalg.norm(r) > tol_solve * bnorm:
        x = x + scipy.linalg.lu_solve((lu, piv), r, check_finite=False)
        r = b - m @ x
        if np.linalg.norm(r) > tol_solve * bnorm:
            raise Singular(
                f"residual {np.linalg.norm(r):.3e} above {tol_solve:.1e} * ||b||; matrix ill-conditioned"
            )
    return x
