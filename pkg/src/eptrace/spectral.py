"""Eigenfunction diagnostics and exceptional-point (EP) tools.

Families are plain callables returning a square complex matrix.  Two-parameter
families take ``(x, y)``; path families used by :func:`trace_branches` take a
single path element, whatever its type.
"""

from __future__ import annotations

import contextvars
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateInput, LeftDomain, StalledAtNonzeroGap, ZeroVector
from .linalg import EigenPair, biorthonormalize, eig_general, eig_right

__all__ = [
    "TOL_EP_GAP", "TOL_EP_RIG", "OVERLAP_MIN",
    "phase_rigidity", "MixingResult", "mixing_matrix", "ep_two_level",
    "EPCandidate", "ep_search", "Trajectory", "trace_branches", "encircle",
    "RigidityMap", "rigidity_map", "OrthogonalityPoint", "orthogonality_scan",
    "coalescence_order",
]

TOL_EP_GAP = 1e-8
TOL_EP_RIG = 1e-3
OVERLAP_MIN = 0.6
FD_STEP = 1e-6


def phase_rigidity(pair):
    """Phase rigidity ``r = c(phi, phi) / h(phi, phi)`` of an eigenvector.

    ``pair`` is an :class:`EigenPair` or a bare vector.  ``|r| <= 1`` always;
    ``r = 1`` for a real vector and ``r = 0`` for a self-orthogonal one such
    as ``(1, i)``.  The value is invariant under ``phi -> c * phi``.
    """
    phi = pair.right if isinstance(pair, EigenPair) else np.asarray(pair, dtype=complex)
    hn = np.vdot(phi, phi).real
    if hn == 0.0:
        raise ZeroVector("phase rigidity of the zero vector is undefined")
    return complex(np.dot(phi, phi) / hn)


def _pmap(fn, items, max_workers):
    if max_workers is None or max_workers <= 1:
        return [fn(it) for it in items]
    ctx = contextvars.copy_context()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda it: ctx.copy().run(fn, it), items))


# ---------------------------------------------------------------- mixing

@dataclass(frozen=True)
class MixingResult:
    matrix: np.ndarray  # row k: components of state k along the h0 eigenvectors
    max_offdiag: float
    near_defective: tuple = ()


def mixing_matrix(sys, basis):
    """Components of the normalized eigenfunctions in the ``h0`` eigenbasis.

    Parameters
    ----------
    sys : EigenSystem
        Biorthonormalized on the fly if it is not already.
    basis : ClosedSystem
        Supplies the orthonormal reference vectors.

    Returns
    -------
    MixingResult
        ``matrix[k, m] = <u_m | phi_k>``.  ``max_offdiag`` is the external
        mixing measure ``max_{k != m} |matrix[k, m]|``; it diverges as the
        c-norm of a state vanishes.  Indices of near-defective states (left
        unnormalized) are passed through.
    """
    if not sys.normalized:
        sys = biorthonormalize(sys)
    _, u = basis.eigenbasis()
    if u.shape[0] != sys.right.shape[0]:
        raise ValueError("basis and eigensystem dimensions differ")
    b = (u.conj().T @ sys.right).T
    off = np.abs(b - np.diag(np.diag(b)))
    flagged = tuple(int(k) for k in np.flatnonzero(sys.near_defective))
    return MixingResult(b, float(off.max()) if b.shape[0] > 1 else 0.0, flagged)


# ---------------------------------------------------------------- EPs

def ep_two_level(e1, gamma1, e2, gamma2):
    """Couplings at which the two-level eigenvalues coalesce.

    The discriminant ``((eps1 - eps2)/2)**2 + omega**2`` vanishes at
    ``omega = +/- i (eps1 - eps2) / 2``.
    """
    half = 0.5 * (complex(e1, 0.5 * gamma1) - complex(e2, 0.5 * gamma2))
    if half == 0:
        raise DegenerateInput("eps1 == eps2: the matrix is degenerate at omega = 0 already")
    return 1j * half, -1j * half


@dataclass(frozen=True)
class EPCandidate:
    params: tuple
    pair_indices: tuple
    gap: float
    min_rigidity: float
    converged: bool
    values: tuple = ()
    iterations: int = 0


def _pt(p):
    return tuple(float(c) for c in p)


def _inside(p, domain):
    (x0, x1), (y0, y1) = domain
    return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


def _max_step(p, delta, domain):
    """Largest ``t <= 1`` keeping ``p + t * delta`` inside ``domain``."""
    t = 1.0
    for k, (lo, hi) in enumerate(domain):
        if delta[k] > 0:
            t = min(t, (hi - p[k]) / delta[k])
        elif delta[k] < 0:
            t = min(t, (lo - p[k]) / delta[k])
    return max(t, 0.0)


def _pick_pair(w, ref):
    i = int(np.argmin(np.abs(w - ref[0])))
    d = np.abs(w - ref[1])
    d[i] = np.inf
    return i, int(np.argmin(d))


def ep_search(family, domain, seed, pair=None, tol_ep_gap=TOL_EP_GAP,
              tol_ep_rig=TOL_EP_RIG, fd_step=FD_STEP, max_iter=100):
    """Locate an EP of a two-parameter matrix family.

    A damped Newton iteration drives the squared eigenvalue difference
    ``h = (lambda_i - lambda_j)**2`` to zero.  ``h`` is analytic near a
    generic EP (the gap itself has a square-root cusp there), so Newton on
    ``(Re h, Im h)`` converges quadratically while minimizing ``gap**2``.
    Derivatives are central differences with step ``fd_step`` times the
    domain extent.  Steps are halved until ``|h|`` decreases inside the domain.

    Parameters
    ----------
    family : callable
        ``family(x, y)`` returns a square complex matrix.
    domain : ((x_min, x_max), (y_min, y_max))
    seed : (x, y)
    pair : (i, j), optional
        Indices into the sorted spectrum at the seed.  Defaults to the
        closest pair.

    Returns
    -------
    EPCandidate
        ``converged`` is set when the gap is at most
        ``tol_ep_gap * max(1, ||M(seed)||_F)`` and the smaller phase rigidity
        of the pair at most ``tol_ep_rig``.  A degeneracy with rigidity near
        one (diabolic point) is returned with ``converged = False``.  So is
        a point where the iteration can make no further progress while the
        rigidity is already below ``tol_ep_rig``: the eigenvalue gap at a
        generic EP cannot be resolved below about ``sqrt(eps) * ||M||``.

    Raises
    ------
    LeftDomain
        The seed lies outside ``domain`` or the iteration is pushed out.
    StalledAtNonzeroGap
        No further decrease possible with a finite gap and rigidity above
        ``tol_ep_rig`` (avoided crossing).
    """
    (x0, x1), (y0, y1) = domain
    p = np.array(seed, dtype=float)
    if not _inside(p, domain):
        raise LeftDomain(f"seed {_pt(p)} outside domain {domain}", point=_pt(p))
    steps = fd_step * np.array([x1 - x0, y1 - y0], dtype=float)

    m0 = family(*p)
    gap_tol = tol_ep_gap * max(1.0, float(np.linalg.norm(m0)))
    sys = eig_general(m0)
    w = sys.values
    if pair is None:
        d = np.abs(w[:, None] - w[None, :])
        d[np.diag_indices_from(d)] = np.inf
        pair = np.unravel_index(np.argmin(d), d.shape)
    ref = (complex(w[pair[0]]), complex(w[pair[1]]))

    def evaluate(q, ref):
        s = eig_general(family(*q))
        i, j = _pick_pair(s.values, ref)
        return complex((s.values[i] - s.values[j]) ** 2), s, (i, j)

    def candidate(s, ij, it, converged=None):
        a, b = complex(s.values[ij[0]]), complex(s.values[ij[1]])
        gap = abs(a - b)
        rig = float(np.min(np.abs(s.rigidities[list(ij)])))
        if converged is None:
            converged = gap <= gap_tol and rig <= tol_ep_rig
        return EPCandidate((float(p[0]), float(p[1])), (int(ij[0]), int(ij[1])),
                           gap, rig, converged, (a, b), it)

    h, sys, ij = evaluate(p, ref)
    for it in range(1, max_iter + 1):
        cand = candidate(sys, ij, it - 1)
        if cand.converged:
            return cand
        ref = (complex(sys.values[ij[0]]), complex(sys.values[ij[1]]))
        jac = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = steps[k]
            hp = evaluate(p + e, ref)[0]
            hm = evaluate(p - e, ref)[0]
            dh = (hp - hm) / (2 * steps[k])
            jac[:, k] = dh.real, dh.imag
        delta = np.linalg.lstsq(jac, -np.array([h.real, h.imag]), rcond=None)[0]

        accepted = False
        t = _max_step(p, delta, domain)
        blocked = t < 1e-12
        for _ in range(40):
            q = np.clip(p + t * delta, [x0, y0], [x1, y1])
            if np.array_equal(q, p):
                break
            hq, sq, ijq = evaluate(q, ref)
            if abs(hq) < abs(h):
                p, h, sys, ij = q, hq, sq, ijq
                accepted = True
                break
            t *= 0.5
        if not accepted:
            final = candidate(sys, ij, it)
            if final.converged or final.gap <= gap_tol or final.min_rigidity <= tol_ep_rig:
                return final
            if blocked:
                raise LeftDomain(
                    f"EP search pushed out of domain {domain} at {_pt(p)}", point=_pt(p))
            raise StalledAtNonzeroGap(
                f"EP search stalled at {_pt(p)} with gap {final.gap:.3e}", candidate=final)
    return candidate(sys, ij, max_iter)


# ---------------------------------------------------------------- branches

@dataclass
class Trajectory:
    """Eigenvalue branches followed along a parameter path.

    ``values[t, b]`` is the eigenvalue of branch ``b`` at path point ``t``;
    ``overlaps[t - 1, b]`` the Hermitian overlap used to continue branch
    ``b`` into step ``t``.  For a closed path, ``permutation[b]`` is the
    initial branch whose state branch ``b`` ends on.
    """

    path: list
    values: np.ndarray
    rigidities: np.ndarray
    overlaps: np.ndarray
    ambiguous_steps: list = field(default_factory=list)
    closed: bool = False
    permutation: list | None = None


def _unit(vecs):
    return vecs / np.linalg.norm(vecs, axis=0)


def _match(prev, new):
    """Assignment of columns of ``new`` to columns of ``prev`` by overlap."""
    ov = np.abs(prev.conj().T @ new)
    rows, cols = linear_sum_assignment(ov, maximize=True)
    assign = np.empty(len(rows), dtype=int)
    assign[rows] = cols
    return assign, ov[rows, cols][np.argsort(rows)]


def _same_point(a, b):
    return bool(np.allclose(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex),
                            rtol=0.0, atol=1e-12))


def trace_branches(family, path, overlap_min=OVERLAP_MIN):
    """Follow every eigenvalue branch of ``family`` along ``path``.

    Consecutive eigensystems are matched by maximizing the summed modulus of
    Hermitian overlaps between unit right eigenvectors (an optimal
    assignment, not greedy).  Steps whose weakest matched overlap falls
    below ``overlap_min`` are listed in ``ambiguous_steps``; refine the
    path there.  If the first and last path points coincide the loop
    permutation is computed by matching the final states to the initial ones.
    """
    path = list(path)
    if len(path) < 2:
        raise ValueError("path needs at least two points")
    w0, start = eig_right(family(path[0]))
    n = len(w0)
    vals = np.empty((len(path), n), dtype=complex)
    rigs = np.empty((len(path), n), dtype=complex)
    overlaps = np.empty((len(path) - 1, n))
    vals[0] = w0
    rigs[0] = np.sum(start * start, axis=0)
    prev = start
    ambiguous = []
    for t in range(1, len(path)):
        w, vecs = eig_right(family(path[t]))
        assign, ov = _match(prev, vecs)
        prev = vecs[:, assign]
        vals[t] = w[assign]
        # unit vectors, so r = c(phi, phi)
        rigs[t] = np.sum(prev * prev, axis=0)
        overlaps[t - 1] = ov
        if ov.min() < overlap_min:
            ambiguous.append(t)

    closed = _same_point(path[0], path[-1])
    perm = None
    if closed:
        assign, _ = _match(prev, start)
        perm = [int(a) for a in assign]
    return Trajectory(path, vals, rigs, overlaps, ambiguous, closed, perm)


def encircle(family, center, radius, n_points=400, overlap_min=OVERLAP_MIN):
    """Trace branches around a circle in the ``(x, y)`` plane of ``family``.

    The path starts at angle 0 and returns exactly to its first point, so
    the returned trajectory is closed and carries a permutation.
    """
    cx, cy = center
    theta = np.linspace(0.0, 2 * np.pi, n_points + 1)
    pts = [(cx + radius * np.cos(a), cy + radius * np.sin(a)) for a in theta[:-1]]
    pts.append(pts[0])
    traj = trace_branches(lambda q: family(*q), pts, overlap_min=overlap_min)
    return traj, theta


# ---------------------------------------------------------------- rigidity map

@dataclass
class RigidityMap:
    """Phase rigidity of every state over a rectangular grid.

    ``r[ix, iy, k]``; flattening ``r`` in C order walks the grid row-major
    (x outer, y inner).
    """

    xs: np.ndarray
    ys: np.ndarray
    r: np.ndarray
    near_defective: np.ndarray

    @property
    def abs_r(self):
        return np.abs(self.r)

    def rows(self):
        for ix, x in enumerate(self.xs):
            for iy, y in enumerate(self.ys):
                for k, rk in enumerate(self.r[ix, iy]):
                    yield float(x), float(y), k, complex(rk)


def rigidity_map(family, xs, ys, tol_defect=None, max_workers=None):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    pts = [(x, y) for x in xs for y in ys]

    def one(q):
        s = biorthonormalize(eig_general(family(*q)), tol_defect=tol_defect)
        return s.rigidities, s.near_defective

    out = _pmap(one, pts, max_workers)
    n = len(out[0][0])
    r = np.array([o[0] for o in out]).reshape(len(xs), len(ys), n)
    flags = np.array([o[1] for o in out]).reshape(len(xs), len(ys), n)
    return RigidityMap(xs, ys, r, flags)


# ---------------------------------------------------------------- orthogonality

@dataclass(frozen=True)
class OrthogonalityPoint:
    x: float
    y: float
    i: int
    j: int
    overlap: float  # |<phi_i|phi_j>| / (|phi_i| |phi_j|)
    refined: bool = False


def _normalized_vectors(family, x, y):
    s = biorthonormalize(eig_general(family(x, y)))
    return s.right


def _align(ref, vecs):
    """Reorder ``vecs`` onto ``ref`` states and fix signs by continuity."""
    assign, _ = _match(_unit(ref), _unit(vecs))
    v = vecs[:, assign]
    sgn = np.sign(np.sum(ref.conj() * v, axis=0).real)
    sgn[sgn == 0] = 1.0
    return v * sgn


def _overlap(vecs, i, j):
    a, b = vecs[:, i], vecs[:, j]
    return complex(np.vdot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def _straddles(vals):
    re = [v.real for v in vals]
    im = [v.imag for v in vals]
    return min(re) <= 0.0 <= max(re) and min(im) <= 0.0 <= max(im)


def orthogonality_scan(family, xs, ys, tol_orth=1e-6, max_depth=40, max_evals=4000):
    """Points where two eigenfunctions are Hermitian-orthogonal.

    Every grid point with ``|<phi_i|phi_j>| < tol_orth`` (unit vectors) is
    reported.  In addition, each grid cell whose corners show sign changes
    of both the real and the imaginary part of the overlap (eigenvectors
    biorthonormalized and sign-aligned to the cell's first corner) is
    bisected recursively into quarters; the first point found below
    ``tol_orth`` is reported with ``refined = True``.  Cells that already
    have a reported corner for the pair are not refined.  All pairs
    ``i < j`` of the sorted spectrum are scanned.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    grid = [[_normalized_vectors(family, x, y) for y in ys] for x in xs]
    n = grid[0][0].shape[1]
    found = []
    hit = set()
    for ix, x in enumerate(xs):
        for iy, y in enumerate(ys):
            for i in range(n):
                for j in range(i + 1, n):
                    g = abs(_overlap(grid[ix][iy], i, j))
                    if g < tol_orth:
                        found.append(OrthogonalityPoint(float(x), float(y), i, j, g))
                        hit.add((ix, iy, i, j))

    for ix in range(len(xs) - 1):
        for iy in range(len(ys) - 1):
            corners = [(ix, iy), (ix + 1, iy), (ix, iy + 1), (ix + 1, iy + 1)]
            ref = grid[ix][iy]
            aligned = [_align(ref, grid[a][b]) for a, b in corners]
            for i in range(n):
                for j in range(i + 1, n):
                    if any((a, b, i, j) in hit for a, b in corners):
                        continue
                    if not _straddles([_overlap(v, i, j) for v in aligned]):
                        continue
                    pt = _refine_cell(family, ref, i, j, xs[ix], xs[ix + 1], ys[iy], ys[iy + 1],
                                      tol_orth, max_depth, max_evals)
                    if pt is not None:
                        found.append(pt)
    return found


def _refine_cell(family, ref, i, j, x0, x1, y0, y1, tol_orth, max_depth, max_evals):
    cache = {}
    budget = [max_evals]

    def g_at(x, y):
        key = (x, y)
        if key not in cache:
            budget[0] -= 1
            cache[key] = _overlap(_align(ref, _normalized_vectors(family, x, y)), i, j)
        return cache[key]

    def visit(xa, xb, ya, yb, depth):
        if budget[0] <= 0:
            return None
        xm, ym = 0.5 * (xa + xb), 0.5 * (ya + yb)
        gm = g_at(xm, ym)
        if abs(gm) < tol_orth:
            return OrthogonalityPoint(float(xm), float(ym), i, j, abs(gm), refined=True)
        if depth >= max_depth:
            return None
        for qa, qb, ra, rb in ((xa, xm, ya, ym), (xm, xb, ya, ym), (xa, xm, ym, yb), (xm, xb, ym, yb)):
            vals = [g_at(qa, ra), g_at(qb, ra), g_at(qa, rb), g_at(qb, rb)]
            for v, (px, py) in zip(vals, ((qa, ra), (qb, ra), (qa, rb), (qb, rb))):
                if abs(v) < tol_orth:
                    return OrthogonalityPoint(float(px), float(py), i, j, abs(v), refined=True)
            if _straddles(vals):
                res = visit(qa, qb, ra, rb, depth + 1)
                if res is not None:
                    return res
        return None

    return visit(x0, x1, y0, y1, 0)


# ---------------------------------------------------------------- clusters

def coalescence_order(sys, tol_cluster):
    """Size of the largest eigenvalue cluster under single linkage.

    ``sys`` may be an :class:`EigenSystem` or an array of eigenvalues.
    """
    w = np.asarray(getattr(sys, "values", sys), dtype=complex)
    n = len(w)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if abs(w[a] - w[b]) <= tol_cluster:
                parent[find(a)] = find(b)
    roots = [find(a) for a in range(n)]
    return max(roots.count(r) for r in set(roots)) if n else 0
