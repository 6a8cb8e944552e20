"""S-matrix, cross sections and resonance-trapping sweeps.

For the wideband model the S-matrix is

    S(E) = I - i alpha V^dagger (E - H_eff)^-1 V,   H_eff = H0 - (i/2) alpha V V^dagger,

which is exactly unitary for real ``E``.  Cross sections are the
dimensionless ``|delta_cc' - S_cc'|**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import PoleProximity, Singular
from .hamiltonian import build_energy_dependent, build_wideband
from .linalg import eig_general, solve_linear

__all__ = [
    "PEAK_PROMINENCE", "SMatrix", "s_matrix", "s_matrix_energy_dependent",
    "CrossSection", "cross_section", "TrappingSweep", "trapping_sweep", "peak_count",
]

PEAK_PROMINENCE = 0.05


@dataclass(frozen=True)
class SMatrix:
    energy: float
    entries: np.ndarray
    open_channels: np.ndarray | None = None

    def unitarity_defect(self):
        s = self.entries
        return float(np.linalg.norm(s.conj().T @ s - np.eye(s.shape[0])))


def _resolvent_apply(h, energy, v, pinv_fallback):
    a = energy * np.eye(h.shape[0]) - h
    try:
        return solve_linear(a, v), False
    except Singular as exc:
        if not pinv_fallback:
            raise PoleProximity(f"E = {energy} is at a pole: {exc}") from exc
        # the singular direction of a fully trapped state is orthogonal to range(V)
        return np.linalg.pinv(a) @ v, True


def s_matrix(cs, ch, alpha, energy):
    """Wideband S-matrix at real energy ``E``.

    Raises
    ------
    PoleProximity
        ``E - H_eff`` is numerically singular.
    """
    return _s_matrix(cs, ch, alpha, energy, pinv_fallback=False)[0]


def _s_matrix(cs, ch, alpha, energy, pinv_fallback):
    h = build_wideband(cs, ch, alpha).matrix
    v = ch.v
    g, flagged = _resolvent_apply(h, energy, v, pinv_fallback)
    s = np.eye(ch.n_channels, dtype=complex) - 1j * alpha * (v.conj().T @ g)
    return SMatrix(float(energy), s), flagged


def s_matrix_energy_dependent(cs, ch, energy):
    """S-matrix from the energy-dependent effective Hamiltonian.

    Only channels whose band contains ``E`` are open; closed channels get
    ``S_cc = 1`` and no coupling to the rest.  Within the open block
    ``S = I - 2 pi i W^dagger (E - H_eff(E))^-1 W`` with
    ``W_c = sqrt(rho_c) v_c``.  No unitarity guarantee is made near band
    edges.
    """
    h = build_energy_dependent(cs, ch, energy).matrix
    open_ = np.array([b.contains(energy) for b in ch.bands])
    s = np.eye(ch.n_channels, dtype=complex)
    if open_.any():
        rho = np.array([b.rho for b in ch.bands])[open_]
        w = ch.v[:, open_] * np.sqrt(rho)
        g, _ = _resolvent_apply(h, energy, w, pinv_fallback=False)
        idx = np.flatnonzero(open_)
        s[np.ix_(idx, idx)] -= 2j * np.pi * (w.conj().T @ g)
    return SMatrix(float(energy), s, open_)


@dataclass
class CrossSection:
    energies: np.ndarray
    values: np.ndarray
    channels: tuple = (0, 0)
    pole_points: list = field(default_factory=list)


def cross_section(cs, ch, alpha, grid, c=0, c_out=0):
    """``|delta - S_{c c_out}(E)|**2`` on an increasing energy grid.

    Grid points where ``E - H_eff`` is singular are evaluated with a
    pseudo-inverse and their indices listed in ``pole_points``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("energy grid must be a non-empty strictly increasing sequence")
    delta = 1.0 if c == c_out else 0.0
    vals = np.empty(len(grid))
    poles = []
    for k, e in enumerate(grid):
        s, flagged = _s_matrix(cs, ch, alpha, e, pinv_fallback=True)
        vals[k] = abs(delta - s.entries[c, c_out]) ** 2
        if flagged:
            poles.append(k)
    return CrossSection(grid, vals, (c, c_out), poles)


@dataclass
class TrappingSweep:
    """Widths along an increasing coupling grid.

    ``widths[t]`` holds ``Gamma_k = -2 Im lambda_k`` at ``alphas[t]``,
    sorted descending.  ``increasing[t]`` counts sorted positions whose
    width grows from ``alphas[t]`` to ``alphas[t + 1]``.
    """

    alphas: np.ndarray
    widths: np.ndarray
    sum_residuals: np.ndarray
    relative_residuals: np.ndarray
    increasing: np.ndarray

    @property
    def decreasing(self):
        return self.widths.shape[1] - self.increasing


def trapping_sweep(cs, ch, alphas):
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or len(alphas) < 2 or np.any(np.diff(alphas) <= 0):
        raise ValueError("alpha grid must be strictly increasing with at least two points")
    total = float(np.sum(np.abs(ch.v) ** 2))
    widths = np.empty((len(alphas), cs.n))
    res = np.empty(len(alphas))
    for t, a in enumerate(alphas):
        w = eig_general(build_wideband(cs, ch, a).matrix).values
        g = np.sort(-2.0 * w.imag)[::-1]
        widths[t] = g
        res[t] = abs(g.sum() - a * total)
    expected = alphas * total
    rel = np.divide(res, expected, out=res.copy(), where=expected > 0)
    inc = np.sum(np.diff(widths, axis=0) > 0, axis=1)
    return TrappingSweep(alphas, widths, res, rel, inc)


def peak_count(xs, prominence=PEAK_PROMINENCE):
    """Number of strictly interior local maxima with relative prominence.

    The caller is responsible for a grid dense enough to resolve the
    narrowest resonance.
    """
    vals = np.asarray(getattr(xs, "values", xs), dtype=float)
    top = float(np.max(vals)) if vals.size else 0.0
    if top <= 0.0:
        return 0
    peaks, _ = find_peaks(vals, prominence=prominence * top)
    return int(len(peaks))
