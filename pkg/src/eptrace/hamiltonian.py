"""Builders for the non-Hermitian Hamiltonians.

Three constructions are provided:

* ``build_wideband``: ``H0 - (i/2) * alpha * V V^dagger`` with an
  energy-independent coupling strength ``alpha``.
* ``build_energy_dependent``: ``H0 + sum_c F_c(E) v_c v_c^dagger`` where each
  channel is a flat band of constant level density ``rho_c`` on
  ``[e_min_c, e_max_c]``.  ``Re F`` is the principal-value integral
  ``rho ln|(E - e_min)/(e_max - E)|`` and ``Im F = -pi rho`` inside the band.
* ``build_two_level``: the 2x2 matrix ``[[e1 + i g1/2, w], [w, e2 + i g2/2]]``.

Widths are reported as ``Gamma = -2 Im(lambda)`` throughout, so decaying
states of the effective Hamiltonians have ``Gamma >= 0``.  The two-level
builder keeps the ``+ i gamma/2`` diagonal literally; a decaying state there
is obtained with negative ``gamma``.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .errors import BandEdge, DimensionMismatch
from .linalg import as_cmatrix, eig_general

__all__ = [
    "ClosedSystem", "Band", "ChannelSet", "TwoLevelParams", "EffectiveHamiltonian",
    "Pole", "build_wideband", "band_function", "build_energy_dependent",
    "solve_poles", "build_two_level", "two_level_eigs",
]

EDGE_EPS = 1e-9
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class ClosedSystem:
    """Hermitian Hamiltonian ``h0`` of the closed system."""

    h0: np.ndarray

    def __post_init__(self):
        h0 = as_cmatrix(self.h0, square=True)
        scale = max(np.linalg.norm(h0), 1.0)
        if np.linalg.norm(h0 - h0.conj().T) > HERMITIAN_TOL * scale:
            raise ValueError("h0 is not Hermitian")
        object.__setattr__(self, "h0", h0)

    @classmethod
    def from_levels(cls, levels):
        return cls(np.diag(np.asarray(levels, dtype=float)).astype(complex))

    @property
    def n(self):
        return self.h0.shape[0]

    def eigenbasis(self):
        """Eigenvalues and orthonormal eigenvectors (columns) of ``h0``.

        Each eigenvector is rotated so its largest entry is real positive.
        """
        e, u = np.linalg.eigh(self.h0)
        idx = np.argmax(np.abs(u), axis=0)
        lead = u[idx, np.arange(u.shape[1])]
        return e, u * (np.abs(lead) / lead)


@dataclass(frozen=True)
class Band:
    e_min: float
    e_max: float
    rho: float

    def __post_init__(self):
        if not (np.isfinite(self.e_min) and np.isfinite(self.e_max) and self.e_min < self.e_max):
            raise ValueError(f"band needs finite e_min < e_max, got ({self.e_min}, {self.e_max})")
        if not self.rho > 0:
            raise ValueError(f"band level density must be positive, got {self.rho}")

    def contains(self, energy):
        return self.e_min < energy < self.e_max


@dataclass(frozen=True)
class ChannelSet:
    """Couplings ``v`` (N x C, column c couples to channel c) and channel bands.

    ``bands`` may be omitted when only the wideband builder is used.
    """

    v: np.ndarray
    bands: tuple = ()

    def __post_init__(self):
        v = as_cmatrix(self.v)
        object.__setattr__(self, "v", v)
        bands = tuple(b if isinstance(b, Band) else Band(**b) for b in self.bands)
        if bands and len(bands) != v.shape[1]:
            raise DimensionMismatch(f"{v.shape[1]} channels but {len(bands)} bands")
        object.__setattr__(self, "bands", bands)

    @property
    def n_states(self):
        return self.v.shape[0]

    @property
    def n_channels(self):
        return self.v.shape[1]


@dataclass(frozen=True)
class TwoLevelParams:
    e1: float
    gamma1: float
    e2: float
    gamma2: float
    omega: complex

    def __post_init__(self):
        vals = (self.e1, self.gamma1, self.e2, self.gamma2, self.omega)
        if not all(np.isfinite(x) for x in vals):
            raise ValueError("two-level parameters must be finite")

    @property
    def eps1(self):
        return complex(self.e1, 0.5 * self.gamma1)

    @property
    def eps2(self):
        return complex(self.e2, 0.5 * self.gamma2)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    matrix: np.ndarray
    kind: str
    parameter: float | None = None
    provenance: dict = field(default_factory=dict, compare=False)


def _check_dims(cs, ch):
    if cs.n != ch.n_states:
        raise DimensionMismatch(f"h0 is {cs.n}x{cs.n} but v has {ch.n_states} rows")


def build_wideband(cs, ch, alpha):
    """``H0 - (i/2) alpha V V^dagger``; ``alpha = 0`` returns ``H0`` unchanged."""
    _check_dims(cs, ch)
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    v = ch.v
    m = cs.h0 - 0.5j * alpha * (v @ v.conj().T)
    return EffectiveHamiltonian(m, "wideband", float(alpha), {"closed": cs, "channels": ch})


def band_function(band, energy):
    """Channel Green-function factor ``F(E)`` for a flat band.

    Raises
    ------
    BandEdge
        ``E`` lies within ``1e-9 * (e_max - e_min)`` of a band edge.
    """
    eps = EDGE_EPS * (band.e_max - band.e_min)
    if abs(energy - band.e_min) < eps or abs(energy - band.e_max) < eps:
        raise BandEdge(f"E = {energy} is at a band edge of [{band.e_min}, {band.e_max}]")
    real = band.rho * np.log(abs(energy - band.e_min) / abs(band.e_max - energy))
    imag = -np.pi * band.rho if band.contains(energy) else 0.0
    return complex(real, imag)


def build_energy_dependent(cs, ch, energy):
    _check_dims(cs, ch)
    if len(ch.bands) != ch.n_channels:
        raise DimensionMismatch("energy-dependent builder needs one band per channel")
    m = cs.h0.copy()
    for c, band in enumerate(ch.bands):
        vc = ch.v[:, c]
        m = m + band_function(band, energy) * np.outer(vc, vc.conj())
    return EffectiveHamiltonian(m, "energy_dependent", float(energy), {"closed": cs, "channels": ch})


@dataclass(frozen=True)
class Pole:
    """Self-consistent complex energy of one state."""

    value: complex
    energy: float
    iterations: int
    converged: bool
    reason: str = ""


def solve_poles(cs, ch, max_iter=200, tol_fix=1e-12):
    """Self-consistent poles of the energy-dependent effective Hamiltonian.

    For every state the real energy ``E`` is iterated as
    ``E <- Re lambda_k(H(E))``, starting from the k-th eigenvalue of ``h0``.
    The tracked eigenvalue ``lambda_k`` is the one closest to the previous
    iterate.  States that do not settle within ``max_iter`` steps, or that
    hit a band edge, come back with ``converged = False``.
    """
    _check_dims(cs, ch)
    levels = np.linalg.eigvalsh(cs.h0)
    poles = []
    for e0 in levels:
        lam = complex(e0)
        energy = float(e0)
        converged = False
        reason = "iteration cap"
        it = 0
        for it in range(1, max_iter + 1):
            try:
                h = build_energy_dependent(cs, ch, energy)
            except BandEdge as exc:
                reason = str(exc)
                break
            w = eig_general(h.matrix).values
            lam = complex(w[np.argmin(np.abs(w - lam))])
            step = abs(lam.real - energy)
            energy = lam.real
            if step < tol_fix:
                converged = True
                reason = ""
                break
        poles.append(Pole(lam, energy, it, converged, reason))
    return poles


def build_two_level(p):
    m = np.array([[p.eps1, p.omega], [p.omega, p.eps2]], dtype=complex)
    return EffectiveHamiltonian(m, "two_level", None, {"params": p})


def two_level_eigs(p):
    """Closed-form eigenvalues ``(plus, minus)`` of the two-level matrix."""
    mean = 0.5 * (p.eps1 + p.eps2)
    half = 0.5 * (p.eps1 - p.eps2)
    root = cmath.sqrt(half * half + complex(p.omega) ** 2)
    return mean + root, mean - root
