"""Numerics for non-Hermitian Hamiltonians of open quantum systems."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .linalg import (  # noqa: E402,F401
    EigenPair, EigenSystem, biorthonormalize, c_product, eig_general, h_product, solve_linear,
)
from .hamiltonian import (  # noqa: E402,F401
    Band, ChannelSet, ClosedSystem, TwoLevelParams, build_energy_dependent, build_two_level,
    build_wideband, solve_poles, two_level_eigs,
)
from .spectral import (  # noqa: E402,F401
    coalescence_order, encircle, ep_search, ep_two_level, mixing_matrix, orthogonality_scan,
    phase_rigidity, rigidity_map, trace_branches,
)
from .scattering import cross_section, peak_count, s_matrix, trapping_sweep  # noqa: E402,F401
