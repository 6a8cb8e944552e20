import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eptrace.errors import BandEdge, DimensionMismatch
from eptrace.hamiltonian import (
    Band, ChannelSet, ClosedSystem, TwoLevelParams, band_function, build_energy_dependent,
    build_two_level, build_wideband, solve_poles, two_level_eigs,
)
from eptrace.linalg import eig_general

from oracles import match_multisets


def random_model(rng, n, c, real=False):
    a = rng.normal(size=(n, n))
    v = rng.normal(size=(n, c))
    if not real:
        a = a + 1j * rng.normal(size=(n, n))
        v = v + 1j * rng.normal(size=(n, c))
    return ClosedSystem(a + a.conj().T), ChannelSet(v)


def test_wideband_decoupled():
    cs = ClosedSystem.from_levels([0.5, -1.0, 2.0])
    h = build_wideband(cs, ChannelSet(np.ones((3, 1))), 0.0)
    np.testing.assert_array_equal(h.matrix, cs.h0)


def test_wideband_rank_one_example():
    cs = ClosedSystem(np.zeros((2, 2)))
    h = build_wideband(cs, ChannelSet([[1], [1]]), 2.0)
    np.testing.assert_array_equal(h.matrix, -1j * np.ones((2, 2)))
    w = eig_general(h.matrix).values
    assert match_multisets(w, [0, -2j]) < 1e-14


def test_wideband_scalar():
    h = build_wideband(ClosedSystem([[1.5]]), ChannelSet([[0.3]]), 4.0)
    assert h.matrix[0, 0] == 1.5 - 0.5j * 4.0 * 0.09


def test_wideband_rejects_negative_alpha_and_bad_dims():
    cs = ClosedSystem.from_levels([0, 1])
    with pytest.raises(ValueError):
        build_wideband(cs, ChannelSet([[1], [1]]), -1.0)
    with pytest.raises(DimensionMismatch):
        build_wideband(cs, ChannelSet([[1], [1], [1]]), 1.0)


def test_closed_system_must_be_hermitian():
    with pytest.raises(ValueError):
        ClosedSystem([[0, 1], [0, 0]])


@pytest.mark.parametrize("seed", range(20))
def test_trace_identity_and_sum_rule(seed):
    rng = np.random.default_rng(seed)
    n, c = int(rng.integers(1, 13)), int(rng.integers(1, 5))
    cs, ch = random_model(rng, n, c)
    alpha = float(rng.uniform(0, 5))
    h = build_wideband(cs, ch, alpha).matrix
    total = np.sum(np.abs(ch.v) ** 2)
    expected = np.trace(cs.h0) - 0.5j * alpha * total
    assert abs(np.trace(h) - expected) <= 1e-12 * max(abs(expected), 1)
    widths = -2 * eig_general(h).values.imag
    assert abs(widths.sum() - alpha * total) <= 1e-10 * max(alpha * total, 1e-300)


@pytest.mark.parametrize("seed", range(5))
def test_hermitian_limit(seed):
    rng = np.random.default_rng(50 + seed)
    cs, ch = random_model(rng, 6, 2)
    assert np.max(np.abs(eig_general(build_wideband(cs, ch, 0.0).matrix).values.imag)) < 1e-10
    zero = ChannelSet(np.zeros((6, 2)))
    assert np.max(np.abs(eig_general(build_wideband(cs, zero, 3.0).matrix).values.imag)) < 1e-10


def test_complex_symmetry_for_real_inputs():
    rng = np.random.default_rng(3)
    cs, ch = random_model(rng, 7, 3, real=True)
    h = build_wideband(cs, ch, 1.7).matrix
    assert np.array_equal(h, h.T)
    bands = [Band(-2, 2, 0.5), Band(-1, 3, 1.0), Band(5, 6, 2.0)]
    h = build_energy_dependent(cs, ChannelSet(ch.v, bands), 0.3).matrix
    assert np.array_equal(h, h.T)


def test_band_function_imaginary_part_is_exact():
    band = Band(-1.0, 2.0, 0.7)
    for e in np.linspace(-0.99, 1.99, 31):
        assert band_function(band, e).imag == -np.pi * 0.7
    for e in (-5.0, -1.5, 2.5, 40.0):
        assert band_function(band, e).imag == 0.0


def test_band_function_midpoint_and_far_limit():
    f = band_function(Band(-1.0, 1.0, 1.0), 0.0)
    assert f == complex(0.0, -np.pi)
    assert abs(band_function(Band(-1.0, 1.0, 1.0), -1e9)) < 1e-8


def test_band_edge():
    band = Band(-1.0, 1.0, 1.0)
    with pytest.raises(BandEdge):
        band_function(band, 1.0)
    with pytest.raises(BandEdge):
        band_function(band, -1.0 + 1e-10)
    band_function(band, -1.0 + 1e-8)


def test_band_validation():
    with pytest.raises(ValueError):
        Band(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Band(0.0, 1.0, -1.0)


def test_energy_dependent_midpoint_shift():
    cs = ClosedSystem.from_levels([0.2, -0.4])
    v = np.array([[1.0], [0.5]])
    h = build_energy_dependent(cs, ChannelSet(v, [Band(-1, 1, 1)]), 0.0).matrix
    np.testing.assert_allclose(h - cs.h0, -1j * np.pi * (v @ v.T), atol=1e-15)


def test_energy_dependent_far_energy_decouples():
    cs = ClosedSystem.from_levels([0.2, -0.4])
    ch = ChannelSet([[1.0], [0.5]], [Band(-1, 1, 1)])
    h = build_energy_dependent(cs, ch, -1e9).matrix
    assert np.max(np.abs(h - cs.h0)) < 1e-8


def test_solve_poles_zero_coupling():
    cs = ClosedSystem.from_levels([-0.5, 0.1, 0.7])
    ch = ChannelSet(np.zeros((3, 1)), [Band(-1, 1, 1)])
    poles = solve_poles(cs, ch)
    assert [p.iterations for p in poles] == [1, 1, 1]
    assert all(p.converged for p in poles)
    np.testing.assert_allclose([p.value for p in poles], [-0.5, 0.1, 0.7])


def test_solve_poles_scalar_fixed_point():
    e0, g, band = 0.3, 0.4, Band(-1.0, 2.0, 0.8)
    poles = solve_poles(ClosedSystem([[e0]]), ChannelSet([[g]], [band]))
    p = poles[0]
    assert p.converged
    e = p.energy
    rhs = e0 + band.rho * g * g * np.log(abs((e - band.e_min) / (band.e_max - e)))
    assert abs(e - rhs) < 1e-12
    assert abs(p.value.imag + np.pi * band.rho * g * g) < 1e-12


def test_solve_poles_matches_wideband_for_wide_band():
    rho = 1.0
    rng = np.random.default_rng(11)
    cs = ClosedSystem.from_levels([-1.0, 0.0, 1.0])
    v = 0.1 * rng.normal(size=(3, 1))
    poles = solve_poles(cs, ChannelSet(v, [Band(-100.0, 100.0, rho)]))
    assert all(p.converged for p in poles)
    wide = eig_general(build_wideband(cs, ChannelSet(v), 2 * np.pi * rho).matrix).values
    for p in poles:
        nearest = wide[np.argmin(np.abs(wide - p.value))]
        assert abs(p.value - nearest) <= 0.05 * abs(nearest)
        assert abs(p.value.imag - nearest.imag) <= 0.05 * abs(nearest.imag)


def test_two_level_matrix_literal():
    p = TwoLevelParams(1.0, 0.4, -1.0, -0.2, 0.3 + 0.1j)
    m = build_two_level(p).matrix
    np.testing.assert_array_equal(m, [[1 + 0.2j, 0.3 + 0.1j], [0.3 + 0.1j, -1 - 0.1j]])


def test_two_level_examples():
    p = TwoLevelParams(1.0, 0.6, -0.5, 0.2, 0.0)
    assert match_multisets(two_level_eigs(p), [p.eps1, p.eps2]) < 1e-15
    p = TwoLevelParams(0.5, 0.2, 0.5, 0.2, 0.3)
    plus, minus = two_level_eigs(p)
    assert abs(plus - (p.eps1 + 0.3)) < 1e-15 and abs(minus - (p.eps1 - 0.3)) < 1e-15
    assert two_level_eigs(TwoLevelParams(1.0, 0.0, -1.0, 0.0, 1j)) == (0, 0)
    m = build_two_level(TwoLevelParams(1.0, 0.0, -1.0, 0.0, 0.7)).matrix
    np.testing.assert_array_equal(m, m.conj().T)


def test_two_level_ep_matrix_is_nilpotent():
    m = build_two_level(TwoLevelParams(1.0, 0.0, -1.0, 0.0, 1j)).matrix
    np.testing.assert_allclose(m @ m, 0, atol=1e-15)
    assert np.max(np.abs(eig_general(m).values)) < 1e-7


finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@given(finite, finite, finite, finite, finite, finite)
def test_two_level_eigs_agree_with_eig_general(e1, g1, e2, g2, wr, wi):
    p = TwoLevelParams(e1, g1, e2, g2, complex(wr, wi))
    m = build_two_level(p).matrix
    closed = two_level_eigs(p)
    root = abs(closed[0] - closed[1])
    # near a coalescence both routes lose half the digits
    tol = 1e-12 if root > 1e-3 else 1e-7
    assert match_multisets(eig_general(m).values, closed) <= tol * max(1, np.abs(m).max())
