import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpass.channel import (
    ArchKind,
    PinchingState,
    SystemConfig,
    amplitude_matrix,
    build_channels,
    build_layout,
    build_Q,
    dbm_to_watt,
    freespace_gain,
    general_radiation_coeff,
    inwaveguide_gain,
    place_users,
    radiation_matrices,
    watt_to_dbm,
)

CFG = SystemConfig()


def brute_radiation(delta, m, n):
    """Power fraction from port m to PA n by walking the chain PA by PA."""
    M = len(delta) - 1
    if n > m:  # forward: PAs m+1, ..., n
        path = range(m + 1, n)
    else:      # backward: PAs m, m-1, ..., n
        path = range(m, n, -1)
    frac = 1.0
    for j in path:
        frac *= 1.0 - delta[j]
    return frac * delta[n]


def test_unit_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(-90.0) == pytest.approx(1e-12)
    assert watt_to_dbm(1e-3) == pytest.approx(0.0)


def test_derived_constants():
    assert CFG.wavelength == pytest.approx(299792458.0 / 77e9)
    assert CFG.guided_wavelength == pytest.approx(CFG.wavelength / 1.44)
    assert CFG.kg == pytest.approx(2 * np.pi / CFG.guided_wavelength)
    assert CFG.eta == pytest.approx(CFG.wavelength / (4 * np.pi))


@pytest.mark.parametrize("field,value", [("M", 0), ("K", -1), ("alpha_g", -0.1), ("P_T", 0.0),
                                         ("N0", -1.0), ("Delta", -0.01), ("area", 0.0), ("M", 2.5)])
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        CFG.replace(**{field: value})


def test_arch_parse():
    assert ArchKind.parse("CenterFed") is ArchKind.CENTER_FED
    assert ArchKind.parse("end-fed") is ArchKind.END_FED
    assert ArchKind.parse("multi_waveguide") is ArchKind.MULTI_WAVEGUIDE
    with pytest.raises(ValueError):
        ArchKind.parse("ring")


def test_center_fed_layout():
    lay = build_layout(CFG, ArchKind.CENTER_FED, user_seed=1)
    ell = CFG.L / (CFG.M + 1)
    assert np.allclose(lay.port_x, ell * np.arange(1, CFG.M + 1))
    assert np.allclose(lay.pa_x, ell * (np.arange(CFG.M + 1) + 0.5))
    # each PA sits halfway between its neighbouring ports
    assert np.allclose(lay.pa_x[1:-1], 0.5 * (lay.port_x[:-1] + lay.port_x[1:]))
    assert lay.n_pa == CFG.M + 1 and lay.K == CFG.K


def test_multi_waveguide_layout():
    lay = build_layout(CFG, ArchKind.MULTI_WAVEGUIDE, user_seed=1)
    assert lay.n_pa == CFG.M
    assert np.allclose(lay.pa_y, -np.arange(CFG.M) * CFG.waveguide_spacing)
    assert np.allclose(lay.port_x, CFG.feed_x)


def test_place_users_deterministic():
    a = place_users(7, 5, 100.0)
    b = place_users(7, 5, 100.0)
    c = place_users(8, 5, 100.0)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (5, 2) and np.all((a >= 0) & (a <= 100))


def test_place_users_law_of_large_numbers():
    u = place_users(0, 10_000, 100.0)
    assert np.all(np.abs(u.mean(axis=0) - 50.0) < 1.0)


def test_place_users_rejects_bad_area():
    with pytest.raises(ValueError):
        place_users(0, 3, 0.0)


def test_gains():
    assert inwaveguide_gain(0.0, CFG) == pytest.approx(1.0)
    g = inwaveguide_gain(10.0, CFG)
    assert abs(g) == pytest.approx(np.exp(-CFG.alpha_g * 10.0))
    with pytest.raises(ValueError):
        inwaveguide_gain(-1.0, CFG)
    h = freespace_gain([3.0, 4.0], [0.0, 0.0], CFG)
    assert abs(h) == pytest.approx(CFG.eta / 5.0)
    with pytest.raises(ValueError):
        freespace_gain([1.0, 1.0], [1.0, 1.0], CFG)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.data())
def test_radiation_matches_chain_walk(M, data):
    delta = np.array(data.draw(st.lists(st.floats(0, 1), min_size=M + 1, max_size=M + 1)))
    SF, SB = radiation_matrices(delta)
    for m in range(M):
        for n in range(M + 1):
            if n > m:
                assert SF[m, n] ** 2 == pytest.approx(brute_radiation(delta, m, n), abs=1e-14)
                assert SB[m, n] == 0
            else:
                assert SB[m, n] ** 2 == pytest.approx(brute_radiation(delta, m, n), abs=1e-14)
                assert SF[m, n] == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.data())
def test_general_coefficient_reduces_to_single_pa(M, data):
    delta = np.array(data.draw(st.lists(st.floats(0, 1), min_size=M + 1, max_size=M + 1)))
    SF, SB = radiation_matrices(delta)
    regions = [[d] for d in delta]
    for m in range(M):
        for n in range(M + 1):
            direction = "F" if n > m else "B"
            xi = general_radiation_coeff(regions, m, n, 0, direction)
            ref = SF[m, n] ** 2 if n > m else SB[m, n] ** 2
            assert xi == pytest.approx(ref, abs=1e-14)


def test_general_coefficient_several_pas_per_region():
    # port 0 forward into region 1 holding PAs with deltas 0.5, 0.5, 1.0
    regions = [[0.3], [0.5, 0.5, 1.0]]
    got = [general_radiation_coeff(regions, 0, 1, i, "F") for i in range(3)]
    assert np.allclose(got, [0.5, 0.25, 0.25])
    assert sum(got) == pytest.approx(1.0)
    # backward from port 0 into region 0 walks the PAs in reverse order
    regions = [[1.0, 0.5], [0.2]]
    got = [general_radiation_coeff(regions, 0, 0, i, "B") for i in (1, 0)]
    assert np.allclose(got, [0.5, 0.5])
    with pytest.raises(ValueError):
        general_radiation_coeff(regions, 0, 0, 0, "F")


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_lossless_rows_unit_norm(M, seed):
    rng = np.random.default_rng(seed)
    cfg = CFG.replace(M=M, alpha_g=0.0)
    lay = build_layout(cfg, ArchKind.CENTER_FED, user_seed=seed)
    delta = np.concatenate(([1.0], rng.uniform(0, 1, M - 1), [1.0]))
    Q = build_Q(lay, PinchingState(rng.uniform(0, np.pi / 2, M), delta), cfg)
    assert np.allclose(np.linalg.norm(Q, axis=1), 1.0, atol=1e-12)


def test_blocked_pa_stops_pass_through():
    M = 4
    delta = np.array([1.0, 0.3, 1.0, 0.6, 1.0])  # PA 2 radiates everything
    SF, SB = radiation_matrices(delta)
    # ports 0 and 1 see nothing beyond PA 2 going forward
    assert np.all(SF[:2, 3:] == 0)
    # ports 2 and 3 see nothing before PA 2 going backward
    assert np.all(SB[2:, :2] == 0)


def test_split_angle_limits():
    st0 = PinchingState(np.zeros(3), np.full(4, 0.5))
    S = amplitude_matrix(ArchKind.CENTER_FED, st0)
    SF, _ = radiation_matrices(st0)
    assert np.allclose(S, SF)
    assert np.allclose(st0.beta_F + st0.beta_B, 1.0)


def test_pinching_state_validation():
    with pytest.raises(ValueError):
        PinchingState(np.zeros(2), np.array([0.5, 1.2, 0.5]))
    with pytest.raises(ValueError):
        PinchingState(np.array([2.0, 0.0]), np.full(3, 0.5))
    s = PinchingState.from_phi(np.zeros(3), np.array([0.0, np.pi / 2]))
    assert np.allclose(s.delta, [1.0, 1.0, 0.0, 1.0])


def test_effective_channel_shape_and_formula():
    lay = build_layout(CFG, ArchKind.CENTER_FED, user_seed=2)
    ch = build_channels(lay, PinchingState.symmetric(CFG.M), CFG)
    assert ch.H.shape == (CFG.K, CFG.M + 1)
    assert ch.Q.shape == (CFG.M, CFG.M + 1)
    assert ch.H_eff.shape == (CFG.K, CFG.M)
    k, m = 1, 2
    ref = sum(ch.H[k, n] * ch.Q[m, n] for n in range(CFG.M + 1))
    assert ch.H_eff[k, m] == pytest.approx(ref)


def test_multi_waveguide_amplitudes_identity():
    s = PinchingState.initial(3, ArchKind.MULTI_WAVEGUIDE)
    assert np.array_equal(amplitude_matrix(ArchKind.MULTI_WAVEGUIDE, s), np.eye(3))
