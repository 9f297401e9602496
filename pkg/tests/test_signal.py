import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasplat.signal import (
    AngularSpectrum,
    ArrayGeometry,
    ComplexSample,
    MultipathChannel,
    angle_power_spectrum,
    direction_angles,
    rssi,
    steering_matrix,
    steering_vector,
    superpose,
    unit_direction,
)


def test_complex_sample_wraps_phase():
    s = ComplexSample(2.0, 3 * math.pi)
    assert -math.pi <= s.phase < math.pi
    assert complex(s) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        ComplexSample(-1.0)


def test_superpose_two_paths():
    ch = MultipathChannel.from_paths([(1.0, 0.0), (0.5, math.pi)])
    out = superpose(1.0, ch)
    assert out.amplitude == pytest.approx(0.5)
    assert len(ch) == 2
    assert superpose(1.0, MultipathChannel()).amplitude == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.floats(-3, 3), st.floats(0.01, 10))
def test_superpose_is_linear(c, phase, a):
    ch = MultipathChannel.from_paths([(a, phase), (0.3, 1.0)])
    x = complex(ComplexSample(1.3, 0.2))
    assert complex(superpose(c * x, ch)) == pytest.approx(c * complex(superpose(x, ch)), abs=1e-9)


def test_channel_validation():
    with pytest.raises(ValueError):
        MultipathChannel([1.0, 2.0], [0.0])
    with pytest.raises(ValueError):
        MultipathChannel([-1.0], [0.0])


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_rssi_reference_shift(k, amp):
    y = ComplexSample(amp)
    # 10 log(P/P0) - 10 log(P/(k P0)) = +10 log k
    assert rssi(y, 1.0) - rssi(y, k) == pytest.approx(10 * math.log10(k), abs=1e-9)


def test_rssi_examples():
    assert rssi(ComplexSample(1.0)) == 0.0
    assert rssi(0.1 + 0j) == pytest.approx(-20.0)
    assert rssi(0j) == float("-inf")
    assert rssi(np.array([1.0, 1j])) == 0.0
    with pytest.raises(ValueError):
        rssi(1.0, p0=0)


def test_geometry_constructors():
    ula = ArrayGeometry.ula(4)
    np.testing.assert_allclose(ula.positions[:, 0], [-0.75, -0.25, 0.25, 0.75])
    ura = ArrayGeometry.ura(2, 3, 0.5)
    assert ura.n_elements == 6
    assert ArrayGeometry.from_dict({"ura": [8, 8]}).n_elements == 64
    assert ArrayGeometry.from_dict({"ula": 3}).n_elements == 3
    np.testing.assert_array_equal(ArrayGeometry.from_dict(ula.to_dict()).positions, ula.positions)
    with pytest.raises(ValueError):
        ArrayGeometry(np.zeros((2, 2)))


def test_direction_round_trip():
    az, el = np.array([0.0, 45.0, 270.0]), np.array([0.0, 30.0, 89.0])
    a2, e2 = direction_angles(unit_direction(az, el))
    np.testing.assert_allclose(a2, az, atol=1e-12)
    np.testing.assert_allclose(e2, el, atol=1e-12)


def test_steering_vector_matches_matrix_cell():
    g = ArrayGeometry.ura(3, 3)
    m = steering_matrix(g)
    np.testing.assert_array_equal(m[17, 40], steering_vector(g, 17, 40))
    np.testing.assert_allclose(np.abs(m), 1.0)


def test_broadside_snapshot_has_full_power():
    g = ArrayGeometry.ula(4)
    y = np.ones(4, dtype=complex)
    s = angle_power_spectrum(g, y)
    assert s.grid.shape == (360, 90)
    assert s.grid[90, 0] == pytest.approx(16.0)


def test_spectrum_nonnegative_and_finite():
    rng = np.random.default_rng(0)
    g = ArrayGeometry.ura(2, 2)
    for _ in range(5):
        s = angle_power_spectrum(g, rng.normal(size=4) + 1j * rng.normal(size=4))
        assert np.all(np.isfinite(s.grid)) and np.all(s.grid >= 0)


def test_spectrum_validation():
    with pytest.raises(ValueError, match="snapshot"):
        angle_power_spectrum(ArrayGeometry.ula(4), np.ones(3))
    with pytest.raises(ValueError):
        AngularSpectrum(np.zeros((360, 89)))
    with pytest.raises(ValueError):
        AngularSpectrum(-np.ones((360, 90)))


def test_normalized_peak():
    g = np.zeros((360, 90))
    g[10, 20] = 4.0
    s = AngularSpectrum(g).normalized()
    assert s.peak() == (10, 20) and s.grid.max() == 1.0
    z = AngularSpectrum(np.zeros((360, 90)))
    assert z.normalized() is z
