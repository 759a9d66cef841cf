import math

import numpy as np
import pytest

from isacsim.channel import (ChannelFrame, add_noise, band_limit, channel_response,
                             ensemble_from_echoes, estimate_channel, noise_for_snr,
                             noise_tensor, signal_power_reference, synthesize_frame)
from isacsim.errors import DelayOutOfRange, DimensionMismatch, ZeroPilot
from isacsim.scene import C0


def one_echo(radio, **kw):
    echo = dict(range=12.0, azimuth=20.0, amplitude=1.0, radial_speed=0.0)
    echo.update(kw)
    return ensemble_from_echoes([echo], radio, 4)


def test_single_path_structure(small_radio):
    ens = one_echo(small_radio, radial_speed=3.0)
    H = channel_response(ens, small_radio)
    assert H.shape == (4, 64, 16)
    a = ens.complex_amplitudes(small_radio)[0]
    tau, beta = ens.delays[0], ens.betas[0]
    k, n, m = 5, 7, 2
    expected = (a * np.exp(1j * ens.antenna_phases[0, m])
                * np.exp(-2j * math.pi * k * small_radio.subcarrier_spacing * tau)
                * np.exp(1j * n * beta))
    assert H[m, k, n] == pytest.approx(expected, abs=1e-14)


def test_carrier_phase_included(small_radio):
    ens = one_echo(small_radio)
    a = ens.complex_amplitudes(small_radio)[0]
    tau = 2 * 12.0 / C0
    assert np.angle(a * np.exp(2j * math.pi * small_radio.carrier_freq * tau)) == \
        pytest.approx(0.0, abs=1e-6)


def test_bandlimited_close_to_exact_on_grid(small_radio):
    # an on-grid delay is a single tap: both syntheses agree
    r = 7 * C0 / (2 * small_radio.bandwidth)
    ens = one_echo(small_radio, range=r)
    Hx = channel_response(ens, small_radio, "exact")
    Hb = channel_response(ens, small_radio, "bandlimited")
    assert np.max(np.abs(Hx - Hb)) < 1e-9


def test_band_limit_drops_far_paths(small_radio):
    taps, dropped = band_limit([(10e-9, 1.0), (10.0, 1.0)], small_radio)
    assert dropped == 1
    assert taps[1] == pytest.approx(1.0)
    with pytest.raises(DelayOutOfRange):
        band_limit([(10.0, 1.0)], small_radio, strict=True)


def test_empty_ensemble_zero(small_radio):
    ens = ensemble_from_echoes([], small_radio, 4)
    assert not np.any(channel_response(ens, small_radio))
    assert signal_power_reference(ens) == 0.0


def test_noise_power_and_determinism():
    n1 = noise_tensor((4, 256, 64), 0.5, 3, 0)
    n2 = noise_tensor((4, 256, 64), 0.5, 3, 0)
    assert np.array_equal(n1, n2)
    assert np.mean(np.abs(n1) ** 2) == pytest.approx(0.25, rel=0.02)
    assert not np.array_equal(n1, noise_tensor((4, 256, 64), 0.5, 4, 0))
    assert not np.array_equal(n1, noise_tensor((4, 256, 64), 0.5, 3, 0, 1))
    # per-antenna streams: the first antenna does not depend on the array size
    assert np.array_equal(n1[0], noise_tensor((1, 256, 64), 0.5, 3, 0)[0])


def test_zero_noise_is_copy():
    H = np.ones((2, 4, 4), complex)
    out = add_noise(H, 0.0, 1)
    assert np.array_equal(out, H) and out is not H


def test_snr_reference(small_radio):
    ens = ensemble_from_echoes([dict(range=5, azimuth=0, amplitude=2.0),
                                dict(range=9, azimuth=10, amplitude=0.5)], small_radio, 2)
    assert signal_power_reference(ens) == 4.0
    assert noise_for_snr(ens, 20.0) == pytest.approx(0.2)


def test_frame_validation(small_radio):
    with pytest.raises(DimensionMismatch):
        ChannelFrame(np.zeros((4, 32, 16)), small_radio)
    f = synthesize_frame(one_echo(small_radio), small_radio, frame=2, seed=0)
    assert f.frame_index == 2 and f.data.shape == (4, 64, 16)


def test_estimate_channel():
    x = np.array([[1 + 1j, 2.0]])
    h = np.array([[0.5j, -1.0]])
    assert np.allclose(estimate_channel(x, h * x), h)
    with pytest.raises(ZeroPilot):
        estimate_channel(np.zeros((1, 2)), h)
    with pytest.raises(DimensionMismatch):
        estimate_channel(x, h.T)
