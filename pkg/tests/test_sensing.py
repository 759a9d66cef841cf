import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacsim.channel import channel_response, ensemble_from_echoes
from isacsim.errors import DimensionMismatch, DimensionTooSmall, QOutOfRange, ValidationError
from isacsim.propagation import RadioConfig
from isacsim.scene import C0
from isacsim.sensing import (MusicConfig, RadarImage, UlaDescriptor, covariance, estimate_q,
                             image_to_csv, image_to_pgm, music_image, music_spectrum,
                             noise_subspace, periodogram, pseudospectrum, steering_angle,
                             steering_range)


def on_grid_echo(radio, r_bin, q_bin, **kw):
    """Echo whose delay and Doppler fall exactly on periodogram bins."""
    rng = r_bin * C0 / (2 * radio.bandwidth)
    beta = 2 * math.pi * q_bin / radio.num_symbols
    v = beta * C0 / (4 * math.pi * radio.symbol_duration * radio.carrier_freq)
    e = dict(range=rng, azimuth=10.0, amplitude=1.0, radial_speed=v)
    e.update(kw)
    return e


@settings(max_examples=20, deadline=None)
@given(r_bin=st.integers(1, 63), q_bin=st.integers(0, 15))
def test_periodogram_peak_on_grid(r_bin, q_bin):
    small_radio = RadioConfig(num_subcarriers=64, num_symbols=16, cyclic_prefix=16)
    ens = ensemble_from_echoes([on_grid_echo(small_radio, r_bin, q_bin)], small_radio, 2)
    im = periodogram(channel_response(ens, small_radio), small_radio, round_trip=True)
    assert im.argmax() == (r_bin, q_bin)
    # all energy in one cell
    assert im.values[r_bin, q_bin] == pytest.approx(im.values.sum(), rel=1e-9)


def test_periodogram_axes(small_radio):
    H = np.zeros((1, 64, 16), complex)
    im = periodogram(H, small_radio, round_trip=True)
    assert im.range_axis[1] == pytest.approx(C0 / (2 * small_radio.bandwidth))
    assert im.second_axis[1] == pytest.approx(1 / (16 * small_radio.symbol_duration))
    with pytest.raises(DimensionTooSmall):
        periodogram(np.zeros((1, 64, 1)))


def test_radar_image_validation():
    with pytest.raises(DimensionMismatch):
        RadarImage(np.zeros((2, 2)), [0, 1, 2], [0, 1], "doppler", "periodogram")
    with pytest.raises(ValidationError):
        RadarImage(-np.ones((2, 2)), [0, 1], [0, 1], "doppler", "periodogram")
    im = RadarImage(np.zeros((3, 3)), [0, 1, 2], [0, 1, 2], "doppler", "periodogram")
    assert im.contains(2.4, 0.0) and not im.contains(2.6, 0.0)


def test_covariance_hermitian(rng):
    H = rng.standard_normal((4, 64, 8)) + 1j * rng.standard_normal((4, 64, 8))
    R = covariance(H, stride=4)
    assert R.shape == (64, 64)
    assert np.array_equal(R, R.conj().T)
    Rs = covariance(H, stride=4, smoothing="half")
    assert Rs.shape == (32, 32)


def test_estimate_q():
    ev = np.concatenate([np.full(20, 1.0), [50.0, 80.0]])
    assert estimate_q(ev) == 2
    # rank deficient: round-off zeros are ignored for the median
    ev = np.concatenate([np.full(40, 1e-17), np.full(8, 1.0), [100.0]])
    assert estimate_q(ev) == 1
    assert estimate_q(np.ones(5)) == 1


def test_noise_subspace_q_checked(rng):
    R = np.eye(8)
    with pytest.raises(QOutOfRange):
        noise_subspace(R, 8)
    U, w, V, q = noise_subspace(R, 3)
    assert U.shape == (8, 5) and q == 3


def test_music_matches_brute_force(small_radio, rng):
    echoes = [dict(range=6.0, azimuth=-20.0, amplitude=1.0, radial_speed=5.0),
              dict(range=9.0, azimuth=30.0, amplitude=0.7, radial_speed=-3.0)]
    ens = ensemble_from_echoes(echoes, small_radio, 4)
    H = channel_response(ens, small_radio)
    H = H + 0.01 * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape))
    cfg = MusicConfig(range_grid=tuple(np.arange(0, 12.5, 0.5)),
                      azimuth_grid=tuple(np.deg2rad(np.arange(-60, 61, 5.0))),
                      subcarrier_stride=4, round_trip=True)
    array = UlaDescriptor(4, small_radio.wavelength / 2)
    R = covariance(H, stride=4)
    im = music_spectrum(R, cfg, small_radio, array)
    U_N, _, _, _ = noise_subspace(R)
    A = steering_angle(cfg.azimuth_grid, array, small_radio.wavelength)
    B = steering_range(cfg.range_grid, 16, small_radio.subcarrier_spacing * 4, True)
    for i in range(0, len(cfg.range_grid), 5):
        for j in range(0, len(cfg.azimuth_grid), 4):
            ref = pseudospectrum(U_N, np.kron(A[j], B[i]))
            assert im.values[i, j] == pytest.approx(ref, rel=1e-8)
    # the two strongest local peaks sit on the two echoes
    i, j = im.argmax()
    assert (cfg.range_grid[i], round(math.degrees(cfg.azimuth_grid[j]))) in \
        {(6.0, -20), (9.0, 30)}


def test_music_image_shape(small_radio):
    ens = ensemble_from_echoes([dict(range=5.0, azimuth=0.0, amplitude=1.0,
                                     radial_speed=2.0)], small_radio, 2)
    cfg = MusicConfig(range_grid=(4.0, 5.0, 6.0), azimuth_grid=(-0.1, 0.0, 0.1),
                      subcarrier_stride=8, round_trip=True)
    im = music_image(channel_response(ens, small_radio), cfg, small_radio,
                     UlaDescriptor(2, small_radio.wavelength / 2))
    assert im.values.shape == (3, 3) and im.argmax() == (1, 1)


def test_music_config_from_dict():
    cfg = MusicConfig.from_dict({"range_grid": {"start": 0, "stop": 2, "step": 0.5},
                                 "azimuth_grid_deg": {"start": -10, "stop": 10, "step": 10}})
    assert cfg.range_grid == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert np.allclose(np.rad2deg(cfg.azimuth_grid), [-10, 0, 10])
    with pytest.raises(ValidationError):
        MusicConfig(range_grid=())


def test_exports():
    im = RadarImage(np.array([[0.0, 1.0], [4.0, 2.0]]), [0.0, 1.0], [0.0, 0.5],
                    "doppler", "periodogram")
    buf = io.StringIO()
    image_to_csv(im, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "range_m,doppler,power" and len(lines) == 5
    buf = io.StringIO()
    image_to_pgm(im, buf)
    lines = buf.getvalue().splitlines()
    assert lines[:3] == ["P2", "2 2", "255"]
    assert lines[4].split()[0] == "255"
