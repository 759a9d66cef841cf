import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacsim.channel import channel_response, ensemble_from_echoes
from isacsim.clutter import ClutterMethod, dynamic_mask, remove_dynamic, remove_reference
from isacsim.errors import DimensionMismatch, DimensionTooSmall, ValidationError
from isacsim.propagation import RadioConfig
from isacsim.sensing import periodogram

RADIO = RadioConfig(num_subcarriers=64, num_symbols=16, cyclic_prefix=16)


def static_channel(seed):
    rng = np.random.default_rng(seed)
    echoes = [dict(range=float(r), azimuth=float(a), amplitude=float(g))
              for r, a, g in zip(rng.uniform(2, 40, 3), rng.uniform(-60, 60, 3),
                                 rng.uniform(0.1, 1, 3))]
    return channel_response(ensemble_from_echoes(echoes, RADIO, 4), RADIO)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_reference_self_subtraction_exact(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((3, 8, 4)) + 1j * rng.standard_normal((3, 8, 4))
    out = remove_reference(H, H)
    assert np.array_equal(out, np.zeros_like(H))


@pytest.mark.parametrize("seed", range(5))
def test_dynamic_zeroes_static_channel(seed):
    H = static_channel(seed)
    out = remove_dynamic(H, 0.01)
    assert np.array_equal(out, np.zeros_like(H))


def test_dynamic_keeps_moving_target():
    echoes = [dict(range=10.0, azimuth=0.0, amplitude=1.0),
              dict(range=15.0, azimuth=20.0, amplitude=0.5, radial_speed=40.0)]
    H = channel_response(ensemble_from_echoes(echoes, RADIO, 4), RADIO)
    mask = dynamic_mask(H, 0.01)
    r_static = int(round(2 * 10.0 * RADIO.bandwidth / 2.99792458e8))
    assert mask.shape == (4, 64)
    out = remove_dynamic(H, 0.01)
    im = periodogram(out, RADIO, round_trip=True)
    assert abs(im.range_axis[im.argmax()[0]] - 15.0) < 1.6
    assert mask[:, r_static].all()


def test_shapes_checked():
    with pytest.raises(DimensionMismatch):
        remove_reference(np.zeros((2, 4, 4)), np.zeros((2, 4, 3)))
    with pytest.raises(DimensionTooSmall):
        remove_dynamic(np.zeros((2, 4, 1)))
    with pytest.raises(ValidationError):
        remove_dynamic(np.zeros((2, 4, 4)), 0.0)


def test_clutter_method_dispatch():
    H = static_channel(0)
    assert np.array_equal(ClutterMethod.none().apply(H), H)
    assert not np.any(ClutterMethod.with_reference(H).apply(H))
    assert not np.any(ClutterMethod.dynamic().apply(H))
    with pytest.raises(ValidationError):
        ClutterMethod("median")
    with pytest.raises(ValidationError):
        ClutterMethod("reference").apply(H)
    with pytest.raises(ValidationError):
        ClutterMethod.dynamic(1.5)
