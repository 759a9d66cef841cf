import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from isacsim.errors import EmptyInput, PeakNotMaximum, TargetNotInList, TruthOutOfBounds
from isacsim.metrics import (Gate, Peak, col_level, detect_peaks, evaluate_image, find_target,
                             isolation_metric, local_maxima_mask, probability_of_detection,
                             prominence_metric, sinr_metric)
from isacsim.sensing import RadarImage


def image(values, kind="azimuth"):
    v = np.asarray(values, float)
    r = np.arange(v.shape[0], dtype=float) + 1.0
    s = np.deg2rad(np.arange(v.shape[1], dtype=float)) if kind == "azimuth" \
        else np.arange(v.shape[1], dtype=float)
    return RadarImage(v, r, s, kind, "music")


# ---------------------------------------------------------------- oracles

def brute_force_peaks(v, factor=1.1):
    rows, cols = v.shape
    thr = factor * v.mean()
    out = []
    for i in range(rows):
        for j in range(cols):
            x = v[i, j]
            if x < thr or x <= 0:
                continue
            ok = True
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ni, nj = i + di, j + dj
                    if (di or dj) and 0 <= ni < rows and 0 <= nj < cols and v[ni, nj] > x:
                        ok = False
            if ok:
                out.append((i, j))
    return out


def watershed_saddle(v, a, b):
    """Highest level at which a and b share an 8-connected superlevel set."""
    levels = np.unique(v)[::-1]
    structure = np.ones((3, 3))

    def connected(t):
        lab, _ = ndimage.label(v >= t, structure=structure)
        return lab[a] == lab[b]

    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if connected(levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    return levels[lo]


def twin_peaks(rng, n=64):
    """Two isotropic Gaussians on a common row or column."""
    y, x = np.mgrid[0:n, 0:n].astype(float)
    s = rng.uniform(2, 5)
    r = int(rng.integers(15, 49))
    c1 = int(rng.integers(8, 25))
    c2 = c1 + int(rng.integers(int(3 * s) + 2, 30))
    h2 = rng.uniform(0.4, 1.0)
    v = (np.exp(-((x - c1) ** 2 + (y - r) ** 2) / (2 * s * s))
         + h2 * np.exp(-((x - c2) ** 2 + (y - r) ** 2) / (2 * s * s)))
    if rng.random() < 0.5:
        return v.T, (c1, r), (c2, r)
    return v, (r, c1), (r, c2)


# ---------------------------------------------------------------- peaks

@pytest.mark.parametrize("seed", range(5))
def test_detect_peaks_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    v = rng.exponential(size=(120, 90))
    v[rng.random(v.shape) < 0.2] = 0.5  # ties and plateaus
    got = sorted(p.index for p in detect_peaks(image(v)))
    assert got == sorted(brute_force_peaks(v))


def test_detect_peaks_sorted_and_thresholded():
    v = np.zeros((5, 5))
    v[1, 1], v[3, 3] = 2.0, 5.0
    peaks = detect_peaks(image(v))
    assert [p.index for p in peaks] == [(3, 3), (1, 1)]
    assert detect_peaks(image(np.ones((4, 4)))) == []  # nothing above 1.1 x mean
    with pytest.raises(EmptyInput):
        detect_peaks(RadarImage(np.zeros((0, 0)), [], [], "doppler", "music"))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(1e-6, 1e6))
def test_peaks_invariant_to_scaling(seed, scale):
    v = np.random.default_rng(seed).exponential(size=(20, 20))
    a = [p.index for p in detect_peaks(image(v))]
    b = [p.index for p in detect_peaks(image(v * scale))]
    assert a == b


# ---------------------------------------------------------------- prominence

@pytest.mark.parametrize("seed", range(20))
def test_prominence_saddle_matches_watershed(seed):
    v, a, b = twin_peaks(np.random.default_rng(seed))
    mask = local_maxima_mask(v)
    assert mask[a] and mask[b]
    saddle = watershed_saddle(v, a, b)
    assert col_level(v, a) == saddle
    assert col_level(v, b) == saddle


def test_hand_built_ridge():
    v = np.full((3, 7), 0.1)
    v[1] = [0.2, 1.0, 0.7, 0.5, 0.6, 0.8, 0.2]
    kappa, norm = prominence_metric(image(v), Peak(2.0, 0.0, 1.0, (1, 1)))
    assert kappa == pytest.approx(2.0)
    assert norm == pytest.approx(0.5)


def test_prominence_limits():
    v = np.zeros((9, 9))
    v[4, 4] = 3.0
    kappa, norm = prominence_metric(image(v), Peak(5.0, 0.0, 3.0, (4, 4)))
    assert math.isinf(kappa) and norm == 1.0
    flat = np.ones((5, 5))
    assert prominence_metric(image(flat), Peak(1.0, 0.0, 1.0, (2, 2))) == (1.0, 0.0)
    with pytest.raises(PeakNotMaximum):
        prominence_metric(image(v), Peak(1.0, 0.0, 0.0, (4, 3)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_prominence_bounds(seed):
    v = np.random.default_rng(seed).exponential(size=(15, 15))
    im = image(v)
    for p in detect_peaks(im):
        kappa, norm = prominence_metric(im, p)
        assert kappa >= 1.0 and 0.0 <= norm <= 1.0


# ---------------------------------------------------------------- isolation

def test_isolation_matches_pairwise_minimum(rng):
    v = rng.exponential(size=(40, 40))
    peaks = detect_peaks(image(v))
    pos = np.array([p.position() for p in peaks])
    for k in range(0, len(peaks), 7):
        d2 = np.sum((pos - pos[k]) ** 2, axis=1)
        d2[k] = np.inf
        assert isolation_metric(peaks, peaks[k]) == pytest.approx(d2.min(), rel=1e-12)


def test_isolation_single_peak_unbounded():
    p = Peak(10.0, 0.3, 1.0, (0, 0))
    assert isolation_metric([p], p) == math.inf
    with pytest.raises(TargetNotInList):
        isolation_metric([p], Peak(11.0, 0.3, 1.0, (1, 0)))


# ---------------------------------------------------------------- SINR / detection

def test_sinr_cell_arithmetic():
    v = np.zeros((10, 10))
    v[2, 2] = 1.0
    v[8, 8] = 1.0
    im = image(v, "doppler")
    truth = (im.range_axis[2], im.second_axis[2])
    assert sinr_metric(im, truth, 0.5) == 1.0
    uniform = image(np.ones((10, 10)), "doppler")
    # range-only distance: the gate covers the truth's whole row
    assert sinr_metric(uniform, truth, 0.5) == pytest.approx(1 / 90)
    with pytest.raises(TruthOutOfBounds):
        sinr_metric(im, (100.0, 0.0), 0.5)


def test_sinr_monotone():
    v = np.random.default_rng(3).exponential(size=(12, 12))
    im = image(v)
    truth = (im.range_axis[5], im.second_axis[5])
    base = sinr_metric(im, truth, 1.0)
    v2 = v.copy()
    v2[0, 11] += 1.0
    assert sinr_metric(image(v2), truth, 1.0) < base
    v3 = v.copy()
    v3[5, 5] += 1.0
    assert sinr_metric(image(v3), truth, 1.0) > base


def test_probability_of_detection():
    assert probability_of_detection([True, False, True, True]) == 75.0
    with pytest.raises(EmptyInput):
        probability_of_detection([])


def test_evaluate_image_and_gate():
    v = np.full((40, 20), 0.01)
    v[20, 10] = 1.0
    im = image(v)
    gate = Gate.for_image(im, 0.08)
    assert gate.range_m == 0.5  # widened to half a range cell
    truth = (im.range_axis[20], im.second_axis[10])
    rep = evaluate_image(im, truth, gate)
    assert rep.detected and rep.target_peak.index == (20, 10)
    assert rep.isolation == math.inf
    miss = evaluate_image(im, (im.range_axis[5], im.second_axis[10]), gate)
    assert not miss.detected and miss.normalized_prominence == 0.0
    assert find_target(detect_peaks(im), (im.range_axis[5], im.second_axis[10]), im, gate) is None
