"""Peak detection and detection-quality metrics on radar images."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (EmptyInput, PeakNotMaximum, TargetNotInList,
                     TruthOutOfBounds)

PEAK_FACTOR = 1.1  # a peak must exceed the image mean by 10 %
_DIRECTIONS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class Peak:
    range: float
    second: float  # azimuth (rad) or Doppler (Hz), per the image
    power: float
    index: tuple
    second_kind: str = "azimuth"
    prominence: float = 1.0
    normalized_prominence: float = 0.0
    is_target: bool = False

    def position(self):
        """Planar coordinates used for distances between peaks.

        Range-azimuth peaks map to Cartesian ``(r cos phi, r sin phi)``;
        other images use the range alone.
        """
        if self.second_kind == "azimuth":
            return (self.range * math.cos(self.second), self.range * math.sin(self.second))
        return (self.range, 0.0)


@dataclass(frozen=True)
class Gate:
    """Detection window around the ground truth.

    A peak is the target if its range is within ``range_m`` and its second
    coordinate is within ``second_cells`` grid cells of the truth.
    """

    range_m: float
    second_cells: int = 2

    @classmethod
    def for_image(cls, image, wavelength, second_cells=2):
        """lambda in range, widened to half a range cell on coarse grids."""
        step = float(np.min(np.diff(image.range_axis))) if len(image.range_axis) > 1 else 0.0
        return cls(max(wavelength, 0.5 * step), second_cells)


@dataclass(frozen=True)
class MetricReport:
    detected: bool
    sinr: float
    sinr_db: float
    prominence: float
    normalized_prominence: float
    isolation: float
    truth: tuple  # (range, azimuth or doppler)
    gate_radius: float
    num_peaks: int
    target_peak: Optional[Peak] = None

    def as_row(self):
        return {"detected": int(self.detected), "sinr": self.sinr, "sinr_db": self.sinr_db,
                "prominence": self.prominence,
                "normalized_prominence": self.normalized_prominence,
                "isolation": self.isolation, "num_peaks": self.num_peaks}


def local_maxima_mask(values):
    """Cells greater than or equal to all of their (up to) 8 neighbours."""
    v = np.asarray(values, dtype=float)
    padded = np.pad(v, 1, mode="constant", constant_values=-np.inf)
    mask = np.ones(v.shape, dtype=bool)
    rows, cols = v.shape
    for di, dj in _DIRECTIONS:
        mask &= v >= padded[1 + di:1 + di + rows, 1 + dj:1 + dj + cols]
    return mask


def detect_peaks(image, factor=PEAK_FACTOR):
    """Local maxima with power >= ``factor`` x mean, strongest first."""
    v = image.values
    if v.size == 0:
        raise EmptyInput("empty radar image")
    thr = factor * float(np.mean(v))
    mask = local_maxima_mask(v) & (v >= thr) & (v > 0)
    idx = np.argwhere(mask)
    peaks = [Peak(range=float(image.range_axis[i]), second=float(image.second_axis[j]),
                  power=float(v[i, j]), index=(int(i), int(j)),
                  second_kind=image.second_kind) for i, j in idx]
    peaks.sort(key=lambda p: (-p.power, p.index))
    return peaks


def in_gate(peak, truth, image, gate):
    r, s = truth
    if abs(peak.range - r) > gate.range_m:
        return False
    step = float(np.min(np.diff(image.second_axis))) if len(image.second_axis) > 1 else 0.0
    return abs(peak.second - s) <= gate.second_cells * step + 1e-12


def find_target(peaks, truth, image, gate):
    """Strongest peak inside the gate, or ``None``."""
    for p in peaks:
        if in_gate(p, truth, image, gate):
            return p
    return None


def probability_of_detection(detections):
    """Percentage of iterations in which the target was detected."""
    detections = list(detections)
    if not detections:
        raise EmptyInput("no iterations")
    return 100.0 * sum(bool(d) for d in detections) / len(detections)


def _cell_positions(image):
    R, S = np.meshgrid(image.range_axis, image.second_axis, indexing="ij")
    if image.second_kind == "azimuth":
        return R * np.cos(S), R * np.sin(S)
    return R, np.zeros_like(R)


def _truth_position(image, truth):
    r, s = truth
    if image.second_kind == "azimuth":
        return r * math.cos(s), r * math.sin(s)
    return r, 0.0


def sinr_metric(image, truth, gate):
    """Power at the truth cell over the total power outside the gate disc.

    ``gate`` is a radius in meters (Cartesian for range-azimuth images,
    range-only otherwise). Returns ``inf`` when nothing lies outside.
    """
    radius = gate.range_m if isinstance(gate, Gate) else float(gate)
    if not image.contains(*truth):
        raise TruthOutOfBounds(f"truth {truth} outside the image")
    i, j = image.cell_of(*truth)
    signal = float(image.values[i, j])
    x, y = _cell_positions(image)
    tx, ty = _truth_position(image, truth)
    outside = np.hypot(x - tx, y - ty) > radius
    rest = float(np.sum(image.values[outside]))
    if rest == 0.0:
        return math.inf
    return signal / rest


def _descend(values, i, j, di, dj, sea_level):
    """Walk from (i, j) while values do not increase; return the floor.

    A walk that leaves the image without turning upward found no col in
    that direction; it drains to ``sea_level`` (the image minimum).
    """
    rows, cols = values.shape
    cur = values[i, j]
    while True:
        ni, nj = i + di, j + dj
        if not (0 <= ni < rows and 0 <= nj < cols):
            return sea_level
        nxt = values[ni, nj]
        if nxt > cur:
            return cur
        cur = nxt
        i, j = ni, nj


def col_level(values, index):
    """Highest valley floor over the 8 compass descents from a peak."""
    i, j = index
    sea = values.min()
    return max(_descend(values, i, j, di, dj, sea) for di, dj in _DIRECTIONS)


def prominence_metric(image, peak):
    """``(kappa, normalized)`` with kappa = P / P_c and normalized = 1 - P_c / P."""
    v = image.values
    i, j = peak.index
    if not local_maxima_mask(v)[i, j]:
        raise PeakNotMaximum(f"cell {peak.index} is not a local maximum")
    p = float(v[i, j])
    pc = float(col_level(v, (i, j)))
    if p <= 0:
        return 1.0, 0.0
    kappa = math.inf if pc == 0 else p / pc
    return kappa, 1.0 - pc / p


def isolation_metric(peaks, target):
    """Squared distance (m^2) from ``target`` to the nearest other peak."""
    if target not in peaks:
        raise TargetNotInList("target is not one of the detected peaks")
    tx, ty = target.position()
    best = math.inf
    for p in peaks:
        if p is target or p == target:
            continue
        x, y = p.position()
        best = min(best, (x - tx) ** 2 + (y - ty) ** 2)
    return best


def evaluate_image(image, truth, gate):
    """All four per-frame metrics for one image and ground-truth point."""
    peaks = detect_peaks(image)
    target = find_target(peaks, truth, image, gate)
    sinr = sinr_metric(image, truth, gate)
    if target is None:
        kappa, norm, iso = 1.0, 0.0, math.nan
    else:
        kappa, norm = prominence_metric(image, target)
        iso = isolation_metric(peaks, target)
    sinr_db = 10.0 * math.log10(sinr) if sinr > 0 else -math.inf
    return MetricReport(detected=target is not None, sinr=sinr, sinr_db=sinr_db,
                        prominence=kappa, normalized_prominence=norm, isolation=iso,
                        truth=tuple(truth), gate_radius=gate.range_m,
                        num_peaks=len(peaks), target_peak=target)
