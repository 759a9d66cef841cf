"""Radar processing of channel tensors: periodogram and 2D MUSIC.

Uses the FFT convention documented in :mod:`isacsim.channel`: delay maps
to a phase ``exp(-2j*pi*k*df*tau)`` over subcarriers, so delay profiles are
the unnormalized inverse DFT over the subcarrier axis, and Doppler
(``exp(+1j*n*beta)`` over symbols) is resolved by the forward DFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (DimensionMismatch, DimensionTooSmall,
                     EigendecompositionFailure, QOutOfRange, ValidationError)
from .scene import C0


@dataclass
class RadarImage:
    """Non-negative spectrum ``values[range_bin, second_bin]`` with its axes.

    ``second_kind`` is ``"azimuth"`` (radians) or ``"doppler"`` (Hz);
    ``source`` is ``"periodogram"`` or ``"music"``.
    """

    values: np.ndarray
    range_axis: np.ndarray
    second_axis: np.ndarray
    second_kind: str
    source: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.range_axis = np.asarray(self.range_axis, dtype=float)
        self.second_axis = np.asarray(self.second_axis, dtype=float)
        if self.values.shape != (len(self.range_axis), len(self.second_axis)):
            raise DimensionMismatch(
                f"values {self.values.shape} vs axes ({len(self.range_axis)}, "
                f"{len(self.second_axis)})")
        for ax in (self.range_axis, self.second_axis):
            if len(ax) > 1 and not np.all(np.diff(ax) > 0):
                raise ValidationError("image axes must be strictly increasing")
        if np.any(self.values < 0):
            raise ValidationError("radar image values must be non-negative")

    def argmax(self):
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(i), int(j)

    def cell_of(self, range_m, second):
        """Nearest cell to a (range, azimuth/doppler) coordinate."""
        return (int(np.argmin(np.abs(self.range_axis - range_m))),
                int(np.argmin(np.abs(self.second_axis - second))))

    def contains(self, range_m, second):
        def inside(ax, x):
            step = (ax[-1] - ax[0]) / (len(ax) - 1) if len(ax) > 1 else 0.0
            return ax[0] - 0.5 * step <= x <= ax[-1] + 0.5 * step
        return inside(self.range_axis, range_m) and inside(self.second_axis, second)


@dataclass(frozen=True)
class MusicConfig:
    """2D range-azimuth MUSIC settings.

    Attributes:
        signal_subspace_dim: Q; ``None`` counts eigenvalues above 10x the
            median eigenvalue.
        range_grid: candidate ranges in meters.
        azimuth_grid: candidate azimuths in radians.
        subcarrier_stride: keep every n-th subcarrier before building R.
        smoothing: subarray length for forward spatial smoothing over the
            (decimated) subcarriers, ``"half"`` for half the length, or
            ``None`` to disable.
        round_trip: range steering uses path length ``2 r`` instead of ``r``.
    """

    signal_subspace_dim: Optional[int] = None
    range_grid: tuple = field(default_factory=lambda: tuple(np.arange(201) * 0.25))
    azimuth_grid: tuple = field(
        default_factory=lambda: tuple(np.deg2rad(np.arange(-90, 91, 1.0))))
    subcarrier_stride: int = 16
    smoothing: object = None
    round_trip: bool = False

    def __post_init__(self):
        if len(self.range_grid) == 0 or len(self.azimuth_grid) == 0:
            raise ValidationError("MUSIC grids must be non-empty")
        if self.subcarrier_stride < 1:
            raise ValidationError("subcarrier_stride must be >= 1")
        if self.signal_subspace_dim is not None and self.signal_subspace_dim < 1:
            raise QOutOfRange("Q must be >= 1")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "range_grid" in doc and isinstance(doc["range_grid"], dict):
            g = doc["range_grid"]
            n = int(round((g["stop"] - g["start"]) / g["step"])) + 1
            doc["range_grid"] = tuple(g["start"] + g["step"] * np.arange(n))
        if "azimuth_grid_deg" in doc:
            g = doc.pop("azimuth_grid_deg")
            n = int(round((g["stop"] - g["start"]) / g["step"])) + 1
            doc["azimuth_grid"] = tuple(np.deg2rad(g["start"] + g["step"] * np.arange(n)))
        for key in ("range_grid", "azimuth_grid"):
            if key in doc:
                doc[key] = tuple(float(x) for x in doc[key])
        return cls(**doc)


@dataclass(frozen=True)
class UlaDescriptor:
    num_elements: int
    spacing: float  # meters

    @classmethod
    def from_endpoint(cls, endpoint, wavelength):
        spacing = endpoint.spacing if endpoint.num_elements > 1 else wavelength / 2.0
        return cls(endpoint.num_elements, spacing)


RANK_FLOOR = 1e-10  # relative eigenvalue level treated as numerically zero


def _as_3d(H):
    H = np.asarray(H)
    if H.ndim == 2:
        return H[None]
    if H.ndim != 3:
        raise DimensionMismatch("expected [subcarrier, symbol] or [antenna, subcarrier, symbol]")
    return H


def delay_profile(column, axis=0):
    """Unnormalized inverse DFT over subcarriers: ``sum_p H_p e^{+j2 pi p s/N}``."""
    column = np.asarray(column)
    if column.shape[axis] < 2:
        raise DimensionTooSmall("delay profile needs at least two subcarriers")
    return column.shape[axis] * np.fft.ifft(column, axis=axis)


def periodogram(H, radio=None, round_trip=False):
    """Range-Doppler periodogram, power summed over antennas.

    ``P[r, q] = |sum_k sum_n H[k, n] e^{+j2 pi k r/N_sub} e^{-j2 pi n q/N_symb}|^2``.
    Range bin ``r`` maps to ``r c0 / B`` (path length) or ``r c0 / (2B)``
    with ``round_trip``; Doppler bin ``q`` maps to ``q / (N_symb T0)`` Hz
    (unshifted, bins past the middle alias to negative frequencies).
    """
    H = _as_3d(H)
    _, k_sub, n_sym = H.shape
    if k_sub < 2 or n_sym < 2:
        raise DimensionTooSmall(f"periodogram needs >= 2x2, got {k_sub}x{n_sym}")
    spec = k_sub * np.fft.ifft(np.fft.fft(H, axis=2), axis=1)
    P = np.sum(np.abs(spec) ** 2, axis=0)
    if radio is not None:
        unit = C0 / radio.bandwidth / (2.0 if round_trip else 1.0)
        range_axis = np.arange(k_sub) * unit
        doppler_axis = np.arange(n_sym) / (n_sym * radio.symbol_duration)
    else:
        range_axis = np.arange(k_sub, dtype=float)
        doppler_axis = np.arange(n_sym, dtype=float)
    return RadarImage(P, range_axis, doppler_axis, "doppler", "periodogram")


def _snapshots(H, stride, smoothing):
    """Snapshot matrix [dim, count] of antenna-major Kronecker vectors."""
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[:, :, None]
    if H.ndim != 3:
        raise DimensionMismatch("covariance expects [antenna, subcarrier(, symbol)]")
    H = H[:, ::stride, :]
    m_ant, k_sub, n_sym = H.shape
    if smoothing is None:
        length = k_sub
    elif smoothing == "half":
        length = max(1, k_sub // 2)
    else:
        length = int(smoothing)
    if not 1 <= length <= k_sub:
        raise DimensionMismatch(f"smoothing length {length} outside [1, {k_sub}]")
    blocks = []
    for s in range(k_sub - length + 1):
        sub = H[:, s:s + length, :]
        blocks.append(sub.reshape(m_ant * length, n_sym))
    return np.concatenate(blocks, axis=1), length


def covariance(H, stride=1, smoothing=None):
    """Sample covariance of Kronecker (antenna x subcarrier) snapshots.

    Snapshots are the columns of ``H[:, ::stride, n]`` for every symbol
    ``n`` (and every subcarrier subarray when smoothing). The result is
    exactly Hermitian.
    """
    X, _ = _snapshots(H, stride, smoothing)
    R = (X @ X.conj().T) / X.shape[1]
    return 0.5 * (R + R.conj().T)


def estimate_q(eigenvalues, factor=10.0, floor=RANK_FLOOR):
    """Signal-subspace size: eigenvalues above ``factor`` x median.

    The median is taken over the numerically non-zero eigenvalues (those
    above ``floor`` x the largest). A rank-deficient covariance -- fewer
    snapshots than dimensions, or a tensor after clutter removal -- would
    otherwise have a round-off median, and every noise eigenvalue would
    count as signal.
    """
    ev = np.asarray(eigenvalues, dtype=float)
    top = float(np.max(ev)) if ev.size else 0.0
    live = ev[ev > floor * top] if top > 0 else ev[:0]
    if live.size == 0:
        return 1 if len(ev) > 1 else 0
    q = int(np.sum(ev > factor * float(np.median(live))))
    return min(max(q, 1), len(ev) - 1)


def noise_subspace(R, q=None):
    """Eigendecompose ``R`` and return ``(U_N, eigenvalues, eigenvectors, Q)``."""
    R = np.asarray(R)
    dim = R.shape[0]
    if R.ndim != 2 or R.shape[1] != dim:
        raise DimensionMismatch("covariance must be square")
    if q is None:
        pass
    elif not 1 <= q < dim:
        raise QOutOfRange(f"Q = {q} outside [1, {dim - 1}]")
    if not np.all(np.isfinite(R)):
        raise EigendecompositionFailure("covariance has non-finite entries")
    try:
        w, V = np.linalg.eigh(R)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionFailure(str(exc)) from exc
    if q is None:
        q = estimate_q(w)
    # eigh sorts ascending: the weakest dim - Q vectors span the noise space
    return V[:, : dim - q], w, V, q


def pseudospectrum(U_N, probe):
    """1 / ||U_N^H v||^2 for a single probe vector."""
    proj = U_N.conj().T @ np.asarray(probe)
    den = float(np.real(np.vdot(proj, proj)))
    return math.inf if den == 0 else 1.0 / den


def steering_angle(azimuths, array, wavelength):
    """a(phi)[m] = exp(j 2 pi m (d / lambda) sin phi); shape [n_phi, M]."""
    m = np.arange(array.num_elements)
    return np.exp(2j * math.pi * array.spacing / wavelength
                  * np.outer(np.sin(np.asarray(azimuths, float)), m))


def steering_range(ranges, num, spacing_hz, round_trip=False):
    """b(d)[k] = exp(-j 2 pi k df D / c0), D = d or 2d; shape [n_d, num]."""
    D = np.asarray(ranges, float) * (2.0 if round_trip else 1.0)
    k = np.arange(num)
    return np.exp(-2j * math.pi * spacing_hz / C0 * np.outer(D, k))


def music_spectrum(R, config, radio, array):
    """Evaluate ``1 / ||U_N^H (a(phi) kron b(d))||^2`` on the configured grid."""
    R = np.asarray(R)
    dim = R.shape[0]
    m_ant = array.num_elements
    if dim % m_ant:
        raise DimensionMismatch(f"covariance dim {dim} not a multiple of {m_ant} antennas")
    length = dim // m_ant
    U_N, _, _, _ = noise_subspace(R, config.signal_subspace_dim)
    A = steering_angle(config.azimuth_grid, array, radio.wavelength)  # [P, M]
    B = steering_range(config.range_grid, length,
                       radio.subcarrier_spacing * config.subcarrier_stride,
                       config.round_trip)  # [D, L]
    # ||U_N^H (a kron b)||^2 = (a kron b)^H Pi (a kron b) with the projector
    # Pi = U_N U_N^H split into M x M blocks of size L x L:
    #   sum_{m, j} conj(a_m) a_j * (b^H Pi[m, :, j, :] b)
    Pi = (U_N @ U_N.conj().T).reshape(m_ant, length, m_ant, length)
    Bc = B.conj()
    den = np.zeros((B.shape[0], A.shape[0]))
    for m in range(m_ant):
        for j in range(m_ant):
            t = np.sum((Bc @ Pi[m, :, j, :]) * B, axis=1)  # [D]
            den += (np.outer(t, A[:, m].conj() * A[:, j])).real
    den = np.maximum(den, 0.0)
    with np.errstate(divide="ignore"):
        P = np.where(den > 0, 1.0 / np.where(den > 0, den, 1.0), np.inf)
    if not np.all(np.isfinite(P)):
        finite = P[np.isfinite(P)]
        P[~np.isfinite(P)] = finite.max() * 1e6 if finite.size else 1.0
    return RadarImage(P, np.asarray(config.range_grid, float),
                      np.asarray(config.azimuth_grid, float), "azimuth", "music")


def music_image(H, config, radio, array):
    """Covariance plus MUSIC spectrum for a channel tensor."""
    R = covariance(H, stride=config.subcarrier_stride, smoothing=config.smoothing)
    return music_spectrum(R, config, radio, array)


# --------------------------------------------------------------------------
# exports


def image_to_csv(image, fp):
    """Long-format CSV: range, second-axis value, power."""
    fp.write(f"range_m,{image.second_kind},power\n")
    for i, r in enumerate(image.range_axis):
        for j, s in enumerate(image.second_axis):
            fp.write(f"{r!r},{s!r},{image.values[i, j]!r}\n")


def image_to_pgm(image, fp, dynamic_range_db=40.0):
    """8-bit ASCII PGM heatmap in dB, rows = range bins."""
    v = image.values
    peak = float(v.max()) if v.size else 0.0
    if peak > 0:
        db = 10.0 * np.log10(np.maximum(v, peak * 10 ** (-dynamic_range_db / 10)) / peak)
        px = np.round(255.0 * (db + dynamic_range_db) / dynamic_range_db).astype(int)
    else:
        px = np.zeros(v.shape, dtype=int)
    rows, cols = v.shape
    fp.write(f"P2\n{cols} {rows}\n255\n")
    for row in px:
        fp.write(" ".join(str(int(x)) for x in row) + "\n")
