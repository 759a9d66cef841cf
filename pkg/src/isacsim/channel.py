"""OFDM MIMO channel synthesis from path gains.

FFT sign convention (shared with :mod:`isacsim.sensing`): a path with delay
``tau`` contributes ``exp(-2j*pi*k*df*tau)`` on subcarrier ``k``, i.e. the
subcarrier response is the *forward* DFT (``numpy.fft.fft``) of the tapped
delay line, and delay profiles are recovered with the unnormalized inverse
DFT ``N * numpy.fft.ifft``.

Per-path complex amplitude (what the channel tensor is built from)::

    a_l = amplitude_l * exp(1j * (phase_l - 2*pi*f_c*tau_l))

and the tensor itself::

    H[m, k, n] = sum_l a_l * exp(1j*theta[m, l]) * exp(-2j*pi*k*df*tau_l)
                 * exp(1j*n*beta_l) + noise

with ``theta[m, l] = 2*pi/lambda * (o_m . u_l)`` for element offset ``o_m``
and arrival direction ``u_l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DelayOutOfRange, DimensionMismatch, ZeroPilot
from .propagation import PathGain, doppler_phase, path_gain
from .scene import C0

FFT_SIGN = -1  # exp(FFT_SIGN * 2j*pi*k*df*tau) over subcarrier index k
SINC_TAPS = 64


@dataclass(frozen=True)
class PathEnsemble:
    """Path gains plus per-antenna phase offsets ``antenna_phases[l, m]``."""

    paths: tuple
    antenna_phases: np.ndarray
    antenna_count: int

    def __post_init__(self):
        ph = np.asarray(self.antenna_phases, dtype=float).reshape(len(self.paths), -1) \
            if len(self.paths) else np.zeros((0, self.antenna_count))
        object.__setattr__(self, "antenna_phases", ph)
        if ph.shape != (len(self.paths), self.antenna_count):
            raise DimensionMismatch(
                f"antenna_phases shape {ph.shape} != ({len(self.paths)}, {self.antenna_count})")

    @property
    def delays(self):
        return np.array([p.delay for p in self.paths], dtype=float)

    def complex_amplitudes(self, radio):
        """``a_l`` including reflection signs and the carrier phase."""
        amp = np.array([p.amplitude for p in self.paths], dtype=float)
        ph = np.array([p.phase for p in self.paths], dtype=float)
        tau = self.delays
        return amp * np.exp(1j * (ph - 2.0 * math.pi * radio.carrier_freq * tau))

    @property
    def betas(self):
        return np.array([p.doppler_phase_per_symbol for p in self.paths], dtype=float)


@dataclass
class ChannelFrame:
    data: np.ndarray  # complex [N_ant, N_sub, N_symb]
    radio: object
    frame_index: int = 0
    ground_truth: tuple = ()

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DimensionMismatch("channel tensor must be [antenna, subcarrier, symbol]")
        _, k, n = self.data.shape
        if k != self.radio.num_subcarriers or n != self.radio.num_symbols:
            raise DimensionMismatch(
                f"tensor {self.data.shape} does not match radio ({self.radio.num_subcarriers}"
                f" subcarriers, {self.radio.num_symbols} symbols)")
        for gt in self.ground_truth:
            if not gt.range > 0:
                raise DimensionMismatch("ground-truth ranges must be positive")


def antenna_phases(arrival_dirs, element_offsets, wavelength):
    """theta[l, m] = 2 pi (o_m . u_l) / lambda for arrival directions u_l."""
    u = np.asarray(arrival_dirs, dtype=float).reshape(-1, 3)
    o = np.asarray(element_offsets, dtype=float).reshape(-1, 3)
    return 2.0 * math.pi / wavelength * (u @ o.T)


def build_ensemble(paths, scene, radio, diffraction_convention="printed"):
    """Evaluate every traced path and attach the RX array phases."""
    lam = radio.wavelength
    gains = tuple(path_gain(p, radio, lam, scene.tx, scene.rx, diffraction_convention)
                  for p in paths)
    offsets = scene.rx.element_offsets_world()
    phases = antenna_phases([g.arrival for g in gains], offsets, lam) if gains \
        else np.zeros((0, len(offsets)))
    return PathEnsemble(gains, phases, len(offsets))


def ensemble_from_echoes(echoes, radio, num_elements, spacing=None, round_trip=True):
    """Synthetic ensemble from an explicit echo list.

    Each echo is a mapping with ``range`` (m), ``azimuth`` (deg),
    ``amplitude`` and optional ``radial_speed`` (m/s, positive approaching)
    and ``phase`` (rad). With ``round_trip`` the path length is twice the
    range. The array is a ULA along y with boresight +x.
    """
    lam = radio.wavelength
    d = lam / 2.0 if spacing is None else spacing
    offsets = np.zeros((num_elements, 3))
    offsets[:, 1] = np.arange(num_elements) * d
    gains, dirs = [], []
    for e in echoes:
        r = float(e["range"])
        az = math.radians(float(e["azimuth"]))
        v = float(e.get("radial_speed", 0.0))
        length = 2.0 * r if round_trip else r
        u = np.array([math.cos(az), math.sin(az), 0.0])
        gains.append(PathGain(amplitude=float(e["amplitude"]), delay=length / C0,
                              doppler_phase_per_symbol=doppler_phase(radio, v),
                              phase=float(e.get("phase", 0.0)), radial_speed=v,
                              arrival=tuple(u.tolist()), departure=tuple(u.tolist())))
        dirs.append(u)
    phases = antenna_phases(dirs, offsets, lam) if gains else np.zeros((0, num_elements))
    return PathEnsemble(tuple(gains), phases, num_elements)


def channel_response(ensemble, radio, method="exact"):
    """Noiseless channel tensor ``[N_ant, N_sub, N_symb]``.

    ``method="exact"`` evaluates the complex exponentials directly;
    ``"bandlimited"`` builds a windowed-sinc tapped delay line per antenna
    and symbol and transforms it to subcarriers with the forward FFT.
    """
    m_ant = ensemble.antenna_count
    k_sub, n_sym = radio.num_subcarriers, radio.num_symbols
    if not ensemble.paths:
        return np.zeros((m_ant, k_sub, n_sym), dtype=complex)
    a = ensemble.complex_amplitudes(radio)
    tau = ensemble.delays
    doppler = np.exp(1j * np.outer(ensemble.betas, np.arange(n_sym)))  # [L, N]
    spatial = np.exp(1j * ensemble.antenna_phases)  # [L, M]
    if method == "exact":
        k = np.arange(k_sub)
        delay = np.exp(FFT_SIGN * 2j * math.pi * radio.subcarrier_spacing * np.outer(k, tau))
        base = delay * a[None, :]  # [K, L]
        out = np.empty((m_ant, k_sub, n_sym), dtype=complex)
        for m in range(m_ant):
            out[m] = (base * spatial[None, :, m]) @ doppler
        return out
    if method == "bandlimited":
        kernel, keep = _sinc_matrix(tau, radio)
        weights = a[keep, None] * doppler[keep]  # [L', N]
        out = np.empty((m_ant, k_sub, n_sym), dtype=complex)
        for m in range(m_ant):
            taps = kernel @ (weights * spatial[keep, m][:, None])  # [K, N]
            out[m] = np.fft.fft(taps, axis=0)
        return out
    raise ValueError(f"unknown synthesis method {method!r}")


def _sinc_matrix(delays, radio, strict=False):
    """Tap-by-path interpolation matrix and the mask of kept paths."""
    n = radio.num_subcarriers
    s = np.asarray(delays, dtype=float) * radio.bandwidth
    keep = (s >= 0) & (s < n)
    if strict and not keep.all():
        raise DelayOutOfRange(f"{int((~keep).sum())} path(s) beyond {radio.max_delay} s")
    s = s[keep]
    mat = np.zeros((n, len(s)))
    half = SINC_TAPS // 2
    offsets = np.arange(-half + 1, half + 1)
    for l, sl in enumerate(s):
        base = int(math.floor(sl))
        idx = base + offsets
        frac = idx - sl
        # Hann window centred on the fractional delay, zero beyond the support
        w = 0.5 * (1.0 + np.cos(math.pi * frac / (half + 1)))
        np.add.at(mat[:, l], np.mod(idx, n), np.sinc(frac) * w)
    return mat, keep


def band_limit(delays_and_gains, radio, strict=False):
    """Tapped impulse response of ``(delay, complex gain)`` pairs.

    Each path becomes a Hann-windowed sinc cluster centred on
    ``delay * bandwidth`` samples. Paths outside ``[0, N_sub / bandwidth)``
    are dropped and counted (or raise :class:`DelayOutOfRange` with
    ``strict``).

    Returns:
        ``(taps, dropped)``: complex taps of length ``N_sub`` and the number
        of dropped paths.
    """
    n = radio.num_subcarriers
    if not delays_and_gains:
        return np.zeros(n, dtype=complex), 0
    delays = np.array([d for d, _ in delays_and_gains], dtype=float)
    gains = np.array([g for _, g in delays_and_gains], dtype=complex)
    mat, keep = _sinc_matrix(delays, radio, strict=strict)
    return mat @ gains[keep], int((~keep).sum())


def noise_tensor(shape, sigma, seed, frame, *stream):
    """Circular complex Gaussian noise with E|n|^2 = sigma^2.

    One generator per antenna, seeded from ``(seed, frame, *stream,
    antenna)``, so results do not depend on how the work is split. Extra
    ``stream`` integers give independent realizations (e.g. the reference
    measurements used for clutter removal).
    """
    m_ant = shape[0]
    out = np.empty(shape, dtype=complex)
    scale = sigma / math.sqrt(2.0)
    for m in range(m_ant):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(frame), *map(int, stream), m]))
        re = rng.standard_normal(shape[1:])
        im = rng.standard_normal(shape[1:])
        out[m] = scale * (re + 1j * im)
    return out


def add_noise(H, sigma, seed, frame=0, *stream):
    if sigma == 0:
        return H.copy()
    return H + noise_tensor(H.shape, sigma, seed, frame, *stream)


def synthesize_frame(ensemble, radio, frame, seed, ground_truth=(), method="exact"):
    """Channel tensor for one animation frame with seeded noise."""
    if ensemble.antenna_phases.shape[1] != ensemble.antenna_count:
        raise DimensionMismatch("antenna phases do not match the array size")
    H = channel_response(ensemble, radio, method=method)
    H = add_noise(H, radio.noise_stddev, seed, frame)
    return ChannelFrame(data=H, radio=radio, frame_index=int(frame),
                        ground_truth=tuple(ground_truth))


def estimate_channel(tx_grid, rx_grid):
    """Single-tap equalizer ``Y / X`` per resource element."""
    x = np.asarray(tx_grid)
    y = np.asarray(rx_grid)
    if x.shape != y.shape:
        raise DimensionMismatch(f"pilot grid {x.shape} vs received grid {y.shape}")
    if np.any(x == 0):
        raise ZeroPilot("pilot grid contains zero entries")
    return y / x


def signal_power_reference(ensemble):
    """Power of the strongest path (the LOS when it is present)."""
    if not ensemble.paths:
        return 0.0
    return max(p.amplitude for p in ensemble.paths) ** 2


def noise_for_snr(ensemble, snr_db):
    """Noise stddev giving the requested SNR against the reference power."""
    p = signal_power_reference(ensemble)
    return math.sqrt(p / 10.0 ** (snr_db / 10.0))
