"""Per-path complex gain: loss factors, antenna patterns and Doppler phase.

All factors are amplitude-domain (field) quantities; the received power of
a path is ``amplitude**2``. Signed reflection coefficients are split into a
magnitude and a pi phase so that ``amplitude`` stays non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import fresnel, j0

from .errors import EvanescentRegime, NonPositiveDistance, ValidationError
from .raytracer import InteractionKind
from .scene import C0

FACTORS = ("reflect", "rough", "scat", "penetrate", "diffract", "backscatter")


@dataclass(frozen=True)
class RadioConfig:
    """OFDM numerology. ``sampling_rate`` defaults to the bandwidth."""

    carrier_freq: float = 3.75e9
    bandwidth: float = 100e6
    num_subcarriers: int = 1024
    cyclic_prefix: int = 64
    sampling_rate: Optional[float] = None
    num_symbols: int = 100
    noise_stddev: float = 0.0

    def __post_init__(self):
        if self.sampling_rate is None:
            object.__setattr__(self, "sampling_rate", float(self.bandwidth))
        for name in ("carrier_freq", "bandwidth", "sampling_rate"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0", field=name)
        for name in ("num_subcarriers", "num_symbols"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1", field=name)
        n = int(self.num_subcarriers)
        if n & (n - 1):
            raise ValidationError("num_subcarriers must be a power of two",
                                  field="num_subcarriers")
        if self.cyclic_prefix < 0:
            raise ValidationError("cyclic_prefix must be >= 0", field="cyclic_prefix")
        if not self.noise_stddev >= 0:
            raise ValidationError("noise_stddev must be >= 0", field="noise_stddev")

    @property
    def subcarrier_spacing(self):
        return self.bandwidth / self.num_subcarriers

    @property
    def wavelength(self):
        return C0 / self.carrier_freq

    @property
    def symbol_duration(self):
        """OFDM symbol duration T0 including the cyclic prefix."""
        return (self.num_subcarriers + self.cyclic_prefix) / self.sampling_rate

    @property
    def max_delay(self):
        """Largest unambiguous delay, N_sub / bandwidth."""
        return self.num_subcarriers / self.bandwidth

    def with_noise(self, noise_stddev):
        return RadioConfig(self.carrier_freq, self.bandwidth, self.num_subcarriers,
                           self.cyclic_prefix, self.sampling_rate, self.num_symbols,
                           float(noise_stddev))

    def to_dict(self):
        return {"carrier_freq": self.carrier_freq, "bandwidth": self.bandwidth,
                "num_subcarriers": self.num_subcarriers,
                "cyclic_prefix": self.cyclic_prefix,
                "sampling_rate": self.sampling_rate, "num_symbols": self.num_symbols,
                "noise_stddev": self.noise_stddev}

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


@dataclass(frozen=True)
class PathGain:
    """Complex gain of one propagation path.

    Attributes:
        amplitude: product of all loss factors (non-negative).
        delay: propagation delay in seconds.
        doppler_phase_per_symbol: phase advance between OFDM symbols (rad).
        phase: static phase from signed reflection coefficients (0 or pi).
        path_loss: free-space factor lambda / (4 pi d).
        beam_loss: product of TX and RX pattern gains.
        loss_breakdown: per-factor products over the path's interactions.
        radial_speed: rate of path shortening over two (m/s); positive when
            the path is getting shorter.
        beta_printed: the Doppler term evaluated literally as
            ``4 pi (N_sub + CP) f_s f_c v_s / c0`` for reference.
        arrival: unit vector from RX toward the last interaction, world frame.
        departure: unit vector from TX toward the first interaction.
    """

    amplitude: float
    delay: float
    doppler_phase_per_symbol: float
    phase: float = 0.0
    path_loss: float = 1.0
    beam_loss: float = 1.0
    loss_breakdown: dict = field(default_factory=dict)
    radial_speed: float = 0.0
    beta_printed: float = 0.0
    arrival: tuple = (1.0, 0.0, 0.0)
    departure: tuple = (1.0, 0.0, 0.0)

    @property
    def complex_gain(self):
        return self.amplitude * np.exp(1j * self.phase)


def free_space_loss(wavelength, distance):
    """Free-space amplitude factor lambda / (4 pi d)."""
    if not distance > 0:
        raise NonPositiveDistance(f"distance must be > 0, got {distance}")
    return wavelength / (4.0 * math.pi * distance)


def reflection_loss(incident_angle, material):
    """Signed Fresnel-type reflection coefficient at an air/material boundary.

    ``(cos(phi) - sqrt(mu eps - sin^2 phi)) / (cos(phi) + sqrt(mu eps - sin^2 phi))``
    """
    me = material.permeability * material.permittivity
    s2 = math.sin(incident_angle) ** 2
    if me < s2:
        raise EvanescentRegime(
            f"mu_r*eps_r = {me} < sin^2(phi) = {s2} for material {material.name}")
    c = math.cos(incident_angle)
    root = math.sqrt(me - s2)
    den = c + root
    if den == 0.0:
        # grazing incidence on a unit-contrast medium: the limit is -1
        return -1.0
    return (c - root) / den


def scattering_loss(scatter_offset, alpha_r):
    """Angular spread factor ((1 + cos theta) / 2) ** (alpha_r / 2)."""
    base = 0.5 * (1.0 + math.cos(scatter_offset))
    return max(base, 0.0) ** (0.5 * alpha_r)


def roughness_loss(incident_angle, roughness, wavelength):
    """Rough-surface factor exp(-8 x^2) J0(8 x), x = pi rho cos(phi) / lambda."""
    x = math.pi * roughness * math.cos(incident_angle) / wavelength
    return math.exp(-8.0 * x * x) * float(j0(8.0 * x))


def fresnel_integrals(nu):
    """Fresnel integrals C(nu), S(nu) of cos/sin(pi t^2 / 2) from 0 to nu."""
    s, c = fresnel(nu)
    return float(c), float(s)


def diffraction_nu(distance, wavelength, alpha1, alpha2):
    """Knife-edge geometry factor sqrt(2 d / lambda * alpha1 * alpha2)."""
    if not distance > 0:
        raise NonPositiveDistance(f"distance must be > 0, got {distance}")
    return math.sqrt(max(0.0, 2.0 * distance / wavelength * alpha1 * alpha2))


def diffraction_loss(nu, convention="printed"):
    """Knife-edge diffraction amplitude factor.

    ``convention="printed"`` evaluates
    ``sqrt((1 - C - S)^2 + (C + S)^2) / 2``; ``"itu"`` uses the ITU-R P.526
    form with ``(C - S)`` in the second term, which decays to zero deep in
    the shadow.
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    c, s = fresnel_integrals(nu)
    if convention == "printed":
        second = c + s
    elif convention == "itu":
        second = c - s
    else:
        raise ValueError(f"unknown diffraction convention {convention!r}")
    return math.sqrt((1.0 - c - s) ** 2 + second ** 2) / 2.0


def backscatter_loss(incident_angle, material):
    """p_scat * ((1 + cos phi) / 2) ** (alpha_r / 2)."""
    return material.backscatter_coeff * scattering_loss(incident_angle,
                                                        material.scatter_exponent)


def penetration_loss(incident_angle, material):
    """Transmission factor 1 - |reflection coefficient|."""
    return 1.0 - abs(reflection_loss(incident_angle, material))


def pattern_gain(pattern, local_direction):
    """Amplitude gain of a normalized element pattern.

    isotropic: 1; dipole (axis = local z): sin of the angle to the axis;
    patch (boresight = local +x): cosine of the off-boresight angle, zero
    behind the patch.
    """
    u = np.asarray(local_direction, dtype=float)
    u = u / np.linalg.norm(u)
    if pattern == "isotropic":
        return 1.0
    if pattern == "dipole":
        return float(math.hypot(u[0], u[1]))
    if pattern == "patch":
        return float(max(u[0], 0.0))
    raise ValueError(f"unknown pattern {pattern!r}")


def beam_loss(direction_tx, direction_rx, tx_pattern, rx_pattern):
    """Product of TX gain toward departure and RX gain toward arrival.

    Both directions are unit vectors in the respective endpoint's local
    frame, pointing away from the endpoint.
    """
    return pattern_gain(tx_pattern, direction_tx) * pattern_gain(rx_pattern, direction_rx)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _angle(a, b):
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))


def doppler_phase(radio, radial_speed):
    """Phase advance per OFDM symbol: 4 pi T0 f_c v_s / c0.

    ``radial_speed`` is half the rate at which the path shortens, so for a
    monostatic echo it equals the target's approach speed.
    """
    return 4.0 * math.pi * radio.symbol_duration * radio.carrier_freq * radial_speed / C0 + 0.0


def beta_printed(radio, radial_speed):
    return (4.0 * math.pi * (radio.num_subcarriers + radio.cyclic_prefix)
            * radio.sampling_rate * radio.carrier_freq * radial_speed / C0)


def path_gain(path, radio, scene_wavelength, tx=None, rx=None,
              diffraction_convention="printed"):
    """Evaluate the loss product and Doppler phase of a traced path.

    Args:
        path: a :class:`~isacsim.raytracer.PropPath`.
        radio: OFDM configuration (Doppler, delay conventions).
        scene_wavelength: wavelength used by all loss factors.
        tx, rx: optional :class:`~isacsim.scene.RadioEndpoint` for the
            antenna patterns; isotropic when omitted.
    """
    lam = scene_wavelength
    pts = path.points()
    length = path.total_length
    g_path = free_space_loss(lam, length)
    factors = {k: 1.0 for k in FACTORS}
    phase = 0.0
    events = path.events
    for i, ev in enumerate(events[1:-1], start=1):
        mat = ev.material
        kind = ev.kind
        if kind in (InteractionKind.Reflect, InteractionKind.Scatter):
            r = reflection_loss(ev.incident_angle, mat)
            if r < 0:
                phase += math.pi
            factors["reflect"] *= abs(r)
            factors["rough"] *= roughness_loss(ev.incident_angle, mat.roughness, lam)
            if kind == InteractionKind.Scatter:
                factors["scat"] *= scattering_loss(ev.scatter_offset, mat.scatter_exponent)
        elif kind == InteractionKind.Penetrate:
            factors["penetrate"] *= penetration_loss(ev.incident_angle, mat)
        elif kind == InteractionKind.Diffract:
            a, e, b = pts[i - 1], pts[i], pts[i + 1]
            direct = b - a
            d = float(np.linalg.norm(direct))
            a1 = _angle(e - a, direct)
            a2 = _angle(e - b, -direct)
            nu = diffraction_nu(d, lam, a1, a2)
            factors["diffract"] *= diffraction_loss(nu, diffraction_convention)
        elif kind == InteractionKind.Backscatter:
            factors["backscatter"] *= backscatter_loss(ev.incident_angle, mat)
    departure = _unit(pts[1] - pts[0])
    arrival = _unit(pts[-2] - pts[-1])
    g_beam = 1.0
    if tx is not None and rx is not None:
        g_beam = beam_loss(tx.to_local(departure), rx.to_local(arrival),
                           tx.pattern, rx.pattern)
    amplitude = g_path * g_beam
    for k in FACTORS:
        amplitude *= factors[k]
    v_s = math.fsum(ev.surface_speed for ev in events[1:-1])
    return PathGain(
        amplitude=float(abs(amplitude)),
        delay=length / C0,
        doppler_phase_per_symbol=doppler_phase(radio, v_s),
        phase=math.fmod(phase, 2.0 * math.pi),
        path_loss=g_path,
        beam_loss=g_beam,
        loss_breakdown=factors,
        radial_speed=v_s,
        beta_printed=beta_printed(radio, v_s),
        arrival=tuple(arrival.tolist()),
        departure=tuple(departure.tolist()),
    )


def loss_table_rows(gains):
    """Rows for the per-frame loss-breakdown CSV."""
    header = ["path", "amplitude", "path_loss", "beam_loss", *FACTORS,
              "delay_s", "doppler_phase_rad", "beta_printed"]
    rows = [header]
    for i, g in enumerate(gains):
        rows.append([i, g.amplitude, g.path_loss, g.beam_loss,
                     *(g.loss_breakdown.get(k, 1.0) for k in FACTORS),
                     g.delay, g.doppler_phase_per_symbol, g.beta_printed])
    return rows
