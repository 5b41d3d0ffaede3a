"""Closed-form spatial responses of the tetrahedral MIC array and FOA encoding.

Angles are in degrees; elevation is measured from the horizontal plane and
azimuth grows counter-clockwise seen from above.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clip import DEFAULT_SAMPLE_RATE, MultichannelClip
from .dsp import hankel2_deriv_all, legendre_all
from .exceptions import DomainError

SPEED_OF_SOUND = 343.0
ARRAY_RADIUS = 0.042
SERIES_ORDER = 30


def wrap_azimuth(az):
    """Wrap to the half-open range [-180, 180)."""
    if isinstance(az, (int, float)):
        return (float(az) + 180.0) % 360.0 - 180.0
    out = (np.asarray(az, dtype=float) + 180.0) % 360.0 - 180.0
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Doa:
    azimuth: float
    elevation: float

    def __post_init__(self):
        if not -90.0 <= self.elevation <= 90.0:
            raise DomainError(f"elevation {self.elevation} outside [-90, 90]")
        object.__setattr__(self, "azimuth", wrap_azimuth(self.azimuth))
        object.__setattr__(self, "elevation", float(self.elevation))

    def unit_vector(self) -> np.ndarray:
        return doa_to_unit(self.azimuth, self.elevation)

    @classmethod
    def from_vector(cls, v) -> "Doa":
        az, el = unit_to_doa(v)
        return cls(float(az), float(el))


def doa_to_unit(azimuth, elevation) -> np.ndarray:
    """Cartesian unit vector(s) ``(x, y, z)``; trailing axis holds xyz."""
    az = np.radians(np.asarray(azimuth, dtype=float))
    el = np.radians(np.asarray(elevation, dtype=float))
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


def unit_to_doa(v):
    v = np.asarray(v, dtype=float)
    az = np.degrees(np.arctan2(v[..., 1], v[..., 0]))
    el = np.degrees(np.arctan2(v[..., 2], np.hypot(v[..., 0], v[..., 1])))
    return wrap_azimuth(az), el


def angular_distance(u, v):
    """Great-circle distance in degrees between unit vectors (broadcasting)."""
    dot = np.clip(np.sum(np.asarray(u) * np.asarray(v), axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dot))


@dataclass(frozen=True)
class MicGeometry:
    positions: tuple = ((45.0, 35.0), (-45.0, -35.0), (135.0, -35.0), (-135.0, 35.0))
    radius: float = ARRAY_RADIUS
    speed_of_sound: float = SPEED_OF_SOUND

    def direction(self, mic_index: int) -> Doa:
        if not 1 <= mic_index <= len(self.positions):
            raise IndexError(f"mic index {mic_index} outside 1..{len(self.positions)}")
        return Doa(*self.positions[mic_index - 1])


TETRAHEDRAL = MicGeometry()


def cos_gamma(mic_index: int, doa: Doa, geometry: MicGeometry = TETRAHEDRAL) -> float:
    """Cosine of the angle between microphone ``mic_index`` (1-based) and ``doa``."""
    if not 1 <= mic_index <= len(geometry.positions):
        raise IndexError(f"mic index {mic_index} outside 1..{len(geometry.positions)}")
    az_m, el_m = geometry.positions[mic_index - 1]
    el, el_m = math.radians(doa.elevation), math.radians(el_m)
    d_az = math.radians(doa.azimuth - az_m)
    val = math.cos(el) * math.cos(el_m) * math.cos(d_az) + math.sin(el) * math.sin(el_m)
    return min(1.0, max(-1.0, val))


def mic_response(mic_index: int, doa: Doa, freq, geometry: MicGeometry = TETRAHEDRAL,
                 n_max: int = SERIES_ORDER):
    """Rigid-sphere capsule response, truncated to degrees ``0..n_max``.

    ``freq`` may be a scalar or an array of frequencies in Hz.
    """
    freq = np.asarray(freq, dtype=float)
    if np.any(freq <= 0):
        raise DomainError("the baffled-sphere response is singular at 0 Hz")
    kr = 2.0 * np.pi * freq * geometry.radius / geometry.speed_of_sound
    p = legendre_all(n_max, cos_gamma(mic_index, doa, geometry))
    dh = hankel2_deriv_all(n_max, kr)
    n = np.arange(n_max + 1).reshape((-1,) + (1,) * kr.ndim)
    terms = (1j ** (n - 1)) / dh * (2 * n + 1) * p.reshape(n.shape)
    out = terms.sum(axis=0) / kr ** 2
    return complex(out) if out.ndim == 0 else out


def foa_steering(doa: Doa) -> np.ndarray:
    """SN3D first-order gains in (W, Y, Z, X) order."""
    az, el = math.radians(doa.azimuth), math.radians(doa.elevation)
    return np.array([1.0, math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)])


def synthesize_foa_point_source(signal, doa: Doa,
                                sample_rate: int = DEFAULT_SAMPLE_RATE) -> MultichannelClip:
    """Anechoic FOA encoding of a mono signal arriving from ``doa``."""
    signal = np.asarray(signal, dtype=float).ravel()
    if signal.size == 0:
        raise ValueError("signal is empty")
    return MultichannelClip(foa_steering(doa)[:, None] * signal[None, :], sample_rate, "FOA")


def synthesize_mic_point_source(signal, doa: Doa, sample_rate: int = DEFAULT_SAMPLE_RATE,
                                geometry: MicGeometry = TETRAHEDRAL) -> MultichannelClip:
    """Far-field plane wave on the baffled tetrahedral array.

    Filtering is circular (whole-signal FFT), which is what test fixtures
    want: the output stays the same length and exactly reproducible.
    """
    signal = np.asarray(signal, dtype=float).ravel()
    if signal.size == 0:
        raise ValueError("signal is empty")
    spec = np.fft.rfft(signal)
    freqs = np.fft.rfftfreq(signal.size, 1.0 / sample_rate)
    out = np.empty((4, signal.size))
    for m in range(1, 5):
        h = np.ones(freqs.size, dtype=complex)  # response tends to 1 at DC
        h[1:] = mic_response(m, doa, freqs[1:], geometry)
        if signal.size % 2 == 0:
            h[-1] = h[-1].real  # Nyquist bin of a real signal must stay real
        out[m - 1] = np.fft.irfft(spec * h, n=signal.size)
    return MultichannelClip(out, sample_rate, "MIC")


def synthesize_point_source(signal, doa: Doa, sample_rate: int = DEFAULT_SAMPLE_RATE) -> MultichannelClip:
    """8-channel BOTH fixture: MIC response followed by FOA encoding."""
    return MultichannelClip.combine(synthesize_mic_point_source(signal, doa, sample_rate),
                                    synthesize_foa_point_source(signal, doa, sample_rate))
