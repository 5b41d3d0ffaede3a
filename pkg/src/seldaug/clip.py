"""Multichannel audio container.

Channel layouts
---------------
``MIC``  4 tetrahedral capsule signals (M1..M4).
``FOA``  4 first-order Ambisonics channels in (W, Y, Z, X) order, SN3D.
``BOTH`` 8 channels, MIC first then FOA.
``RAW``  any channel count; used for mono sources and ad-hoc fixtures.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import FormatUnknown, LayoutMismatch

FORMATS = ("MIC", "FOA", "BOTH", "RAW")
FORMAT_CHANNELS = {"MIC": 4, "FOA": 4, "BOTH": 8}
DEFAULT_SAMPLE_RATE = 24000


@dataclass(frozen=True)
class MultichannelClip:
    """Time-domain audio of shape ``(channels, samples)``."""

    data: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    fmt: str = "RAW"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise ValueError(f"clip data must be 2-D (channels, samples), got shape {data.shape}")
        if self.fmt not in FORMATS:
            raise FormatUnknown(f"unknown clip format {self.fmt!r}; expected one of {FORMATS}")
        expected = FORMAT_CHANNELS.get(self.fmt)
        if expected is not None and data.shape[0] != expected:
            raise FormatUnknown(
                f"{self.fmt} clips need {expected} channels, got {data.shape[0]}")
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.n_samples / self.sample_rate

    def replace(self, data: np.ndarray) -> "MultichannelClip":
        return MultichannelClip(data, self.sample_rate, self.fmt, dict(self.meta))

    @property
    def mic(self) -> "MultichannelClip":
        if self.fmt == "MIC":
            return self
        if self.fmt != "BOTH":
            raise FormatUnknown(f"{self.fmt} clip has no MIC part")
        return MultichannelClip(self.data[:4], self.sample_rate, "MIC")

    @property
    def foa(self) -> "MultichannelClip":
        if self.fmt == "FOA":
            return self
        if self.fmt != "BOTH":
            raise FormatUnknown(f"{self.fmt} clip has no FOA part")
        return MultichannelClip(self.data[4:], self.sample_rate, "FOA")

    @classmethod
    def combine(cls, mic: "MultichannelClip", foa: "MultichannelClip") -> "MultichannelClip":
        """Stack a MIC and an FOA clip into one 8-channel BOTH clip."""
        if mic.fmt != "MIC" or foa.fmt != "FOA":
            raise FormatUnknown("combine() expects a MIC clip and an FOA clip")
        if mic.sample_rate != foa.sample_rate or mic.n_samples != foa.n_samples:
            raise LayoutMismatch("MIC and FOA parts differ in sample rate or length")
        return cls(np.concatenate([mic.data, foa.data]), mic.sample_rate, "BOTH")
