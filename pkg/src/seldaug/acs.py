"""Audio channel swapping.

Eight DOA transformations keep the tetrahedral MIC array's geometry intact,
so each one can be realised exactly by permuting MIC capsules and by a
signed permutation of the FOA channels.  Labels are mapped alongside.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotations import EventAnnotationList
from .arrays import Doa, wrap_azimuth
from .base import BaseAugmenter, check_clip
from .clip import MultichannelClip
from .exceptions import FormatUnknown

IDENTITY_PATTERN = 3


@dataclass(frozen=True)
class DoaTransform:
    """One row of the transform table.

    ``mic_perm[m]`` is the (1-based) input capsule that feeds output capsule
    ``m + 1``; ``foa_map[k] = (source, sign)`` likewise for the FOA channels
    in (W, Y, Z, X) order.  The DOA map is ``az -> az_sign * az + az_offset``,
    ``el -> el_sign * el``.
    """

    id: int
    az_sign: int
    az_offset: float
    el_sign: int
    mic_perm: tuple
    foa_map: tuple

    def __post_init__(self):
        if sorted(self.mic_perm) != [1, 2, 3, 4]:
            raise ValueError(f"mic_perm {self.mic_perm} is not a permutation of 1..4")
        if sorted(s for s, _ in self.foa_map) != [1, 2, 3, 4]:
            raise ValueError(f"foa_map {self.foa_map} is not a signed permutation")
        if self.foa_map[0] != (1, 1):
            raise ValueError("the W channel must map to itself")

    @property
    def label(self) -> str:
        az = ("" if self.az_sign > 0 else "-") + "phi"
        if self.az_offset:
            az += f"{self.az_offset:+g}"
        el = ("" if self.el_sign > 0 else "-") + "theta"
        return f"({az}, {el})"

    def map_angles(self, azimuth, elevation):
        return (wrap_azimuth(self.az_sign * np.asarray(azimuth, dtype=float) + self.az_offset),
                self.el_sign * np.asarray(elevation, dtype=float))

    def map_doa(self, doa: Doa) -> Doa:
        return Doa(wrap_azimuth(self.az_sign * doa.azimuth + self.az_offset),
                   self.el_sign * doa.elevation)

    def foa_matrix(self) -> np.ndarray:
        """4x4 signed permutation matrix acting on (W, Y, Z, X) column vectors."""
        out = np.zeros((4, 4))
        for k, (src, sign) in enumerate(self.foa_map):
            out[k, src - 1] = sign
        return out

    @property
    def is_identity(self) -> bool:
        return (self.az_sign, self.az_offset, self.el_sign) == (1, 0.0, 1)


# MIC permutations here are the ones under which every capsule keeps its angle
# to the transformed source; rows 1 and 5 are each other's inverse.
_TABLE = (
    DoaTransform(1, 1, -90.0, -1, (3, 1, 4, 2), ((1, 1), (4, -1), (3, -1), (2, 1))),
    DoaTransform(2, -1, -90.0, 1, (4, 2, 3, 1), ((1, 1), (4, -1), (3, 1), (2, -1))),
    DoaTransform(3, 1, 0.0, 1, (1, 2, 3, 4), ((1, 1), (2, 1), (3, 1), (4, 1))),
    DoaTransform(4, -1, 0.0, -1, (2, 1, 4, 3), ((1, 1), (2, -1), (3, -1), (4, 1))),
    DoaTransform(5, 1, 90.0, -1, (2, 4, 1, 3), ((1, 1), (4, 1), (3, -1), (2, -1))),
    DoaTransform(6, -1, 90.0, 1, (1, 3, 2, 4), ((1, 1), (4, 1), (3, 1), (2, 1))),
    DoaTransform(7, 1, 180.0, 1, (4, 3, 2, 1), ((1, 1), (2, -1), (3, 1), (4, -1))),
    DoaTransform(8, -1, 180.0, -1, (3, 4, 1, 2), ((1, 1), (2, 1), (3, -1), (4, -1))),
)


def transform_table() -> list:
    """All eight transformations, in table order (row ids 1..8)."""
    return list(_TABLE)


def get_transform(pattern: int) -> DoaTransform:
    if not 1 <= int(pattern) <= len(_TABLE):
        raise ValueError(f"pattern {pattern} outside 1..{len(_TABLE)}")
    return _TABLE[int(pattern) - 1]


def _mic_part(data: np.ndarray, t: DoaTransform) -> np.ndarray:
    return data[np.asarray(t.mic_perm) - 1]


def _foa_part(data: np.ndarray, t: DoaTransform) -> np.ndarray:
    src = np.array([s for s, _ in t.foa_map]) - 1
    sign = np.array([g for _, g in t.foa_map], dtype=data.dtype)
    return data[src] * sign[:, None]


def apply_to_audio(clip: MultichannelClip, t: DoaTransform) -> MultichannelClip:
    clip = check_clip(clip)
    if clip.fmt == "MIC":
        out = _mic_part(clip.data, t)
    elif clip.fmt == "FOA":
        out = _foa_part(clip.data, t)
    elif clip.fmt == "BOTH":
        out = np.concatenate([_mic_part(clip.data[:4], t), _foa_part(clip.data[4:], t)])
    else:
        raise FormatUnknown(f"channel swapping needs MIC, FOA or BOTH audio, got {clip.fmt}")
    return clip.replace(out)


def apply_to_labels(ann: EventAnnotationList, t: DoaTransform) -> EventAnnotationList:
    def move(r):
        az, el = t.map_angles(r.azimuth, r.elevation)
        return r._replace(azimuth=float(az), elevation=float(el))
    return ann.map_rows(move)


def augment_acs(clip: MultichannelClip, ann: EventAnnotationList | None, patterns=None) -> list:
    """One ``(clip, annotations)`` pair per selected pattern, in table order."""
    ids = sorted(set(range(1, 9) if patterns is None else (int(p) for p in patterns)))
    if not ids:
        raise ValueError("at least one pattern must be selected")
    out = []
    for t in (get_transform(i) for i in ids):
        out.append((apply_to_audio(clip, t), None if ann is None else apply_to_labels(ann, t)))
    return out


class ChannelSwapAugmenter(BaseAugmenter):
    """Estimator wrapper around :func:`augment_acs`.

    Parameters
    ----------
    patterns : sequence of int, optional
        Transform ids (1..8) to apply; all eight when ``None``.
    """

    def __init__(self, patterns=None):
        self.patterns = patterns

    def _validate_params_values(self):
        if self.patterns is not None:
            if len(self.patterns) == 0:
                raise ValueError("patterns must be non-empty")
            for p in self.patterns:
                get_transform(p)

    def transform(self, X):
        """Augment a list of clips (labels ignored); returns a flat list."""
        return [c for clip in X for c, _ in augment_acs(clip, None, self.patterns)]

    def _resample(self, X, y):
        clips, anns = [], []
        for clip, ann in zip(X, y):
            for c, a in augment_acs(clip, ann, self.patterns):
                clips.append(c)
                anns.append(a)
        return clips, anns
