"""Estimator plumbing and input validation shared by the augmenters."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator

from .clip import MultichannelClip
from .dsp import StftConfig, StftTensor
from .exceptions import FormatUnknown


def check_random_state(seed) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def check_clip(clip, formats=None, sample_rate: int | None = None) -> MultichannelClip:
    if isinstance(clip, MultichannelClip):
        out = clip
    else:
        arr = np.asarray(clip, dtype=float)
        fmt = {8: "BOTH"}.get(arr.shape[0] if arr.ndim == 2 else 0, "RAW")
        out = MultichannelClip(arr, sample_rate or 24000, fmt)
    if not np.all(np.isfinite(out.data)):
        raise ValueError("clip contains NaN or infinite samples")
    if formats is not None and out.fmt not in formats:
        raise FormatUnknown(f"expected a clip in {tuple(formats)}, got {out.fmt}")
    return out


def check_stft(x, n_channels: int | None = None, min_frames: int = 1) -> StftTensor:
    if not isinstance(x, StftTensor):
        arr = np.asarray(x)
        if arr.ndim != 3:
            raise ValueError(f"expected (channel, frame, bin) data, got shape {arr.shape}")
        x = StftTensor(arr, StftConfig(window_len=2 * (arr.shape[2] - 1),
                                       hop=max(1, (arr.shape[2] - 1))))
    if n_channels is not None and x.n_channels != n_channels:
        raise ValueError(f"expected {n_channels} channels, got {x.n_channels}")
    if x.n_frames < min_frames:
        raise ValueError(f"expected at least {min_frames} frames, got {x.n_frames}")
    return x


def check_paired(X, y):
    X = list(X)
    y = list(y) if y is not None else [None] * len(X)
    if len(X) != len(y):
        raise ValueError(f"got {len(X)} clips but {len(y)} annotation lists")
    return X, y


class BaseAugmenter(BaseEstimator):
    """Stateless augmenters: ``fit`` only validates, ``fit_resample`` augments.

    ``fit_resample(X, y)`` takes parallel lists of clips and annotation lists
    and returns the augmented lists, the same contract as imbalanced-learn
    samplers so augmenters can sit in front of a feature pipeline.
    """

    def fit(self, X=None, y=None):
        self._validate_params_values()
        self.is_fitted_ = True
        return self

    def fit_resample(self, X, y=None):
        return self.fit(X, y)._resample(*check_paired(X, y))

    def _validate_params_values(self):
        pass

    def _resample(self, X, y):
        raise NotImplementedError
