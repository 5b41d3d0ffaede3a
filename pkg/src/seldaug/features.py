"""The 17-map SELD input stack.

Map layout for 8-channel (MIC + FOA) input::

    0-3    FOA log-mel (W, Y, Z, X)
    4-7    MIC log-mel (M1..M4)
    8-10   intensity vector (x, y, z)
    11-16  GCC-PHAT, pairs (1,2) (1,3) (1,4) (2,3) (2,4) (3,4)

Maps 0-10 are the maskable set; the GCC-PHAT maps are never masked.  FOA-only
input yields 7 maps (log-mel + IV) and MIC-only input 10 (log-mel + GCC).
"""
from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .base import check_clip
from .clip import MultichannelClip
from .dsp import StftConfig, StftTensor, mel_filterbank, stft
from .exceptions import FormatMismatch, FormatUnknown

LOG_FLOOR = 1e-10
IV_EPS = 1e-10
N_MELS = 64
N_LAGS = 64
MIC_PAIRS = tuple(itertools.combinations(range(4), 2))


@dataclass
class FeatureStack:
    maps: np.ndarray  # (map, frame, 64), float32 or float64
    layout: tuple
    frame_rate: float

    def __post_init__(self):
        if self.maps.ndim != 3 or self.maps.shape[0] != len(self.layout):
            raise ValueError(f"maps of shape {self.maps.shape} do not match a {len(self.layout)}-map layout")

    @property
    def n_maps(self) -> int:
        return self.maps.shape[0]

    @property
    def n_frames(self) -> int:
        return self.maps.shape[1]

    def copy(self) -> "FeatureStack":
        return FeatureStack(self.maps.copy(), self.layout, self.frame_rate)


def _as_stft(x, cfg: StftConfig | None = None) -> StftTensor:
    if isinstance(x, StftTensor):
        return x
    clip = check_clip(x)
    return stft(clip, cfg or StftConfig(sample_rate=clip.sample_rate))


def logmel(x, bank: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    """Natural-log mel power, shape (channel, frame, n_mels)."""
    x = _as_stft(x)
    if bank.shape[1] != x.n_bins:
        raise ValueError(f"filterbank expects {bank.shape[1]} bins, spectrum has {x.n_bins}")
    power = np.abs(x.data) ** 2
    return np.log(np.maximum(power @ bank.T, floor))


def intensity_vector(foa, bank: np.ndarray, eps: float = IV_EPS) -> np.ndarray:
    """Mel-pooled active intensity, shape (3, frame, n_mels) in (x, y, z) order.

    Per unit, ``Re(conj(W) * (Y, Z, X))`` is divided by the total energy
    ``|W|^2 + (|Y|^2 + |Z|^2 + |X|^2) / 3`` before pooling.
    """
    foa = _as_stft(foa)
    if foa.n_channels != 4:
        raise FormatMismatch(f"intensity vector needs 4 FOA channels, got {foa.n_channels}")
    w, y, z, xx = foa.data
    energy = np.abs(w) ** 2 + (np.abs(y) ** 2 + np.abs(z) ** 2 + np.abs(xx) ** 2) / 3.0
    iv = np.real(np.conj(w)[None] * np.stack([xx, y, z])) / (energy + eps)[None]
    return iv @ bank.T


def gcc_phat(mic, n_lags: int = N_LAGS) -> np.ndarray:
    """Phase-transform cross-correlation per pair and frame, shape (6, frame, n_lags).

    Lag bins run from ``-n_lags/2`` to ``n_lags/2 - 1`` with lag zero at index
    ``n_lags/2``; a positive lag means the second channel of the pair lags
    the first.  Zero cross-spectrum cells contribute zero.
    """
    mic = _as_stft(mic)
    if mic.n_channels != 4:
        raise FormatMismatch(f"GCC-PHAT needs 4 MIC channels, got {mic.n_channels}")
    n_fft = mic.config.window_len
    half = n_lags // 2
    out = np.empty((len(MIC_PAIRS), mic.n_frames, n_lags))
    for k, (i, j) in enumerate(MIC_PAIRS):
        cross = mic.data[j] * np.conj(mic.data[i])
        mag = np.abs(cross)
        phat = np.divide(cross, mag, out=np.zeros_like(cross), where=mag > 0)
        cc = np.fft.irfft(phat, n=n_fft, axis=-1)
        out[k] = np.concatenate([cc[:, -half:], cc[:, :n_lags - half]], axis=-1)
    return out


def build_stack(clip, cfg: StftConfig | None = None, bank: np.ndarray | None = None) -> FeatureStack:
    """Feature stack for a MIC, FOA or BOTH clip (10, 7 or 17 maps)."""
    clip = check_clip(clip)
    cfg = cfg or StftConfig(sample_rate=clip.sample_rate)
    if bank is None:
        bank = mel_filterbank(N_MELS, cfg.n_bins, cfg.sample_rate)
    spec = stft(clip, cfg)
    maps, layout = [], []
    if clip.fmt == "BOTH":
        mic, foa = StftTensor(spec.data[:4], cfg), StftTensor(spec.data[4:], cfg)
    elif clip.fmt == "MIC":
        mic, foa = spec, None
    elif clip.fmt == "FOA":
        mic, foa = None, spec
    else:
        raise FormatUnknown(f"feature extraction needs MIC, FOA or BOTH audio, got {clip.fmt}")
    if foa is not None:
        maps.append(logmel(foa, bank))
        layout += [f"foa_logmel_{c}" for c in "WYZX"]
    if mic is not None:
        maps.append(logmel(mic, bank))
        layout += [f"mic_logmel_{m}" for m in range(1, 5)]
    if foa is not None:
        maps.append(intensity_vector(foa, bank))
        layout += ["iv_x", "iv_y", "iv_z"]
    if mic is not None:
        maps.append(gcc_phat(mic))
        layout += [f"gcc_{i + 1}{j + 1}" for i, j in MIC_PAIRS]
    return FeatureStack(np.concatenate(maps), tuple(layout), cfg.frame_rate)


class SeldFeatureExtractor(TransformerMixin, BaseEstimator):
    """Clip -> :class:`FeatureStack` transformer.

    ``transform`` accepts a single clip or a list of clips and returns the
    matching stack or list of stacks.
    """

    def __init__(self, n_mels: int = N_MELS, window_len: int = 1024, hop: int = 512,
                 sample_rate: int = 24000):
        self.n_mels = n_mels
        self.window_len = window_len
        self.hop = hop
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        self.config_ = StftConfig(self.window_len, self.hop, "hamming", self.sample_rate)
        self.filterbank_ = mel_filterbank(self.n_mels, self.config_.n_bins, self.sample_rate)
        return self

    def transform(self, X):
        if not hasattr(self, "filterbank_"):
            self.fit()
        if isinstance(X, (MultichannelClip, np.ndarray)):
            return build_stack(X, self.config_, self.filterbank_)
        return [build_stack(c, self.config_, self.filterbank_) for c in X]


# --------------------------------------------------------------------------
# binary tensor files
#
#   bytes 0-7    magic b"SELDFEAT"
#   bytes 8-9    format version, uint16 little-endian (currently 1)
#   bytes 10-13  header length H, uint32 little-endian
#   next H bytes UTF-8 JSON: {"layout": [...], "dtype": "<f4", "shape": [maps, frames, bins],
#                "frame_rate": float}
#   remainder    C-order array data in the stated dtype (always little-endian)

MAGIC = b"SELDFEAT"
FILE_VERSION = 1


def write_features(stack: FeatureStack, path, dtype: str = "<f4") -> None:
    data = np.ascontiguousarray(stack.maps, dtype=np.dtype(dtype))
    header = json.dumps({"layout": list(stack.layout), "dtype": np.dtype(dtype).str,
                         "shape": list(data.shape), "frame_rate": stack.frame_rate},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<HI", FILE_VERSION, len(header)) + header)
        fh.write(data.tobytes())


def read_features(path) -> FeatureStack:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a feature file")
    version, hlen = struct.unpack("<HI", raw[8:14])
    if version != FILE_VERSION:
        raise ValueError(f"{path}: unsupported feature file version {version}")
    header = json.loads(raw[14:14 + hlen])
    data = np.frombuffer(raw[14 + hlen:], dtype=np.dtype(header["dtype"])).reshape(header["shape"])
    return FeatureStack(data.copy(), tuple(header["layout"]), float(header["frame_rate"]))
