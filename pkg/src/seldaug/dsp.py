"""Numerical building blocks: STFT, mel filterbank, Hermitian eigensolvers,
Legendre polynomials and spherical Hankel functions.

FFT convention: forward transforms are unnormalised and inverse transforms
carry the ``1/N`` factor (numpy's default).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .clip import MultichannelClip
from .exceptions import ConfigMismatch, DomainError, EmptyClip, NotHermitian, SingularNoiseMatrix

__all__ = [
    "StftConfig", "StftTensor", "EigenDecomposition",
    "hamming", "stft", "istft",
    "hz_to_mel", "mel_to_hz", "mel_breakpoints", "mel_filterbank",
    "eigh", "gev_principal",
    "legendre_p", "legendre_all",
    "spherical_bessel", "spherical_hankel2", "spherical_hankel2_deriv",
]


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 1024
    hop: int = 512
    window: str = "hamming"
    sample_rate: int = 24000

    def __post_init__(self):
        n = self.window_len
        if n <= 0 or n & (n - 1):
            raise ConfigMismatch(f"window_len must be a power of two, got {n}")
        if not 0 < self.hop <= n:
            raise ConfigMismatch(f"hop must lie in (0, window_len], got {self.hop}")
        if self.window != "hamming":
            raise ConfigMismatch(f"only the Hamming window is supported, got {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def n_frames(self, n_samples: int) -> int:
        # center padding adds window_len/2 on each side
        return 1 + n_samples // self.hop

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.window_len


@dataclass(frozen=True)
class StftTensor:
    """Complex spectrogram indexed ``[channel, frame, bin]``."""

    data: np.ndarray
    config: StftConfig = StftConfig()

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"STFT data must be 3-D (channel, frame, bin), got shape {data.shape}")
        if data.shape[2] != self.config.n_bins:
            raise ConfigMismatch(
                f"bin count {data.shape[2]} does not match config ({self.config.n_bins})")
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]

    def observations(self) -> np.ndarray:
        """Channel vectors laid out as ``(bin, frame, channel)``."""
        return np.transpose(self.data, (2, 1, 0))


def hamming(n: int) -> np.ndarray:
    """Periodic Hamming window (satisfies COLA at hop n/2 and n/4)."""
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: MultichannelClip | np.ndarray, cfg: StftConfig = StftConfig()) -> StftTensor:
    data = clip.data if isinstance(clip, MultichannelClip) else np.atleast_2d(np.asarray(clip))
    if data.shape[0] < 1:
        raise EmptyClip("clip has no channels")
    if data.shape[1] < cfg.hop:
        raise EmptyClip(f"clip of {data.shape[1]} samples is shorter than one hop ({cfg.hop})")
    n, hop = cfg.window_len, cfg.hop
    padded = np.pad(data, ((0, 0), (n // 2, n // 2)))
    n_frames = cfg.n_frames(data.shape[1])
    idx = np.arange(n)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[:, idx] * hamming(n)
    return StftTensor(np.fft.rfft(frames, axis=-1), cfg)


def _check_overlap_add(cfg: StftConfig) -> np.ndarray:
    w = hamming(cfg.window_len)
    total = np.zeros(cfg.hop)
    for start in range(0, cfg.window_len, cfg.hop):
        seg = w[start:start + cfg.hop]
        total[:len(seg)] += seg
    if np.ptp(total) > 1e-10 * total.max():
        raise ConfigMismatch(
            f"Hamming window of {cfg.window_len} samples at hop {cfg.hop} "
            "violates constant overlap-add")
    return w


def istft(t: StftTensor, length: int | None = None, sample_rate: int | None = None,
          fmt: str = "RAW") -> MultichannelClip:
    """Least-squares overlap-add inverse of :func:`stft`.

    Without ``length`` the output spans ``(frames - 1) * hop + window_len``
    samples on the original time axis; pass the source length to trim.
    """
    cfg = t.config
    w = _check_overlap_add(cfg)
    n, hop = cfg.window_len, cfg.hop
    frames = np.fft.irfft(t.data, n=n, axis=-1) * w
    n_ch, n_frames = t.data.shape[:2]
    full = n + hop * (n_frames - 1)
    out = np.zeros((n_ch, full))
    norm = np.zeros(full)
    for i in range(n_frames):
        out[:, i * hop:i * hop + n] += frames[:, i]
        norm[i * hop:i * hop + n] += w * w
    nz = norm > 1e-12
    out[:, nz] /= norm[nz]
    out[:, ~nz] = 0.0
    out = out[:, n // 2:]
    if length is None:
        length = full
    if out.shape[1] < length:
        out = np.pad(out, ((0, 0), (0, length - out.shape[1])))
    return MultichannelClip(out[:, :length], sample_rate or cfg.sample_rate, fmt)


# --------------------------------------------------------------------------
# mel filterbank (HTK scale, unit-peak triangles)

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_breakpoints(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """The ``n_mels + 2`` edge/centre frequencies in Hz."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(n_mels: int = 64, n_bins: int = 513, sample_rate: int = 24000,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filters of shape ``(n_mels, n_bins)`` with unit peak."""
    if not 0 < n_mels < n_bins:
        raise ValueError(f"need 0 < n_mels < n_bins, got {n_mels}, {n_bins}")
    fmax = sample_rate / 2.0 if fmax is None else fmax
    freqs = np.arange(n_bins) * sample_rate / (2.0 * (n_bins - 1))
    pts = mel_breakpoints(n_mels, fmin, fmax)
    lo, ctr, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs - lo) / (ctr - lo)
    falling = (hi - freqs) / (hi - ctr)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    if np.any(bank.sum(axis=1) <= 0):
        raise ValueError("some mel filters fall between FFT bins; use fewer mel bands")
    return bank


# --------------------------------------------------------------------------
# Hermitian eigendecomposition

class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # real, descending along the last axis
    eigenvectors: np.ndarray  # unit-norm columns


def _as_hermitian(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise NotHermitian(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    asym = np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2))), initial=0.0)
    if asym > 1e-12 * scale:
        raise NotHermitian(f"{name} is not Hermitian (asymmetry {asym:.3g})")
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def eigh(m, tol: float = 1e-15, max_sweeps: int = 60) -> EigenDecomposition:
    """Cyclic Jacobi eigendecomposition of one or a stack of Hermitian matrices.

    Every rotation is applied to the whole stack at once, so ``m`` of shape
    ``(..., M, M)`` costs the same number of Python-level steps as a single
    matrix.
    """
    a = _as_hermitian(m)
    batch_shape, n = a.shape[:-2], a.shape[-1]
    a = a.reshape(-1, n, n).copy()
    idx = np.arange(n)
    a[:, idx, idx] = a[:, idx, idx].real
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), a.shape).copy()
    scale = np.sum(np.abs(a) ** 2, axis=(1, 2))
    # off-diagonal entries below this are treated as already annihilated
    floor = 1e-30 * np.sqrt(scale)

    offdiag = ~np.eye(n, dtype=bool)

    for _ in range(max_sweeps):
        # summed directly: total minus diagonal energy cancels catastrophically near convergence
        off = np.sum(np.abs(a[:, offdiag]) ** 2, axis=1)
        if np.all(off <= tol * tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                b = np.abs(apq)
                live = b > floor
                bs = np.where(live, b, 1.0)
                phase = np.where(live, apq / bs, 1.0)
                theta = (a[:, q, q].real - a[:, p, p].real) / (2.0 * bs)
                big = np.abs(theta) > 1e150
                ts = np.where(big, 1.0, theta)
                t = np.where(ts >= 0, 1.0, -1.0) / (np.abs(ts) + np.sqrt(ts * ts + 1.0))
                t = np.where(big, 0.5 / np.where(big, theta, 1.0), t)
                t = np.where(live, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # G = diag(1, e^{-i alpha}) @ [[c, s], [-s, c]]
                g00, g01 = c, s
                g10, g11 = -s * np.conj(phase), c * np.conj(phase)

                cp, cq = a[:, :, p].copy(), a[:, :, q].copy()
                a[:, :, p] = cp * g00[:, None] + cq * g10[:, None]
                a[:, :, q] = cp * g01[:, None] + cq * g11[:, None]
                rp, rq = a[:, p, :].copy(), a[:, q, :].copy()
                a[:, p, :] = np.conj(g00)[:, None] * rp + np.conj(g10)[:, None] * rq
                a[:, q, :] = np.conj(g01)[:, None] * rp + np.conj(g11)[:, None] * rq
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
                a[:, p, p] = a[:, p, p].real
                a[:, q, q] = a[:, q, q].real

                vp, vq = v[:, :, p].copy(), v[:, :, q].copy()
                v[:, :, p] = vp * g00[:, None] + vq * g10[:, None]
                v[:, :, q] = vp * g01[:, None] + vq * g11[:, None]

    w = a[:, idx, idx].real
    order = np.argsort(-w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return EigenDecomposition(w.reshape(*batch_shape, n), v.reshape(*batch_shape, n, n))


def gev_principal(a, b, loading: float = 1e-6) -> np.ndarray:
    """Unit-norm maximiser of ``(w^H a w) / (w^H b w)``.

    ``b`` is diagonally loaded with ``loading * tr(b) / M`` and whitened by
    its Cholesky factor, which turns the pencil into an ordinary Hermitian
    eigenproblem.  Accepts stacks ``(..., M, M)``.
    """
    a = _as_hermitian(a, "a")
    b = _as_hermitian(b, "b")
    n = b.shape[-1]
    tr = np.trace(b, axis1=-2, axis2=-1).real
    if np.any(~np.isfinite(tr)) or np.any(tr <= 0):
        raise SingularNoiseMatrix("noise matrix has non-positive trace")
    bl = b + (loading * tr / n)[..., None, None] * np.eye(n)
    try:
        chol = np.linalg.cholesky(bl)
    except np.linalg.LinAlgError as exc:
        raise SingularNoiseMatrix("noise matrix is not positive definite after loading") from exc
    linv = np.linalg.inv(chol)
    c = linv @ a @ np.conj(np.swapaxes(linv, -1, -2))
    c = 0.5 * (c + np.conj(np.swapaxes(c, -1, -2)))
    y = eigh(c).eigenvectors[..., :, 0]
    w = np.einsum("...ji,...j->...i", np.conj(linv), y)  # L^{-H} y
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# special functions

def legendre_all(n_max: int, x) -> np.ndarray:
    """``P_0 .. P_{n_max}`` at ``x`` via Bonnet's recurrence, stacked on axis 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x
    for k in range(1, n_max):
        out[k + 1] = ((2 * k + 1) * x * out[k] - k * out[k - 1]) / (k + 1)
    return out


def legendre_p(n: int, x):
    if n < 0:
        raise DomainError("Legendre degree must be non-negative")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise DomainError("Legendre argument must lie in [-1, 1]")
    val = legendre_all(n, x)[n]
    return float(val) if val.ndim == 0 else val


def spherical_bessel(n_max: int, x):
    """``(j_n, y_n)`` for ``n = 0..n_max`` by upward recurrence."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("spherical Bessel functions are evaluated here for x > 0 only")
    j = np.empty((n_max + 2,) + x.shape)
    y = np.empty_like(j)
    s, c = np.sin(x), np.cos(x)
    j[0], y[0] = s / x, -c / x
    j[1], y[1] = s / x ** 2 - c / x, -c / x ** 2 - s / x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_max + 1):
            j[k + 1] = (2 * k + 1) / x * j[k] - j[k - 1]
            y[k + 1] = (2 * k + 1) / x * y[k] - y[k - 1]
    return j[:n_max + 1], y[:n_max + 1]


def _hankel2_table(n_max: int, x):
    j, y = spherical_bessel(n_max + 1, x)
    return j - 1j * y


def spherical_hankel2(n: int, x):
    """Spherical Hankel function of the second kind ``h_n = j_n - i y_n``."""
    return _hankel2_table(n, x)[n]


def spherical_hankel2_deriv(n: int, x):
    """Derivative of ``h_n`` with respect to its argument."""
    h = _hankel2_table(n + 1, x)
    if n == 0:
        return -h[1]
    return h[n - 1] - (n + 1) / np.asarray(x, dtype=float) * h[n]


def hankel2_deriv_all(n_max: int, x) -> np.ndarray:
    """``h_n'`` for every ``n = 0..n_max`` at once."""
    h = _hankel2_table(n_max + 1, x)
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape, dtype=np.complex128)
    out[0] = -h[1]
    for k in range(1, n_max + 1):
        out[k] = h[k - 1] - (k + 1) / x * h[k]
    return out
