"""Multi-channel simulation.

Each static, single-event segment is split into a *spectral track* (a clean
single-channel spectrum recovered with CGMM masks and a GEV beamformer with
blind analytic normalisation) and a *spatial signature* (one trace-normalised
covariance per frequency bin).  New clips pair the spectral track of one
segment with the spatial signature of another.

Shapes follow the STFT container: spectra are ``(channel, frame, bin)`` and
per-bin matrices are ``(bin, M, M)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .annotations import EventAnnotationList
from .arrays import unit_to_doa
from .base import BaseAugmenter, check_clip, check_random_state, check_stft
from .clip import MultichannelClip
from .dsp import StftConfig, StftTensor, eigh, gev_principal, istft, stft
from .exceptions import DegenerateInput, DegenerateInputWarning, InsufficientSegments

LOADING = 1e-6
DEFAULT_EM_ITERATIONS = 10
SOURCE, NOISE = 0, 1


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def _load(a: np.ndarray, loading: float) -> np.ndarray:
    m = a.shape[-1]
    tr = np.trace(a, axis1=-2, axis2=-1).real
    return a + (loading * tr / m)[..., None, None] * np.eye(m)


def _weighted_psd(y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_t w_t y_t y_t^H`` for ``y`` of shape (F, T, M) and ``w`` (F, T)."""
    return np.einsum("ft,ftm,ftn->fmn", weights, y, np.conj(y))


@dataclass
class CgmmState:
    """Parameters and posteriors of the two-component CGMM.

    Component 0 is the source and component 1 the noise.  ``spatial`` has
    shape (2, F, M, M), ``variances`` and ``posteriors`` (2, F, T).
    ``log_likelihood`` holds the mean per-unit log-likelihood after
    initialisation and after every iteration.
    """

    spatial: np.ndarray
    variances: np.ndarray
    posteriors: np.ndarray
    log_likelihood: list = field(default_factory=list)
    degenerate_bins: np.ndarray | None = None

    @property
    def source_mask(self) -> np.ndarray:
        return self.posteriors[SOURCE]

    @property
    def noise_mask(self) -> np.ndarray:
        return self.posteriors[NOISE]


class _Cgmm:
    """Working arrays for one EM run; kept private so the state stays plain data."""

    def __init__(self, y: np.ndarray, loading: float):
        self.y = y
        self.loading = loading
        f, t, m = y.shape
        self.m = m
        energy = np.mean(np.sum(np.abs(y) ** 2, axis=-1), axis=1)
        self.dead = energy <= 0
        # fixed per-bin variance floor keeps the variance step an exact constrained maximum
        self.floor = 1e-10 * energy / m + 1e-300

    def quad(self, h: np.ndarray) -> np.ndarray:
        hinv = np.linalg.inv(h)
        return np.einsum("ftm,fmn,ftn->ft", np.conj(self.y), hinv, self.y).real

    def variances(self, h: np.ndarray) -> np.ndarray:
        return np.stack([np.maximum(self.quad(h[v]) / self.m, self.floor[:, None]) for v in range(2)])

    def log_probs(self, h: np.ndarray, phi: np.ndarray) -> np.ndarray:
        _, logdet = np.linalg.slogdet(h)  # (2, F)
        out = np.empty(phi.shape)
        for v in range(2):
            q = self.quad(h[v])
            out[v] = (-self.m * np.log(np.pi) - self.m * np.log(phi[v])
                      - logdet[v][:, None] - q / phi[v])
        return out

    def e_step(self, h, phi):
        logp = self.log_probs(h, phi) + np.log(0.5)
        top = np.max(logp, axis=0)
        norm = top + np.log(np.sum(np.exp(logp - top), axis=0))
        post = np.exp(logp - norm)
        live = ~self.dead
        ll = float(np.mean(norm[live])) if np.any(live) else 0.0
        return post, ll

    def m_step(self, h, phi, post):
        new = h.copy()
        for v in range(2):
            mass = post[v].sum(axis=1)
            upd = _weighted_psd(self.y, post[v] / phi[v]) / np.where(mass > 0, mass, 1.0)[:, None, None]
            upd = _load(_hermitize(upd), self.loading)
            ok = (mass > 1e-12 * post.shape[2]) & ~self.dead
            new[v][ok] = upd[ok]
        return new, self.variances(new)


def _initial_spatial(y: np.ndarray, dead: np.ndarray, loading: float) -> np.ndarray:
    f, t, m = y.shape
    phi_x = _weighted_psd(y, np.full((f, t), 1.0 / t))
    phi_x[dead] = np.eye(m)
    return np.stack([_load(_hermitize(phi_x), loading),
                     np.broadcast_to(np.eye(m, dtype=complex), (f, m, m)).copy()])


def cgmm_em(x, iters: int = DEFAULT_EM_ITERATIONS, loading: float = LOADING) -> CgmmState:
    """Fit the two-component CGMM with ``iters`` EM sweeps.

    Bins without any energy keep a noise posterior of one and are reported
    through a :class:`DegenerateInputWarning`.
    """
    x = check_stft(x)
    if x.n_frames < 2:
        raise DegenerateInput(f"CGMM needs at least 2 frames, got {x.n_frames}")
    if iters < 0:
        raise ValueError("iters must be non-negative")
    y = x.observations()
    model = _Cgmm(y, loading)
    if np.any(model.dead):
        warnings.warn(f"{int(model.dead.sum())} frequency bins carry no energy; "
                      "their units are assigned to noise", DegenerateInputWarning, stacklevel=2)
    h = _initial_spatial(y, model.dead, loading)
    phi = model.variances(h)
    post, ll = model.e_step(h, phi)
    history = [ll]
    for _ in range(iters):
        h, phi = model.m_step(h, phi, post)
        post, ll = model.e_step(h, phi)
        history.append(ll)

    # the component carrying more mask-weighted energy is the source, bin by bin
    power = np.sum(np.abs(y) ** 2, axis=-1)
    weighted = np.sum(post * power[None], axis=2)
    swap = weighted[NOISE] > weighted[SOURCE]
    for arr in (h, phi, post):
        arr[:, swap] = arr[::-1][:, swap]
    post[SOURCE, model.dead] = 0.0
    post[NOISE, model.dead] = 1.0
    return CgmmState(h, phi, post, history, model.dead)


def observed_psd(x) -> np.ndarray:
    """Per-bin average ``x x^H`` over frames, shape (F, M, M)."""
    x = check_stft(x)
    y = x.observations()
    return _weighted_psd(y, np.full(y.shape[:2], 1.0 / y.shape[1]))


def noise_psd(x, state: CgmmState) -> np.ndarray:
    """Noise-mask-weighted PSD; bins with an empty noise mask fall back to the observed PSD."""
    return _masked_psd(x, state.noise_mask)


def _masked_psd(x, mask: np.ndarray) -> np.ndarray:
    x = check_stft(x)
    y = x.observations()
    mass = mask.sum(axis=1)
    psd = _weighted_psd(y, mask) / np.where(mass > 0, mass, 1.0)[:, None, None]
    empty = mass <= 0
    if np.any(empty):
        psd[empty] = observed_psd(x)[empty]
    return psd


# --------------------------------------------------------------------------
# spectral extraction

@dataclass
class SpectralTrack:
    """Beamformed single-channel spectrum, ``spectrum[frame, bin]``."""

    spectrum: np.ndarray
    config: StftConfig = StftConfig()
    class_id: int | None = None
    segment_id: str | None = None
    n_samples: int | None = None


def gev_ban_weights(phi_x: np.ndarray, phi_n: np.ndarray, reference_channel: int = 0,
                    loading: float = LOADING) -> np.ndarray:
    """GEV beamformer with blind analytic normalisation, shape (F, M).

    The arbitrary phase of each eigenvector is fixed through the implied
    steering vector ``Phi_n w`` (proportional to the source steering for a
    rank-one source, even when source energy leaks into ``Phi_n``): its
    reference-channel entry is made real and non-negative, so the output
    keeps the phase of the source as seen on that channel.  Silent bins get
    zero weights.
    """
    phi_x = np.asarray(phi_x, dtype=complex)
    phi_n = np.asarray(phi_n, dtype=complex)
    f, m, _ = phi_x.shape
    w = np.zeros((f, m), dtype=complex)
    live = (np.trace(phi_x, axis1=1, axis2=2).real > 0) & (np.trace(phi_n, axis1=1, axis2=2).real > 0)
    if not np.any(live):
        return w
    w_snr = gev_principal(phi_x[live], phi_n[live], loading)
    pn_w = np.einsum("fij,fj->fi", phi_n[live], w_snr)
    rot = np.exp(-1j * np.angle(pn_w[:, reference_channel]))[:, None]
    w_snr, pn_w = w_snr * rot, pn_w * rot
    num = np.sqrt(np.sum(np.abs(pn_w) ** 2, axis=1) / m)  # sqrt(w^H Pn Pn w / M)
    den = np.einsum("fi,fi->f", np.conj(w_snr), pn_w).real
    w[live] = (num / den)[:, None] * w_snr
    return w


def gev_ban_beamform(x, phi_x, phi_n, reference_channel: int = 0,
                     loading: float = LOADING) -> SpectralTrack:
    x = check_stft(x)
    w = gev_ban_weights(phi_x, phi_n, reference_channel, loading)
    out = np.einsum("fm,mtf->tf", np.conj(w), x.data)
    return SpectralTrack(out, x.config)


# --------------------------------------------------------------------------
# spatial extraction and simulation

@dataclass
class SpatialSignature:
    """Per-bin Hermitian matrices with trace M, shape (F, M, M)."""

    matrices: np.ndarray
    azimuth: float | None = None
    elevation: float | None = None
    segment_id: str | None = None

    @property
    def n_channels(self) -> int:
        return self.matrices.shape[-1]


def normalize_trace(r: np.ndarray) -> np.ndarray:
    """Scale every matrix to trace M; zero matrices become the identity."""
    r = _hermitize(np.asarray(r, dtype=complex))
    m = r.shape[-1]
    tr = np.trace(r, axis1=-2, axis2=-1).real
    out = np.empty_like(r)
    ok = tr > 0
    out[ok] = m * r[ok] / tr[ok][:, None, None]
    out[~ok] = np.eye(m)
    return out


def spatial_signature(x, state: CgmmState) -> SpatialSignature:
    return SpatialSignature(normalize_trace(_masked_psd(x, state.source_mask)))


def draw_phase_offsets(n_frames: int, n_channels: int, rng, mode: str = "frame") -> np.ndarray:
    """Offsets ``T_m`` in [0, 1) of shape (frames, channels), the first column zero.

    ``mode="frame"`` draws fresh offsets every frame.  ``mode="segment"``
    draws one offset per channel for the whole segment, which leaves every
    bin's simulated covariance at rank one; it is kept for comparison only.
    """
    rng = check_random_state(rng)
    if mode == "frame":
        t = rng.random((n_frames, n_channels))
    elif mode == "segment":
        t = np.broadcast_to(rng.random((1, n_channels)), (n_frames, n_channels)).copy()
    else:
        raise ValueError(f"unknown phase mode {mode!r}")
    t[:, 0] = 0.0
    return t


def simulate(spectral: SpectralTrack, spatial: SpatialSignature, seed=None,
             phase_mode: str = "frame") -> StftTensor:
    """Place a spectral track at a spatial signature.

    Every bin's signature is eigendecomposed, and each eigen-direction is
    driven by the spectrum with its own random phase offset (the principal
    direction keeps phase zero).
    """
    spec = np.asarray(spectral.spectrum)
    mats = np.asarray(spatial.matrices)
    if spec.shape[1] != mats.shape[0]:
        raise ValueError(f"spectral track has {spec.shape[1]} bins, signature has {mats.shape[0]}")
    lam, u = eigh(mats)
    lam = np.clip(lam, 0.0, None)
    offsets = draw_phase_offsets(spec.shape[0], mats.shape[-1], seed, phase_mode)
    coeff = np.sqrt(lam)[:, None, :] * np.exp(-2j * np.pi * offsets)[None, :, :]  # (F, T, M)
    out = np.einsum("fij,ftj->fti", u, coeff) * spec.T[:, :, None]
    return StftTensor(np.transpose(out, (2, 1, 0)), spectral.config)


# --------------------------------------------------------------------------
# segment-level augmentation

def _single_event(ann: EventAnnotationList):
    events = ann.events()
    if len(events) != 1:
        raise InsufficientSegments(f"MCS segments must hold exactly one event, found {len(events)}")
    vec = ann.doa_vectors().mean(axis=0)
    az, el = unit_to_doa(vec / np.linalg.norm(vec))
    (class_id, _), = events
    return class_id, float(az), float(el)


@dataclass
class SegmentAnalysis:
    spectral: SpectralTrack
    spatial: SpatialSignature
    annotations: EventAnnotationList
    sample_rate: int


def analyze_segment(clip: MultichannelClip, ann: EventAnnotationList, iters: int = DEFAULT_EM_ITERATIONS,
                    cfg: StftConfig | None = None, segment_id: str | None = None) -> SegmentAnalysis:
    clip = check_clip(clip, formats=("BOTH",))
    cfg = cfg or StftConfig(sample_rate=clip.sample_rate)
    class_id, az, el = _single_event(ann)
    x = stft(clip, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateInputWarning)
        state = cgmm_em(x, iters)
    track = gev_ban_beamform(x, observed_psd(x), noise_psd(x, state), reference_channel=4)
    track.class_id, track.segment_id, track.n_samples = class_id, segment_id, clip.n_samples
    sig = spatial_signature(x, state)
    sig.azimuth, sig.elevation, sig.segment_id = az, el, segment_id
    return SegmentAnalysis(track, sig, ann, clip.sample_rate)


def combine(spectral_donor: SegmentAnalysis, spatial_donor: SegmentAnalysis, seed=None):
    """One simulated BOTH clip plus its labels (spectral class, spatial DOA)."""
    sim = simulate(spectral_donor.spectral, spatial_donor.spatial, seed)
    clip = istft(sim, length=spectral_donor.spectral.n_samples,
                 sample_rate=spectral_donor.sample_rate, fmt="BOTH")
    az, el = spatial_donor.spatial.azimuth, spatial_donor.spatial.elevation
    ann = spectral_donor.annotations.map_rows(lambda r: r._replace(azimuth=az, elevation=el))
    return clip, ann


def augment_mcs(segments, n_outputs: int | None = None, seed=None, pairs=None,
                iters: int = DEFAULT_EM_ITERATIONS, cfg: StftConfig | None = None) -> list:
    """Simulate new clips from static single-event ``(clip, annotations)`` segments.

    ``pairs`` lists ``(spectral_index, spatial_index)`` explicitly; otherwise
    ``n_outputs`` pairs of distinct segments are drawn from ``seed``.
    """
    segments = list(segments)
    if pairs is None and len(segments) < 2:
        raise InsufficientSegments(f"MCS needs at least 2 eligible segments, got {len(segments)}")
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2 ** 63))
    root = np.random.SeedSequence(seed)
    pair_rng = np.random.default_rng(root.spawn(1)[0])
    if pairs is None:
        if n_outputs is None:
            raise ValueError("give either n_outputs or explicit pairs")
        pairs = []
        for _ in range(n_outputs):
            i, j = pair_rng.choice(len(segments), size=2, replace=False)
            pairs.append((int(i), int(j)))
    needed = sorted({k for p in pairs for k in p})
    analyses = {k: analyze_segment(*segments[k], iters=iters, cfg=cfg, segment_id=str(k)) for k in needed}
    out_seeds = root.spawn(len(pairs) + 1)[1:]
    return [combine(analyses[i], analyses[j], np.random.default_rng(s))
            for (i, j), s in zip(pairs, out_seeds)]


class MultichannelSimulator(BaseAugmenter):
    """Estimator wrapper: ``fit`` analyses segments, ``sample`` simulates clips.

    Parameters
    ----------
    n_outputs : int
        Clips produced by :meth:`fit_resample`.
    n_iter : int
        EM sweeps per segment.
    random_state : int, optional
    """

    def __init__(self, n_outputs: int = 10, n_iter: int = DEFAULT_EM_ITERATIONS, random_state=None):
        self.n_outputs = n_outputs
        self.n_iter = n_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = list(X)
        y = list(y) if y is not None else None
        if y is None or len(X) != len(y):
            raise ValueError("MultichannelSimulator needs one annotation list per clip")
        if len(X) < 2:
            raise InsufficientSegments("MCS needs at least 2 eligible segments")
        self.analyses_ = [analyze_segment(c, a, self.n_iter, segment_id=str(k))
                          for k, (c, a) in enumerate(zip(X, y))]
        self.is_fitted_ = True
        return self

    def sample(self, n: int | None = None, pairs=None):
        if not hasattr(self, "analyses_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("call fit() first")
        rng = check_random_state(self.random_state)
        if pairs is None:
            pairs = [tuple(int(v) for v in rng.choice(len(self.analyses_), 2, replace=False))
                     for _ in range(self.n_outputs if n is None else n)]
        seeds = np.random.SeedSequence(int(rng.integers(2 ** 63))).spawn(len(pairs))
        return [combine(self.analyses_[i], self.analyses_[j], np.random.default_rng(s))
                for (i, j), s in zip(pairs, seeds)]

    def fit_resample(self, X, y=None):
        out = self.fit(X, y).sample()
        return [c for c, _ in out], [a for _, a in out]



__all__ = [
    "CgmmState", "SpectralTrack", "SpatialSignature", "SegmentAnalysis",
    "cgmm_em", "observed_psd", "noise_psd", "gev_ban_weights", "gev_ban_beamform",
    "normalize_trace", "spatial_signature", "draw_phase_offsets", "simulate",
    "analyze_segment", "combine", "augment_mcs", "MultichannelSimulator",
]
