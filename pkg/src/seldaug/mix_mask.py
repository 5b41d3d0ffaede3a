"""Time-domain mixing of two events and time/frequency masking of feature stacks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .annotations import EventAnnotationList
from .base import BaseAugmenter, check_clip, check_random_state
from .clip import MultichannelClip
from .exceptions import LayoutMismatch
from .features import FeatureStack

DEFAULT_GAIN_RANGE = (0.5, 1.0)


# --------------------------------------------------------------------------
# time-domain mixing

def _remap_tracks(base: EventAnnotationList, extra: EventAnnotationList) -> EventAnnotationList:
    used: dict = {}
    for c, t in base.events():
        used.setdefault(c, set()).add(t)
    remap = {}
    for c, t in sorted(extra.events()):
        taken = used.setdefault(c, set())
        new = t
        while new in taken:
            new += 1
        taken.add(new)
        remap[(c, t)] = new
    return extra.map_rows(lambda r: r._replace(track=remap[(r.class_id, r.track)]))


def tdm_mix(a, b, seed=None, gain_range=DEFAULT_GAIN_RANGE, offset: int | None = None,
            gains=None):
    """Mix two ``(clip, annotations)`` segments.

    The shorter segment is placed at a whole label frame inside the longer
    one; both are scaled by gains drawn uniformly from ``gain_range``.
    ``offset`` (label frames) and ``gains`` (for ``a`` and ``b``) override the
    random draws.  The resolved placement is stored in ``clip.meta["tdm"]``.
    """
    (ca, aa), (cb, ab) = a, b
    ca, cb = check_clip(ca), check_clip(cb)
    if (ca.sample_rate, ca.fmt, ca.n_channels) != (cb.sample_rate, cb.fmt, cb.n_channels):
        raise LayoutMismatch("segments differ in sample rate or channel layout")
    aa = aa if aa is not None else EventAnnotationList()
    ab = ab if ab is not None else EventAnnotationList()
    if aa.frame_rate != ab.frame_rate:
        raise LayoutMismatch("annotations use different label frame rates")
    rng = check_random_state(seed)
    swap = cb.n_samples > ca.n_samples
    (cl, al), (cs, as_) = ((cb, ab), (ca, aa)) if swap else ((ca, aa), (cb, ab))
    spf = ca.sample_rate / aa.frame_rate
    max_off = int((cl.n_samples - cs.n_samples) // spf)
    off = int(rng.integers(0, max_off + 1)) if offset is None else int(offset)
    if not 0 <= off <= max_off:
        raise ValueError(f"offset {off} outside 0..{max_off}")
    if gains is None:
        gains = rng.uniform(gain_range[0], gain_range[1], size=2)
    g_a, g_b = float(gains[0]), float(gains[1])
    g_long, g_short = (g_b, g_a) if swap else (g_a, g_b)

    start = int(round(off * spf))
    out = g_long * cl.data
    out[:, start:start + cs.n_samples] += g_short * cs.data
    ann = al.merged(_remap_tracks(al, as_.shifted(off)).rows)
    clip = MultichannelClip(out, cl.sample_rate, cl.fmt,
                            {"tdm": {"offset": off, "gains": (g_a, g_b)}})
    return clip, ann


class TimeDomainMixer(BaseAugmenter):
    """Mixes random pairs of single-event segments.

    Parameters
    ----------
    n_outputs : int
    gain_range : (float, float)
    random_state : int, optional
    """

    def __init__(self, n_outputs: int = 10, gain_range=DEFAULT_GAIN_RANGE, random_state=None):
        self.n_outputs = n_outputs
        self.gain_range = gain_range
        self.random_state = random_state

    def _validate_params_values(self):
        lo, hi = self.gain_range
        if not 0 <= lo <= hi:
            raise ValueError(f"invalid gain range {self.gain_range}")

    def _resample(self, X, y):
        if len(X) < 2:
            raise ValueError("need at least two segments to mix")
        rng = check_random_state(self.random_state)
        clips, anns = [], []
        for _ in range(self.n_outputs):
            i, j = rng.choice(len(X), size=2, replace=False)
            c, a = tdm_mix((X[i], y[i]), (X[j], y[j]), rng, self.gain_range)
            clips.append(c)
            anns.append(a)
        return clips, anns


# --------------------------------------------------------------------------
# time-frequency masking

@dataclass(frozen=True)
class TfmConfig:
    max_time_mask: int = 35
    time_mask_period: int = 100
    max_freq_mask: int = 30
    masked_map_count: int = 11
    n_bins: int = 64

    def __post_init__(self):
        if not 0 <= self.max_time_mask < self.time_mask_period:
            raise ValueError("max_time_mask must be in [0, time_mask_period)")
        if not 0 <= self.max_freq_mask < self.n_bins:
            raise ValueError(f"max_freq_mask must be in [0, {self.n_bins})")
        if self.masked_map_count < 0:
            raise ValueError("masked_map_count must be non-negative")


@dataclass(frozen=True)
class MaskPlan:
    time_spans: tuple  # (start, length) per window
    freq_span: tuple  # (start, length)
    n_frames: int

    def time_mask(self) -> np.ndarray:
        m = np.zeros(self.n_frames, dtype=bool)
        for s, n in self.time_spans:
            m[s:s + n] = True
        return m


def tfm_plan(n_frames: int, cfg: TfmConfig = TfmConfig(), seed=None) -> MaskPlan:
    """Draw one time mask per window of ``time_mask_period`` frames and one frequency mask."""
    rng = check_random_state(seed)
    spans = []
    for w0 in range(0, n_frames, cfg.time_mask_period):
        wlen = min(cfg.time_mask_period, n_frames - w0)
        length = min(int(rng.integers(0, cfg.max_time_mask + 1)), wlen)
        spans.append((w0 + int(rng.integers(0, wlen - length + 1)), length))
    f_len = int(rng.integers(0, cfg.max_freq_mask + 1))
    f_start = int(rng.integers(0, cfg.n_bins - f_len + 1))
    return MaskPlan(tuple(spans), (f_start, f_len), n_frames)


def tfm_apply(stack: FeatureStack, cfg: TfmConfig = TfmConfig(), seed=None,
              plan: MaskPlan | None = None) -> FeatureStack:
    """Zero the planned frames and bins in the first ``masked_map_count`` maps."""
    if stack.n_maps < cfg.masked_map_count:
        raise ValueError(f"stack has {stack.n_maps} maps, config masks {cfg.masked_map_count}")
    if stack.maps.shape[2] != cfg.n_bins:
        raise ValueError(f"stack has {stack.maps.shape[2]} bins, config expects {cfg.n_bins}")
    plan = plan or tfm_plan(stack.n_frames, cfg, seed)
    out = stack.copy()
    k = cfg.masked_map_count
    out.maps[:k, plan.time_mask(), :] = 0.0
    f0, fl = plan.freq_span
    out.maps[:k, :, f0:f0 + fl] = 0.0
    return out


def render_plan(plan: MaskPlan, n_bins: int = 64, width: int = 100) -> str:
    """Text grid of a mask plan: rows are bins (top = highest), columns frames."""
    tm = plan.time_mask()
    f0, fl = plan.freq_span
    step = max(1, -(-plan.n_frames // width))
    cols = range(0, plan.n_frames, step)
    lines = []
    for b in range(n_bins - 1, -1, -1):
        fm = f0 <= b < f0 + fl
        lines.append("".join("#" if (fm or tm[c:c + step].any()) else "." for c in cols))
    spans = ", ".join(f"{s}+{n}" for s, n in plan.time_spans)
    lines.append(f"time masks (start+len): {spans}")
    lines.append(f"freq mask (start+len): {f0}+{fl}")
    return "\n".join(lines)


class TimeFrequencyMasker(TransformerMixin, BaseEstimator):
    """Training-time masking hook; each ``transform`` call draws fresh masks."""

    def __init__(self, max_time_mask: int = 35, time_mask_period: int = 100,
                 max_freq_mask: int = 30, masked_map_count: int = 11, random_state=None):
        self.max_time_mask = max_time_mask
        self.time_mask_period = time_mask_period
        self.max_freq_mask = max_freq_mask
        self.masked_map_count = masked_map_count
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.config_ = TfmConfig(self.max_time_mask, self.time_mask_period,
                                 self.max_freq_mask, self.masked_map_count)
        self.rng_ = check_random_state(self.random_state)
        return self

    def transform(self, X):
        if not hasattr(self, "config_"):
            self.fit()
        if isinstance(X, FeatureStack):
            return tfm_apply(X, self.config_, self.rng_)
        return [tfm_apply(s, self.config_, self.rng_) for s in X]
