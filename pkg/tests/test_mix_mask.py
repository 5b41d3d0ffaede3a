import numpy as np
import pytest
from sklearn.base import clone

from seldaug.annotations import EventAnnotationList, EventRow
from seldaug.clip import MultichannelClip
from seldaug.exceptions import LayoutMismatch
from seldaug.features import FeatureStack
from seldaug.mix_mask import (MaskPlan, TfmConfig, TimeDomainMixer, TimeFrequencyMasker, render_plan,
                              tdm_mix, tfm_apply, tfm_plan)

SPF = 2400


def segment(rng, seconds, class_id, az, track=0, fmt="BOTH"):
    n = int(seconds * 10)
    clip = MultichannelClip(rng.standard_normal((8 if fmt == "BOTH" else 4, n * SPF)), 24000, fmt)
    ann = EventAnnotationList(tuple(EventRow(f, class_id, track, az, 0.0) for f in range(n)))
    return clip, ann


# ---------------------------------------------------------------- TDM

def test_mixing_with_silence_returns_scaled_input():
    rng = np.random.default_rng(0)
    a = segment(rng, 2, 3, 40.0)
    silent = (MultichannelClip(np.zeros((8, 10 * SPF)), 24000, "BOTH"), EventAnnotationList())
    clip, ann = tdm_mix(a, silent, gains=(1.0, 0.7), offset=4)
    np.testing.assert_array_equal(clip.data, a[0].data)
    assert ann == a[1]


def test_three_plus_two_seconds():
    rng = np.random.default_rng(1)
    a, b = segment(rng, 3, 1, 10.0), segment(rng, 2, 5, -60.0)
    clip, ann = tdm_mix(a, b, gains=(0.6, 0.9), offset=7)
    assert clip.n_samples == 30 * SPF
    expected = 0.6 * a[0].data
    expected[:, 7 * SPF:27 * SPF] += 0.9 * b[0].data
    np.testing.assert_allclose(clip.data, expected, rtol=0, atol=1e-15)
    # label union: class 1 on 0..29, class 5 on 7..26
    assert {r.frame for r in ann if r.class_id == 1} == set(range(30))
    assert {r.frame for r in ann if r.class_id == 5} == set(range(7, 27))
    assert clip.meta["tdm"] == {"offset": 7, "gains": (0.6, 0.9)}


def test_offset_keeps_short_segment_inside():
    rng = np.random.default_rng(2)
    a, b = segment(rng, 2, 1, 0.0), segment(rng, 3, 2, 0.0)
    for seed in range(20):
        clip, ann = tdm_mix(a, b, seed=seed)
        off = clip.meta["tdm"]["offset"]
        assert 0 <= off <= 10
        assert clip.n_samples == 30 * SPF
        assert max(r.frame for r in ann) == 29
        assert all(0.5 <= g <= 1.0 for g in clip.meta["tdm"]["gains"])
    with pytest.raises(ValueError):
        tdm_mix(a, b, offset=11)


def test_self_mix_doubles_and_remaps_track():
    rng = np.random.default_rng(3)
    a = segment(rng, 1, 4, 90.0)
    clip, ann = tdm_mix(a, a, gains=(1.0, 1.0))
    np.testing.assert_array_equal(clip.data, 2 * a[0].data)
    assert ann.events() == {(4, 0), (4, 1)}
    assert len(ann) == 2 * len(a[1])


def test_mixing_is_commutative():
    rng = np.random.default_rng(4)
    a, b = segment(rng, 2, 1, 10.0), segment(rng, 2, 7, 100.0)
    ab, ann_ab = tdm_mix(a, b, gains=(0.8, 0.55), offset=0)
    ba, ann_ba = tdm_mix(b, a, gains=(0.55, 0.8), offset=0)
    np.testing.assert_allclose(ab.data, ba.data, atol=1e-15)
    key = lambda ann: sorted((r.frame, r.class_id, r.azimuth) for r in ann)  # noqa: E731
    assert key(ann_ab) == key(ann_ba)


def test_layout_mismatch():
    rng = np.random.default_rng(5)
    a = segment(rng, 1, 1, 0.0)
    b = segment(rng, 1, 1, 0.0, fmt="MIC")
    with pytest.raises(LayoutMismatch):
        tdm_mix(a, b)
    c = (MultichannelClip(a[0].data, 48000, "BOTH"), a[1])
    with pytest.raises(LayoutMismatch):
        tdm_mix(a, c)
    d = (a[0], EventAnnotationList(a[1].rows, frame_rate=20.0))
    with pytest.raises(LayoutMismatch):
        tdm_mix(a, d)


def test_mixer_estimator():
    rng = np.random.default_rng(6)
    segs = [segment(rng, 1 + k, k, 0.0) for k in range(3)]
    est = TimeDomainMixer(n_outputs=4, random_state=3)
    c1, a1 = est.fit_resample([s[0] for s in segs], [s[1] for s in segs])
    c2, a2 = clone(est).fit_resample([s[0] for s in segs], [s[1] for s in segs])
    assert len(c1) == 4
    for x, y in zip(c1, c2):
        np.testing.assert_array_equal(x.data, y.data)
    assert a1 == a2
    with pytest.raises(ValueError):
        est.fit_resample([segs[0][0]], [segs[0][1]])
    with pytest.raises(ValueError):
        TimeDomainMixer(gain_range=(1.0, 0.5)).fit()


# ---------------------------------------------------------------- TFM

def ones_stack(n_frames):
    return FeatureStack(np.ones((17, n_frames, 64)), tuple(f"m{k}" for k in range(17)), 46.875)


def test_zero_mask_lengths_are_identity():
    stack = ones_stack(250)
    out = tfm_apply(stack, TfmConfig(max_time_mask=0, max_freq_mask=0), seed=1)
    np.testing.assert_array_equal(out.maps, stack.maps)


@pytest.mark.parametrize("seed", range(10))
def test_mask_structure_matches_plan(seed):
    n = 437
    stack = ones_stack(n)
    cfg = TfmConfig()
    plan = tfm_plan(n, cfg, seed)
    out = tfm_apply(stack, cfg, plan=plan)
    # the last six maps are never touched
    np.testing.assert_array_equal(out.maps[11:], 1.0)
    masked = out.maps[:11] == 0
    assert np.all(masked == masked[0])
    m = masked[0]
    # recover the masks independently from the zero pattern
    full_rows = np.all(m, axis=1)
    f0, fl = plan.freq_span
    assert fl <= cfg.max_freq_mask
    cols = np.where(np.all(m, axis=0))[0] if not full_rows.all() else np.arange(64)
    if fl and not full_rows.all():
        assert cols.tolist() == list(range(f0, f0 + fl))
    assert len(plan.time_spans) == -(-n // 100)
    for k, (s, ln) in enumerate(plan.time_spans):
        w = slice(100 * k, min(100 * (k + 1), n))
        rows = np.where(full_rows[w])[0] + 100 * k
        assert ln <= cfg.max_time_mask
        if fl < 64:
            assert rows.tolist() == list(range(s, s + ln))
    # counting oracle: every cell in a masked row or column is zero, nothing else is
    t = int(full_rows.sum())
    assert m.sum() == t * 64 + (n - t) * fl


def test_plan_is_deterministic_and_clips_last_window():
    cfg = TfmConfig()
    assert tfm_plan(130, cfg, 9) == tfm_plan(130, cfg, 9)
    for seed in range(30):
        plan = tfm_plan(130, cfg, seed)
        s, ln = plan.time_spans[1]
        assert 100 <= s and s + ln <= 130


def test_masking_validates_inputs():
    with pytest.raises(ValueError):
        TfmConfig(max_time_mask=100)
    with pytest.raises(ValueError):
        TfmConfig(max_freq_mask=64)
    small = FeatureStack(np.ones((7, 10, 64)), tuple("abcdefg"), 46.875)
    with pytest.raises(ValueError):
        tfm_apply(small)
    assert tfm_apply(small, TfmConfig(masked_map_count=7), seed=0).n_maps == 7


def test_render_plan():
    plan = MaskPlan(((2, 3),), (60, 4), 10)
    lines = render_plan(plan, 64, width=10).splitlines()
    assert len(lines) == 66
    assert lines[0] == "#" * 10  # bin 63 is inside the frequency mask
    assert lines[10] == "..###....."
    assert lines[-2].endswith("2+3") and lines[-1].endswith("60+4")


def test_masker_estimator_draws_fresh_masks():
    est = TimeFrequencyMasker(random_state=0)
    assert clone(est).get_params() == est.get_params()
    a = est.transform(ones_stack(300))
    b = est.transform(ones_stack(300))
    assert not np.array_equal(a.maps, b.maps)
    again = TimeFrequencyMasker(random_state=0).transform([ones_stack(300), ones_stack(300)])
    np.testing.assert_array_equal(again[0].maps, a.maps)
    np.testing.assert_array_equal(again[1].maps, b.maps)
