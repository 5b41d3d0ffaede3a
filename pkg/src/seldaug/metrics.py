"""Location-aware detection scores over one-second segments.

Each segment holds, per active ``(class, track)``, the normalized mean unit
vector of its active frames.  Within a class, predictions are paired with
references by a minimum-total-angle assignment; a pair within the DOA gate
is a true positive.  Every class-matched pair, gated or not, feeds the
localization error and localization recall.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotations import LABEL_FRAME_RATE, N_CLASSES, EventAnnotationList
from .arrays import doa_to_unit
from .exceptions import NoReferences

DOA_THRESHOLD = 20.0
SEGMENT_SECONDS = 1.0
WORST_LE = 180.0


@dataclass(frozen=True)
class SegmentFrame:
    """Items active in one segment: ``(class_id, unit vector)`` tuples."""

    items: tuple = ()

    def __post_init__(self):
        clean = []
        for c, v in self.items:
            v = np.asarray(v, dtype=float)
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError(f"DOA vector {v} is not a unit 3-vector")
            clean.append((int(c), v))
        object.__setattr__(self, "items", tuple(clean))

    def of_class(self, class_id: int) -> np.ndarray:
        vs = [v for c, v in self.items if c == class_id]
        return np.array(vs).reshape(len(vs), 3)

    def classes(self) -> set:
        return {c for c, _ in self.items}


def segmentize(ann: EventAnnotationList, frame_rate: float = LABEL_FRAME_RATE,
               n_segments: int | None = None) -> list:
    """Split frame-level labels into one-second :class:`SegmentFrame` objects."""
    per_seg = int(round(frame_rate * SEGMENT_SECONDS))
    if per_seg < 1:
        raise ValueError(f"frame rate {frame_rate} gives empty segments")
    if n_segments is None:
        n_segments = -(-ann.n_frames // per_seg)
    sums: dict = {}
    for r in ann:
        seg = r.frame // per_seg
        if seg < n_segments:
            key = (seg, r.class_id, r.track)
            sums[key] = sums.get(key, 0.0) + doa_to_unit(r.azimuth, r.elevation)
    items: list = [[] for _ in range(n_segments)]
    for (seg, c, _), s in sorted(sums.items()):
        norm = np.linalg.norm(s)
        # opposite directions cancelling out is the only way to get a zero mean
        v = s / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
        items[seg].append((c, v))
    return [SegmentFrame(tuple(i)) for i in items]


def _angles(ref: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Pairwise angular distance (degrees), rows = references.

    atan2 of the cross and dot products is the same angle as arccos of the dot
    product, but exact for identical vectors and well conditioned near 0 and 180.
    """
    cross = np.linalg.norm(np.cross(ref[:, None, :], pred[None, :, :]), axis=-1)
    return np.degrees(np.arctan2(cross, ref @ pred.T))


@dataclass
class SegmentCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_ref: int = 0
    errors: list = field(default_factory=list)  # angular error of every class-matched pair

    @property
    def substitutions(self) -> int:
        return min(self.fn, self.fp)

    @property
    def deletions(self) -> int:
        return self.fn - self.substitutions

    @property
    def insertions(self) -> int:
        return self.fp - self.substitutions


def match_class(ref: np.ndarray, pred: np.ndarray, threshold: float = DOA_THRESHOLD):
    """Pair one class's references and predictions; returns (tp, pair errors)."""
    if len(ref) == 0 or len(pred) == 0:
        return 0, []
    cost = _angles(ref, pred)
    rows, cols = linear_sum_assignment(cost)
    errs = [float(cost[i, j]) for i, j in zip(rows, cols)]
    return sum(e <= threshold for e in errs), errs


def match_and_count(ref: SegmentFrame, pred: SegmentFrame,
                    threshold: float = DOA_THRESHOLD, per_class: dict | None = None) -> SegmentCounts:
    out = SegmentCounts()
    for c in sorted(ref.classes() | pred.classes()):
        r, p = ref.of_class(c), pred.of_class(c)
        tp, errs = match_class(r, p, threshold)
        counts = (tp, len(p) - tp, len(r) - tp, len(r))
        out.tp += counts[0]
        out.fp += counts[1]
        out.fn += counts[2]
        out.n_ref += counts[3]
        out.errors.extend(errs)
        if per_class is not None:
            acc = per_class.setdefault(c, SegmentCounts())
            acc.tp, acc.fp, acc.fn, acc.n_ref = (a + b for a, b in
                                                 zip((acc.tp, acc.fp, acc.fn, acc.n_ref), counts))
            acc.errors.extend(errs)
    return out


@dataclass(frozen=True)
class SeldScores:
    er20: float
    f20: float
    le_cd: float
    lr_cd: float
    seld_score: float

    def as_dict(self) -> dict:
        return {"er20": self.er20, "f20": self.f20, "le_cd": self.le_cd,
                "lr_cd": self.lr_cd, "seld_score": self.seld_score}


def _scores(tp, fp, fn, s, d, i, n, errors) -> SeldScores:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    er = (s + d + i) / n
    le = float(np.mean(errors)) if errors else WORST_LE
    lr = len(errors) / n
    return SeldScores(er, f, le, lr, (er + (1 - f) + le / 180.0 + (1 - lr)) / 4)


def compute_scores(pairs, threshold: float = DOA_THRESHOLD, per_class: dict | None = None) -> SeldScores:
    """Micro-averaged scores over ``(reference, prediction)`` segment pairs.

    Pass a dict as ``per_class`` to collect :class:`SegmentCounts` per class.
    """
    tot = [0] * 6
    n = 0
    errors: list = []
    for ref, pred in pairs:
        c = match_and_count(ref, pred, threshold, per_class)
        for k, v in enumerate((c.tp, c.fp, c.fn, c.substitutions, c.deletions, c.insertions)):
            tot[k] += v
        n += c.n_ref
        errors.extend(c.errors)
    if n == 0:
        raise NoReferences("no reference events in any segment")
    return _scores(*tot, n, errors)


def class_scores(counts: SegmentCounts) -> dict:
    """Per-class precision-style summary (no segment-level S/D/I split)."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"n_ref": counts.n_ref, "tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "f20": f,
            "le_cd": float(np.mean(counts.errors)) if counts.errors else WORST_LE,
            "lr_cd": len(counts.errors) / counts.n_ref if counts.n_ref else 0.0}


def score_annotations(ref: EventAnnotationList, pred: EventAnnotationList,
                      threshold: float = DOA_THRESHOLD, per_class: dict | None = None) -> SeldScores:
    """Score one clip's predictions; both lists are segmented to the same length."""
    per_seg = int(round(ref.frame_rate * SEGMENT_SECONDS))
    n_seg = -(-max(ref.n_frames, pred.n_frames) // per_seg)
    return compute_scores(zip(segmentize(ref, ref.frame_rate, n_seg),
                              segmentize(pred, pred.frame_rate, n_seg)), threshold, per_class)


class SeldEvaluator:
    """Accumulates segment pairs across clips, then reports.

    >>> ev = SeldEvaluator()
    >>> ev.add(ref_ann, pred_ann)          # doctest: +SKIP
    >>> ev.scores().seld_score             # doctest: +SKIP
    """

    def __init__(self, doa_threshold: float = DOA_THRESHOLD):
        self.doa_threshold = doa_threshold
        self._pairs: list = []

    def add(self, ref: EventAnnotationList, pred: EventAnnotationList) -> None:
        per_seg = int(round(ref.frame_rate * SEGMENT_SECONDS))
        n_seg = -(-max(ref.n_frames, pred.n_frames) // per_seg)
        self._pairs.extend(zip(segmentize(ref, ref.frame_rate, n_seg),
                               segmentize(pred, pred.frame_rate, n_seg)))

    def scores(self) -> SeldScores:
        return compute_scores(self._pairs, self.doa_threshold)

    def report(self) -> dict:
        per_class: dict = {}
        overall = compute_scores(self._pairs, self.doa_threshold, per_class)
        return {"overall": overall.as_dict(),
                "per_class": {str(c): class_scores(per_class[c]) for c in range(N_CLASSES)
                              if c in per_class},
                "n_segments": len(self._pairs), "doa_threshold": self.doa_threshold}
