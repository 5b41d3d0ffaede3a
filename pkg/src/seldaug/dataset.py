"""Files on disk: WAV audio, metadata CSV, the segment inventory.

A dataset root holds paired 4-channel recordings that share a file stem::

    <root>/mic/<stem>.wav        tetrahedral capsules
    <root>/foa/<stem>.wav        Ambisonics (W, Y, Z, X)
    <root>/metadata/<stem>.csv   frame,class,track,azimuth,elevation
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .annotations import LABEL_FRAME_RATE, EventAnnotationList, EventRow
from .arrays import angular_distance, doa_to_unit, unit_to_doa
from .clip import MultichannelClip
from .exceptions import ChannelCountMismatch, MalformedRow, UnsupportedFormat

STATIC_TOLERANCE = 5.0  # degrees, max pairwise spread of a "non-moving" run
MIN_SEGMENT_FRAMES = 5  # 0.5 s at 10 label frames per second
SUBDIRS = {"mic": "mic", "foa": "foa", "metadata": "metadata"}


# --------------------------------------------------------------------------
# WAV

def read_wav(path, fmt: str | None = None) -> MultichannelClip:
    """Read a 4- or 8-channel WAV as floats in [-1, 1].

    16-bit PCM is scaled by 2**-15; 24- and 32-bit PCM (both delivered as
    left-justified int32) by 2**-31.  Float files pass through unchanged.
    ``fmt`` defaults to ``"BOTH"`` for 8 channels and ``"RAW"`` otherwise.
    """
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 2 ** 15
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2 ** 31
    elif data.dtype not in (np.float32, np.float64):
        raise UnsupportedFormat(f"{path}: sample type {data.dtype} not supported")
    data = data.T if data.ndim == 2 else data[None]
    if data.shape[0] not in (4, 8):
        raise ChannelCountMismatch(f"{path}: expected 4 or 8 channels, got {data.shape[0]}")
    if fmt is None:
        fmt = "BOTH" if data.shape[0] == 8 else "RAW"
    return MultichannelClip(np.ascontiguousarray(data), int(rate), fmt, {"path": str(path)})


def write_wav(clip: MultichannelClip, path, subtype: str = "float32") -> None:
    """Write ``clip`` as 32-bit float (default) or 16-bit PCM."""
    data = np.asarray(clip.data).T
    if subtype == "float32":
        out = data.astype(np.float32)
    elif subtype == "int16":
        out = np.clip(np.round(data * 2 ** 15), -2 ** 15, 2 ** 15 - 1).astype(np.int16)
    else:
        raise UnsupportedFormat(f"cannot write sample type {subtype!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), int(clip.sample_rate), np.ascontiguousarray(out))


# --------------------------------------------------------------------------
# metadata CSV

def _number(text: str):
    v = float(text)
    return int(v) if v.is_integer() else v


def parse_metadata_text(text: str, frame_rate: float = LABEL_FRAME_RATE) -> EventAnnotationList:
    rows = []
    for lineno, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != 5:
            raise MalformedRow(lineno, f"expected 5 fields, got {len(fields)}")
        try:
            frame, cls, track = (int(f) for f in fields[:3])
            az, el = float(fields[3]), float(fields[4])
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        if not (np.isfinite(az) and np.isfinite(el)):
            raise MalformedRow(lineno, "non-finite angle")
        rows.append(EventRow(frame, cls, track, az, el))
    return EventAnnotationList(tuple(rows), frame_rate)


def parse_metadata(path, frame_rate: float = LABEL_FRAME_RATE) -> EventAnnotationList:
    return parse_metadata_text(Path(path).read_text(), frame_rate)


def format_metadata(ann: EventAnnotationList) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in ann:
        w.writerow([r.frame, r.class_id, r.track, _number(repr(r.azimuth)), _number(repr(r.elevation))])
    return buf.getvalue()


def emit_metadata(ann: EventAnnotationList, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(format_metadata(ann))


# --------------------------------------------------------------------------
# segments

@dataclass(frozen=True)
class SegmentDescriptor:
    """A run of label frames ``[start, stop)`` belonging to one event."""

    file_id: str
    start: int
    stop: int
    class_id: int
    track: int
    azimuth: float
    elevation: float
    static: bool
    overlapping: bool
    spread: float = 0.0

    @property
    def eligible(self) -> bool:
        return self.static and not self.overlapping

    @property
    def n_frames(self) -> int:
        return self.stop - self.start

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SegmentDescriptor":
        return cls(**json.loads(line))


def _max_spread(vectors: np.ndarray) -> float:
    uniq = np.unique(np.round(vectors, 12), axis=0)
    if len(uniq) < 2:
        return 0.0
    return max(float(angular_distance(u, v)) for u, v in combinations(uniq, 2))


def extract_segments(ann: EventAnnotationList, file_id: str = "", min_frames: int = MIN_SEGMENT_FRAMES,
                     static_tolerance: float = STATIC_TOLERANCE,
                     clip: MultichannelClip | None = None) -> list:
    """Cut every event's activity into solo and co-active runs.

    A solo run has no other event active in any of its frames.  Runs shorter
    than ``min_frames`` are dropped.  With ``clip`` given, label frames past
    the end of the audio are ignored.  Output is sorted by start frame.
    """
    if clip is not None:
        last = int(clip.n_samples * ann.frame_rate // clip.sample_rate)
        ann = ann.window(0, last)
    by_frame = ann.by_frame()
    out = []
    for c, t in sorted(ann.events()):
        rows = {r.frame: r for r in ann.frames_of(c, t)}
        frames = sorted(rows)
        solo = [len(by_frame[f]) == 1 for f in frames]
        # split each contiguous activity run wherever the solo flag flips
        pieces, cur = [], [frames[0]]
        for prev, f, s_prev, s in zip(frames, frames[1:], solo, solo[1:]):
            if f != prev + 1 or s != s_prev:
                pieces.append(cur)
                cur = []
            cur.append(f)
        pieces.append(cur)
        for piece in pieces:
            if len(piece) < min_frames:
                continue
            vecs = np.array([doa_to_unit(rows[f].azimuth, rows[f].elevation) for f in piece])
            mean = vecs.sum(axis=0)
            az, el = unit_to_doa(mean / np.linalg.norm(mean))
            spread = _max_spread(vecs)
            out.append(SegmentDescriptor(
                file_id, piece[0], piece[-1] + 1, c, t, round(float(az), 9), round(float(el), 9),
                spread <= static_tolerance, len(by_frame[piece[0]]) > 1, round(spread, 9)))
    return sorted(out, key=lambda d: (d.start, d.class_id, d.track))


def write_inventory(segments, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        for s in segments:
            fh.write(s.to_json() + "\n")


def read_inventory(path) -> list:
    return [SegmentDescriptor.from_json(line) for line in Path(path).read_text().splitlines()
            if line.strip()]


# --------------------------------------------------------------------------
# dataset directories

@dataclass(frozen=True)
class DatasetItem:
    stem: str
    mic: Path | None
    foa: Path | None
    metadata: Path | None

    def load(self, frame_rate: float = LABEL_FRAME_RATE):
        """``(clip, annotations)``; BOTH when both audio files exist."""
        mic = read_wav(self.mic, "MIC") if self.mic else None
        foa = read_wav(self.foa, "FOA") if self.foa else None
        if mic is not None and foa is not None:
            clip = MultichannelClip.combine(mic, foa)
        else:
            clip = mic or foa
        ann = parse_metadata(self.metadata, frame_rate) if self.metadata else EventAnnotationList()
        return clip, ann


def discover(root, subdirs: dict = SUBDIRS) -> list:
    """Items under ``root`` paired by stem, sorted by stem."""
    root = Path(root)
    found: dict = {}
    for key, ext in (("mic", ".wav"), ("foa", ".wav"), ("metadata", ".csv")):
        d = root / subdirs[key]
        if d.is_dir():
            for p in d.glob(f"*{ext}"):
                found.setdefault(p.stem, {})[key] = p
    return [DatasetItem(stem, v.get("mic"), v.get("foa"), v.get("metadata"))
            for stem, v in sorted(found.items()) if "mic" in v or "foa" in v]


def save_item(root, stem: str, clip: MultichannelClip, ann: EventAnnotationList | None,
              subdirs: dict = SUBDIRS) -> list:
    """Write a clip (split into MIC/FOA files when BOTH) and its labels; returns paths."""
    root = Path(root)
    paths = []
    parts = {"BOTH": [("mic", clip.mic), ("foa", clip.foa)] if clip.fmt == "BOTH" else None,
             "MIC": [("mic", clip)], "FOA": [("foa", clip)]}.get(clip.fmt)
    if parts is None:
        raise UnsupportedFormat(f"cannot store a {clip.fmt} clip in a dataset directory")
    for key, part in parts:
        p = root / subdirs[key] / f"{stem}.wav"
        write_wav(part, p)
        paths.append(p)
    if ann is not None:
        p = root / subdirs["metadata"] / f"{stem}.csv"
        emit_metadata(ann, p)
        paths.append(p)
    return paths


def load_segment(item: DatasetItem, seg: SegmentDescriptor, frame_rate: float = LABEL_FRAME_RATE):
    """Cut a segment's audio and labels out of its source item."""
    clip, ann = item.load(frame_rate)
    spf = clip.sample_rate / frame_rate
    a, b = int(round(seg.start * spf)), int(round(seg.stop * spf))
    return clip.replace(clip.data[:, a:b]), ann.window(seg.start, seg.stop)
