"""Frame-indexed sound event labels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .exceptions import OutOfRangeClass

CLASS_NAMES = (
    "Alarm", "Crying Baby", "Crash", "Barking Dog", "Running Engine",
    "Female Scream", "Female Speech", "Burning Fire", "Footsteps", "Knocking Door",
    "Male Scream", "Male Speech", "Ringing Phone", "Piano",
)
N_CLASSES = len(CLASS_NAMES)
LABEL_FRAME_RATE = 10.0  # label resolution is 100 ms


class EventRow(NamedTuple):
    frame: int
    class_id: int
    track: int
    azimuth: float
    elevation: float


@dataclass(frozen=True)
class EventAnnotationList:
    """Immutable, sorted list of :class:`EventRow`.

    Rows are kept sorted by ``(frame, class_id, track)``.
    """

    rows: tuple = ()
    frame_rate: float = LABEL_FRAME_RATE

    def __post_init__(self):
        rows = []
        for r in self.rows:
            r = EventRow(int(r[0]), int(r[1]), int(r[2]), float(r[3]), float(r[4]))
            if not 0 <= r.class_id < N_CLASSES:
                raise OutOfRangeClass(f"class id {r.class_id} outside 0..{N_CLASSES - 1}")
            if r.frame < 0:
                raise ValueError(f"negative frame index {r.frame}")
            if not -90.0 <= r.elevation <= 90.0:
                raise ValueError(f"elevation {r.elevation} outside [-90, 90]")
            rows.append(r)
        rows.sort(key=lambda r: (r.frame, r.class_id, r.track))
        object.__setattr__(self, "rows", tuple(rows))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def n_frames(self) -> int:
        """One past the last annotated frame (0 when empty)."""
        return self.rows[-1].frame + 1 if self.rows else 0

    def events(self) -> set:
        return {(r.class_id, r.track) for r in self.rows}

    def frames_of(self, class_id: int, track: int) -> list:
        return [r for r in self.rows if r.class_id == class_id and r.track == track]

    def by_frame(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out.setdefault(r.frame, []).append(r)
        return out

    def shifted(self, offset: int) -> "EventAnnotationList":
        return EventAnnotationList(tuple(r._replace(frame=r.frame + offset) for r in self.rows),
                                   self.frame_rate)

    def window(self, start: int, stop: int) -> "EventAnnotationList":
        """Rows with ``start <= frame < stop``, re-indexed to start at 0."""
        return EventAnnotationList(
            tuple(r._replace(frame=r.frame - start) for r in self.rows if start <= r.frame < stop),
            self.frame_rate)

    def map_rows(self, fn: Callable[[EventRow], EventRow]) -> "EventAnnotationList":
        return EventAnnotationList(tuple(fn(r) for r in self.rows), self.frame_rate)

    def merged(self, other: Iterable) -> "EventAnnotationList":
        return EventAnnotationList(self.rows + tuple(other), self.frame_rate)

    def doa_vectors(self) -> np.ndarray:
        from .arrays import doa_to_unit
        if not self.rows:
            return np.zeros((0, 3))
        arr = np.array([(r.azimuth, r.elevation) for r in self.rows])
        return doa_to_unit(arr[:, 0], arr[:, 1])
