"""Labeled segment timelines and RTTM reading/writing."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


@dataclass(frozen=True, order=True)
class Segment:
    start: float
    end: float
    label: str

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class Timeline:
    recording_id: str
    entries: list[Segment] = field(default_factory=list)

    def __post_init__(self):
        self.entries = sorted(self.entries)
        for seg in self.entries:
            if not seg.end > seg.start:
                raise ValueError(f"segment {seg} has end <= start")

    @classmethod
    def from_tuples(cls, recording_id: str, rows: Iterable[tuple[str, float, float]]):
        return cls(recording_id, [Segment(float(s), float(e), str(lab)) for lab, s, e in rows])

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def labels(self) -> list[str]:
        return sorted({seg.label for seg in self.entries})

    def total_duration(self) -> float:
        return sum(seg.duration for seg in self.entries)

    def speech_regions(self) -> "Timeline":
        """Union of all segments with labels dropped."""
        merged: list[list[float]] = []
        for seg in self.entries:
            if merged and seg.start <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], seg.end)
            else:
                merged.append([seg.start, seg.end])
        return Timeline(self.recording_id, [Segment(s, e, "speech") for s, e in merged])

    def merge_adjacent(self, tol: float = 1e-9) -> "Timeline":
        """Join same-label segments that touch or overlap."""
        by_label: dict[str, list[Segment]] = defaultdict(list)
        for seg in self.entries:
            by_label[seg.label].append(seg)
        out = []
        for label, segs in by_label.items():
            cur_s, cur_e = segs[0].start, segs[0].end
            for seg in segs[1:]:
                if seg.start <= cur_e + tol:
                    cur_e = max(cur_e, seg.end)
                else:
                    out.append(Segment(cur_s, cur_e, label))
                    cur_s, cur_e = seg.start, seg.end
            out.append(Segment(cur_s, cur_e, label))
        return Timeline(self.recording_id, out)

    def crop(self, start: float, end: float) -> "Timeline":
        out = []
        for seg in self.entries:
            s, e = max(seg.start, start), min(seg.end, end)
            if e > s:
                out.append(Segment(s, e, seg.label))
        return Timeline(self.recording_id, out)

    def relabel(self, mapping: dict[str, str]) -> "Timeline":
        return Timeline(
            self.recording_id, [Segment(s.start, s.end, mapping.get(s.label, s.label)) for s in self]
        )


def format_rttm(timeline: Timeline) -> str:
    lines = []
    for seg in timeline.entries:
        lines.append(
            f"SPEAKER {timeline.recording_id} 1 {seg.start:.3f} {seg.duration:.3f} "
            f"<NA> <NA> {seg.label} <NA> <NA>"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def write_rttm(path: str | Path, timelines: Timeline | Sequence[Timeline]) -> None:
    if isinstance(timelines, Timeline):
        timelines = [timelines]
    Path(path).write_text("".join(format_rttm(t) for t in timelines))


def parse_rttm(text: str) -> dict[str, Timeline]:
    rows: dict[str, list[Segment]] = defaultdict(list)
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        if fields[0] != "SPEAKER" or len(fields) < 8:
            raise ValueError(f"line {lineno}: not an RTTM SPEAKER record: {line!r}")
        rec, start, dur, label = fields[1], float(fields[3]), float(fields[4]), fields[7]
        if dur <= 0:
            continue
        rows[rec].append(Segment(start, start + dur, label))
    return {rec: Timeline(rec, segs) for rec, segs in rows.items()}


def read_rttm(path: str | Path) -> dict[str, Timeline]:
    return parse_rttm(Path(path).read_text())


def windows_to_timeline(windows: Sequence[tuple[float, float]], labels: Sequence,
                        recording_id: str = "rec") -> Timeline:
    """Turn labeled, possibly overlapping windows into a single-speaker timeline.

    Consecutive windows that overlap split their overlap at its midpoint;
    windows separated by a gap keep their own edges.  Windows are taken in
    start order.
    """
    if len(windows) != len(labels):
        raise ValueError("windows and labels differ in length")
    order = sorted(range(len(windows)), key=lambda i: (windows[i][0], windows[i][1]))
    segs = []
    for pos, i in enumerate(order):
        s, e = windows[i]
        if pos > 0:
            prev_e = windows[order[pos - 1]][1]
            if s <= prev_e:
                s = max(s, (s + prev_e) / 2)
        if pos + 1 < len(order):
            next_s = windows[order[pos + 1]][0]
            if next_s <= e:
                e = (next_s + e) / 2
        if e > s:
            segs.append(Segment(s, e, str(labels[i])))
    return Timeline(recording_id, segs).merge_adjacent()
