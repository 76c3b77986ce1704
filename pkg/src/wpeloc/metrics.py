"""Diarization error rate and the random-label baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .timeline import Segment, Timeline, windows_to_timeline

# Boundaries are snapped to a 0.1 ms grid before scoring.
TICKS_PER_SECOND = 10_000


@dataclass(frozen=True)
class DerBreakdown:
    miss: float
    false_alarm: float
    confusion: float
    total_speech: float

    @property
    def der(self) -> float:
        return (self.miss + self.false_alarm + self.confusion) / self.total_speech

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(
            self.miss + other.miss,
            self.false_alarm + other.false_alarm,
            self.confusion + other.confusion,
            self.total_speech + other.total_speech,
        )


def _activity(timeline: Timeline, labels: list[str], edges: np.ndarray) -> np.ndarray:
    """Boolean (elementary segment, label) activity matrix."""
    act = np.zeros((len(edges) - 1, len(labels)), dtype=bool)
    col = {lab: i for i, lab in enumerate(labels)}
    for seg in timeline:
        s, e = _tick(seg.start), _tick(seg.end)
        lo, hi = np.searchsorted(edges, [s, e])
        act[lo:hi, col[seg.label]] = True
    return act


def _tick(t: float) -> int:
    return int(round(t * TICKS_PER_SECOND))


def der(reference: Timeline, hypothesis: Timeline) -> DerBreakdown:
    """Collar-free DER with overlapping speech scored.

    Reference and hypothesis speakers are mapped one-to-one so as to
    maximize their co-active time.
    """
    if len(reference) == 0:
        raise ValueError("nothing to score")
    if hypothesis.recording_id != reference.recording_id:
        raise ValueError(
            f"recording ids differ: {reference.recording_id!r} vs {hypothesis.recording_id!r}"
        )
    points = set()
    for seg in list(reference) + list(hypothesis):
        points.update((_tick(seg.start), _tick(seg.end)))
    edges = np.array(sorted(points), dtype=np.int64)
    dur = np.diff(edges) / TICKS_PER_SECOND

    ref_labels, hyp_labels = reference.labels, hypothesis.labels
    ref_act = _activity(reference, ref_labels, edges)
    hyp_act = _activity(hypothesis, hyp_labels, edges)

    n_ref = ref_act.sum(axis=1)
    n_hyp = hyp_act.sum(axis=1)
    total = float(np.sum(dur * n_ref))

    correct = np.zeros(len(dur))
    if hyp_labels:
        overlap = (ref_act.astype(float) * dur[:, None]).T @ hyp_act.astype(float)
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        for r, c in zip(rows, cols):
            correct += ref_act[:, r] & hyp_act[:, c]

    miss = float(np.sum(dur * np.maximum(n_ref - n_hyp, 0)))
    fa = float(np.sum(dur * np.maximum(n_hyp - n_ref, 0)))
    conf = float(np.sum(dur * (np.minimum(n_ref, n_hyp) - correct)))
    return DerBreakdown(miss, fa, conf, total)


def chunk_bounds(duration: float, chunk_len: float | None) -> list[tuple[float, float]]:
    """Equal-length chunks covering ``[0, duration]``; the last may be short."""
    if chunk_len is None or chunk_len >= duration:
        return [(0.0, duration)]
    if chunk_len <= 0:
        raise ValueError("chunk length must be positive")
    n = int(np.ceil(duration / chunk_len - 1e-9))
    return [(i * chunk_len, min((i + 1) * chunk_len, duration)) for i in range(n)]


def der_chunked(reference: Timeline, hypothesis: Timeline,
                chunk_len: float | None) -> DerBreakdown:
    """Score each chunk with its own speaker mapping and pool the errors."""
    end = max(seg.end for seg in list(reference) + list(hypothesis))
    total = None
    for lo, hi in chunk_bounds(end, chunk_len):
        ref = reference.crop(lo, hi)
        if len(ref) == 0:
            hyp = hypothesis.crop(lo, hi)
            part = DerBreakdown(0.0, hyp.total_duration(), 0.0, 0.0)
        else:
            part = der(ref, hypothesis.crop(lo, hi))
        total = part if total is None else total + part
    if total.total_speech == 0:
        raise ValueError("nothing to score")
    return total


def random_baseline(windows: Sequence[tuple[float, float]], n_spk: int, seed: int,
                    recording_id: str = "rec") -> Timeline:
    """Label every window uniformly at random among ``n_spk`` speakers."""
    if n_spk < 1:
        raise ValueError("n_spk must be >= 1")
    rng = np.random.default_rng(seed)
    labels = [f"spk{i}" for i in rng.integers(0, n_spk, size=len(windows))]
    return windows_to_timeline(windows, labels, recording_id)


__all__ = [
    "DerBreakdown", "Segment", "chunk_bounds", "der", "der_chunked", "random_baseline",
]
