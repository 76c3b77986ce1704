"""Sliding-window, clustering-based diarization on WPE location scores."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import chunk_bounds
from .pairscore import NoComparableEnergy, ScoreModel, pair_features
from .spectral import WindowKind, stft
from .timeline import Timeline, windows_to_timeline
from .wpe import WpeConfig, WpeFilter, estimate_wpe

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KnownCount:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("speaker count must be >= 1")


@dataclass(frozen=True)
class Threshold:
    t: float

    def __post_init__(self):
        if math.isnan(self.t):
            raise ValueError("threshold must not be NaN")


ClusterMode = KnownCount | Threshold


@dataclass(frozen=True)
class DiarizeConfig:
    window: float = 4.0
    shift: float = 0.5
    cluster_mode: ClusterMode = Threshold(0.0)
    chunk_len: float | None = None

    def __post_init__(self):
        if not 0 < self.shift <= self.window:
            raise ValueError("need 0 < shift <= window")
        if self.chunk_len is not None and self.chunk_len <= 0:
            raise ValueError("chunk_len must be positive")


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 256
    hop: int = 128
    window: WindowKind = WindowKind.SQRT_HANN

    def min_duration(self, wpe_cfg: WpeConfig, sample_rate: float) -> float:
        """Shortest segment yielding enough frames for WPE."""
        samples = self.n_fft + self.hop * (wpe_cfg.min_frames() - 1)
        return samples / sample_rate


def segment_windows(speech: Timeline, cfg: DiarizeConfig,
                    min_duration: float = 0.0) -> list[tuple[float, float]]:
    """Cut oracle speech regions into sliding analysis windows.

    Full windows step by ``shift`` while they fit.  The next stepped
    window, clipped to the region end, is kept if at least half a window
    long; otherwise the last full window is stretched to the region end.
    Regions shorter than a window give one window spanning the region,
    provided it is at least ``min_duration`` long.
    """
    if len(speech) == 0:
        raise ValueError("empty speech timeline")
    eps = 1e-9
    out: list[tuple[float, float]] = []
    for region in speech.speech_regions():
        r0, r1 = region.start, region.end
        if r1 - r0 < cfg.window - eps:
            if r1 - r0 >= min_duration - eps:
                out.append((r0, r1))
            else:
                log.warning("skipping %.3f s region at %.3f: too short for WPE", r1 - r0, r0)
            continue
        n_full = int(math.floor((r1 - r0 - cfg.window) / cfg.shift + eps)) + 1
        wins = [(r0 + i * cfg.shift, r0 + i * cfg.shift + cfg.window) for i in range(n_full)]
        last_end = wins[-1][1]
        if r1 - last_end > eps:
            tail_start = wins[-1][0] + cfg.shift
            if r1 - tail_start >= cfg.window / 2 - eps:
                wins.append((tail_start, r1))
            else:
                wins[-1] = (wins[-1][0], r1)
        out.extend(wins)
    return out


def extract_filters(audio: np.ndarray, sample_rate: float, windows: Sequence[tuple[float, float]],
                    wpe_cfg: WpeConfig, stft_cfg: StftConfig = StftConfig()) -> list[WpeFilter]:
    filters = []
    for start, end in windows:
        seg = audio[int(round(start * sample_rate)):int(round(end * sample_rate))]
        spec = stft(seg, stft_cfg.n_fft, stft_cfg.hop, stft_cfg.window, sample_rate)
        filters.append(estimate_wpe(spec, wpe_cfg).filter)
    return filters


def score_matrix_with_failures(filters: Sequence[WpeFilter],
                               model: ScoreModel) -> tuple[np.ndarray, int]:
    n = len(filters)
    if n < 2:
        raise ValueError("need at least 2 filters")
    mat = np.full((n, n), np.inf)
    failures = 0
    for i in range(n):
        for j in range(i + 1, n):
            try:
                s = pair_features(filters[i], filters[j], model).fused
            except NoComparableEnergy:
                s = model.score_floor
                failures += 1
            mat[i, j] = mat[j, i] = s
    return mat, failures


def score_matrix(filters: Sequence[WpeFilter], model: ScoreModel) -> np.ndarray:
    """Symmetric fused-score matrix with ``+inf`` on the diagonal."""
    mat, failures = score_matrix_with_failures(filters, model)
    if failures:
        log.warning("%d of %d pairs had no comparable energy; scored at the floor",
                    failures, len(filters) * (len(filters) - 1) // 2)
    return mat


def ahc_merges(matrix: np.ndarray) -> list[tuple[int, int, float]]:
    """Full average-linkage merge sequence on a similarity matrix.

    Each step merges the pair of clusters with the highest mean pairwise
    similarity; ties go to the pair whose (smallest member) indices are
    lowest.  Returns ``(a, b, score)`` with clusters named by their
    smallest member index, ``a < b``.
    """
    sim = np.array(matrix, dtype=float)
    n = sim.shape[0]
    if sim.shape != (n, n):
        raise ValueError("matrix must be square")
    np.fill_diagonal(sim, -np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], sim, -np.inf)
        upper = np.triu(masked, 1)
        upper[np.tril_indices(n)] = -np.inf
        # argmax scans row-major, so the first maximum is the lowest index pair
        flat = int(np.argmax(upper))
        a, b = divmod(flat, n)
        score = upper[a, b]
        merges.append((a, b, float(score)))
        merged = (sizes[a] * sim[a] + sizes[b] * sim[b]) / (sizes[a] + sizes[b])
        sim[a, :] = merged
        sim[:, a] = merged
        sim[a, a] = -np.inf
        sizes[a] += sizes[b]
        active[b] = False
        sim[b, :] = -np.inf
        sim[:, b] = -np.inf
    return merges


def ahc_cluster(matrix: np.ndarray, mode: ClusterMode) -> list[int]:
    """Average-linkage clustering stopped by cluster count or score threshold.

    Labels are renumbered in order of first appearance.
    """
    n = np.asarray(matrix).shape[0]
    if n < 1:
        raise ValueError("empty matrix")
    parent = list(range(n))

    def root(i):
        while parent[i] != i:
            i = parent[i]
        return i

    clusters = n
    for a, b, score in ahc_merges(matrix) if n > 1 else []:
        if isinstance(mode, KnownCount):
            if clusters <= mode.n:
                break
        elif score < mode.t:
            break
        parent[b] = a
        clusters -= 1
    roots = [root(i) for i in range(n)]
    relabel: dict[int, int] = {}
    return [relabel.setdefault(r, len(relabel)) for r in roots]


def _diarize_one(audio, sample_rate, speech, cfg, wpe_cfg, model, stft_cfg, prefix=""):
    min_dur = stft_cfg.min_duration(wpe_cfg, sample_rate)
    if len(speech) == 0:
        return []
    windows = segment_windows(speech, cfg, min_dur)
    if not windows:
        log.warning("no usable windows in %s", speech.recording_id)
        return []
    filters = extract_filters(audio, sample_rate, windows, wpe_cfg, stft_cfg)
    if len(filters) == 1:
        labels = [0]
    else:
        labels = ahc_cluster(score_matrix(filters, model), cfg.cluster_mode)
    tl = windows_to_timeline(windows, [f"{prefix}spk{lab}" for lab in labels], speech.recording_id)
    return tl.entries


def diarize(audio: np.ndarray, speech: Timeline, cfg: DiarizeConfig = DiarizeConfig(),
            wpe_cfg: WpeConfig = WpeConfig(), model: ScoreModel | None = None,
            sample_rate: float = 16000.0, stft_cfg: StftConfig = StftConfig()) -> Timeline:
    """Label oracle speech regions by source location.

    With ``cfg.chunk_len`` set, the recording is split into equal chunks
    that are clustered independently; labels are then prefixed by chunk.
    """
    if model is None:
        raise ValueError("a trained ScoreModel is required")
    audio = np.asarray(audio, dtype=float)
    duration = len(audio) / sample_rate
    bounds = chunk_bounds(duration, cfg.chunk_len)
    speech = speech.speech_regions()
    entries = []
    for ci, (lo, hi) in enumerate(bounds):
        prefix = f"c{ci}_" if len(bounds) > 1 else ""
        entries.extend(_diarize_one(audio, sample_rate, speech.crop(lo, hi), cfg, wpe_cfg,
                                    model, stft_cfg, prefix))
    if not entries:
        log.warning("no valid windows in %s; empty hypothesis", speech.recording_id)
    return Timeline(speech.recording_id, entries)
