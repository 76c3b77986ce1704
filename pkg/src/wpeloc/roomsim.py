"""Image-method room impulse responses and scene rendering.

Rooms are shoebox-shaped with frequency-independent, uniform wall
reflection.  Image sources are delayed with an 81-tap Hann-windowed sinc
so that sub-sample arrival times survive into the STFT phase.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.signal import butter, fftconvolve, sosfilt

from .timeline import Segment, Timeline

log = logging.getLogger(__name__)

SINC_TAPS = 81
CONCAT_GAP = 0.5
PEAK_LEVEL = 0.9


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room.  Give either ``rt60`` or a scalar/6-vector ``reflection``.

    Reflection coefficients are ordered ``(x0, x1, y0, y1, z0, z1)`` where
    ``*0`` is the wall through the origin.
    """

    dims: tuple[float, float, float]
    rt60: float | None = 0.5
    reflection: float | tuple[float, ...] | None = None
    speed_of_sound: float = 343.0
    sample_rate: float = 16000.0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError("room dims must be three positive lengths")
        object.__setattr__(self, "dims", dims)
        if self.reflection is None:
            if self.rt60 is None or not self.rt60 > 0:
                raise ValueError("need rt60 > 0 or reflection coefficients")
        else:
            beta = np.broadcast_to(np.asarray(self.reflection, dtype=float), (6,))
            if np.any(beta < 0) or np.any(beta >= 1):
                raise ValueError("reflection coefficients must lie in [0, 1)")

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dims
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dims
        return 2 * (lx * ly + lx * lz + ly * lz)

    def absorption(self) -> float:
        """Uniform energy absorption coefficient matching ``rt60``.

        Sabine first; Eyring when Sabine would need total absorption.
        """
        if self.rt60 is None:
            raise ValueError("room has no rt60")
        alpha = 0.161 * self.volume / (self.surface * self.rt60)
        if alpha >= 1:
            alpha = 1 - np.exp(-0.161 * self.volume / (self.surface * self.rt60))
        return float(np.clip(alpha, 1e-6, 1 - 1e-6))

    def wall_reflection(self) -> np.ndarray:
        if self.reflection is not None:
            return np.broadcast_to(np.asarray(self.reflection, dtype=float), (6,)).copy()
        return np.full(6, np.sqrt(1 - self.absorption()))

    def contains(self, pos) -> bool:
        p = np.asarray(pos, dtype=float)
        return p.shape == (3,) and bool(np.all(p > 0) and np.all(p < np.asarray(self.dims)))


@dataclass(frozen=True)
class Rir:
    taps: np.ndarray
    sample_rate: float
    src: tuple[float, float, float]
    mic: tuple[float, float, float]


@dataclass(frozen=True)
class RirParts:
    direct: np.ndarray
    early: np.ndarray
    late: np.ndarray


def _image_grid(room: RoomSpec, src: np.ndarray, mic: np.ndarray, max_order: int,
                max_dist: float, beta: np.ndarray | None = None):
    """Image positions' distances and amplitudes for all admissible images."""
    dims = np.asarray(room.dims)
    if beta is None:
        beta = room.wall_reflection()
    beta = np.asarray(beta, dtype=float).reshape(3, 2)
    dists = []
    amps = []
    # per-axis reflection index ranges bounded by both order and distance
    ranges = [
        np.arange(-n, n + 1)
        for n in (int(min(max_order // 2 + 1, np.ceil(max_dist / (2 * L)) + 1)) for L in dims)
    ]
    for q in np.ndindex(2, 2, 2):
        q = np.array(q)
        axis_terms = []
        for ax in range(3):
            m = ranges[ax]
            pos = (1 - 2 * q[ax]) * src[ax] + 2 * m * dims[ax]
            n_refl_lo = np.abs(m - q[ax])
            n_refl_hi = np.abs(m)
            gain = beta[ax, 0] ** n_refl_lo * beta[ax, 1] ** n_refl_hi
            axis_terms.append((pos - mic[ax], n_refl_lo + n_refl_hi, gain))
        (dx, ox, gx), (dy, oy, gy), (dz, oz, gz) = axis_terms
        d2 = dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2
        order = ox[:, None, None] + oy[None, :, None] + oz[None, None, :]
        gain = gx[:, None, None] * gy[None, :, None] * gz[None, None, :]
        dist = np.sqrt(d2)
        keep = (order <= max_order) & (dist <= max_dist)
        dists.append(dist[keep])
        amps.append(gain[keep] / (4 * np.pi * dist[keep]))
    return np.concatenate(dists), np.concatenate(amps)


def _render_images(delay: np.ndarray, amp: np.ndarray) -> np.ndarray:
    """Sum Hann-windowed sinc pulses at fractional ``delay`` (samples)."""
    half = SINC_TAPS // 2
    offsets = np.arange(-half, half + 1)
    window = 0.5 + 0.5 * np.cos(np.pi * offsets / (half + 1))
    centre = np.round(delay).astype(np.int64)
    frac = centre - delay
    # sin(pi (o + frac)) = (-1)^o sin(pi frac): one sine per image
    scaled = np.sin(np.pi * frac) * amp / np.pi
    on_grid = np.abs(frac) < 1e-12
    # leading room for the pre-ringing of images near t = 0, dropped at the end
    taps = np.zeros(int(centre.max()) + 2 * half + 1)
    for o, w in zip(offsets, window):
        sign = 1.0 if o % 2 == 0 else -1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            kernel = (sign * w) * scaled / (o + frac)
        if o == 0:
            kernel = np.where(on_grid, w * amp, kernel)
        taps += np.bincount(centre + (o + half), weights=kernel, minlength=len(taps))
    return taps[half:]


def default_duration(room: RoomSpec) -> float:
    if room.rt60 is not None:
        return float(room.rt60)
    # decay time of the mean reflection, by Eyring
    beta = room.wall_reflection()
    alpha = 1 - np.mean(beta**2)
    if alpha <= 0:
        raise ValueError("lossless room has no finite RIR duration")
    return float(0.161 * room.volume / (-room.surface * np.log(1 - alpha)))


def image_rir(room: RoomSpec, src, mic, max_order: int | None = None,
              duration: float | None = None) -> Rir:
    """Image-method RIR from ``src`` to ``mic``.

    ``max_order`` caps the total number of wall reflections per image;
    ``duration`` caps arrival times (default: the room's rt60).  With
    ``max_order=None`` only the duration cap applies.
    """
    src = np.asarray(src, dtype=float)
    mic = np.asarray(mic, dtype=float)
    if not room.contains(src) or not room.contains(mic):
        raise ValueError("source and microphone must be strictly inside the room")
    if np.allclose(src, mic):
        raise ValueError("source and microphone coincide")
    fs, c = room.sample_rate, room.speed_of_sound
    direct = float(np.linalg.norm(src - mic))
    if duration is None:
        duration = default_duration(room)
    max_dist = max(duration * c, direct)
    if max_order is None:
        max_order = 10**9
    dist, amp = _image_grid(room, src, mic, max_order, max_dist)

    taps = _render_images(dist / c * fs, amp)
    return Rir(taps, fs, tuple(src), tuple(mic))


def decompose_rir(rir: Rir, direct_win_ms: float = 2.5, early_ms: float = 50.0) -> RirParts:
    """Split an RIR at fixed offsets from its main peak.

    Everything up to ``direct_win_ms`` past the peak is the direct path,
    up to ``early_ms`` past the peak the early reflections, the rest late.
    """
    h = np.asarray(rir.taps, dtype=float)
    peak = int(np.argmax(np.abs(h)))
    fs = rir.sample_rate
    d_end = min(len(h), peak + int(round(direct_win_ms * fs / 1000)) + 1)
    e_end = min(len(h), max(d_end, peak + int(round(early_ms * fs / 1000)) + 1))
    direct, early, late = np.zeros_like(h), np.zeros_like(h), np.zeros_like(h)
    direct[:d_end] = h[:d_end]
    early[d_end:e_end] = h[d_end:e_end]
    late[e_end:] = h[e_end:]
    return RirParts(direct, early, late)


def schroeder_decay_db(h: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB re. total energy."""
    energy = np.cumsum(h[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10 * np.log10(energy / energy[0])


def estimate_rt60(h: np.ndarray, fs: float, lo_db: float = -5.0, hi_db: float = -25.0,
                  highpass: float | None = 100.0) -> float:
    """RT60 from a line fit to the Schroeder curve between two levels.

    The image sum is all-positive, so its DC component builds up coherently
    and would dominate the tail; by default the decay is measured above
    ``highpass`` Hz.
    """
    h = np.asarray(h, dtype=float)
    if highpass:
        h = sosfilt(butter(4, highpass, "highpass", fs=fs, output="sos"), h)
    edc = schroeder_decay_db(h)
    sel = np.nonzero((edc <= lo_db) & (edc >= hi_db))[0]
    if len(sel) < 2:
        raise ValueError("decay curve does not span the fit range")
    t = sel / fs
    slope, _ = np.polyfit(t, edc[sel], 1)
    return float(-60.0 / slope)


def strip_silence(signal: np.ndarray, threshold_db: float = -50.0, frame: int = 160) -> np.ndarray:
    """Trim leading and trailing frames whose RMS is below ``threshold_db`` dBFS."""
    x = np.asarray(signal, dtype=float)
    n = len(x) // frame
    if n == 0:
        return x
    rms = np.sqrt(np.mean(x[: n * frame].reshape(n, frame) ** 2, axis=1))
    loud = np.nonzero(rms > 10 ** (threshold_db / 20))[0]
    if len(loud) == 0:
        return x[:0]
    end = len(x) if loud[-1] == n - 1 else (loud[-1] + 1) * frame
    return x[loud[0] * frame:end]


class SceneMode(str, Enum):
    CONCAT = "concat"
    MIX = "mix"


@dataclass
class Source:
    signal: np.ndarray
    position: tuple[float, float, float]
    label: str
    onset: float = 0.0  # used in MIX mode only


@dataclass
class Scene:
    signal: np.ndarray
    timeline: Timeline
    sample_rate: float
    rirs: list[Rir] = field(default_factory=list)


def render_scene(sources: Sequence[Source], room: RoomSpec, mic, mode: SceneMode | str = "concat",
                 max_order: int | None = None, recording_id: str = "scene",
                 normalize: bool = True, strip: bool = False) -> Scene:
    """Reverberate each source from its position and place it in time.

    CONCAT plays sources one after another with a fixed gap; MIX adds them
    at their own onsets.  The reference timeline spans each dry signal.
    """
    mode = SceneMode(mode)
    if not sources:
        raise ValueError("scene has no sources")
    fs = room.sample_rate
    rir_cache: dict[tuple, Rir] = {}
    placed = []
    cursor = 0.0
    segs = []
    for src in sources:
        dry = np.asarray(src.signal, dtype=float)
        if strip:
            dry = strip_silence(dry)
        if len(dry) == 0:
            raise ValueError(f"source {src.label!r} has an empty signal")
        key = tuple(float(v) for v in src.position)
        if key not in rir_cache:
            rir_cache[key] = image_rir(room, key, mic, max_order)
        rir = rir_cache[key]
        onset = cursor if mode is SceneMode.CONCAT else float(src.onset)
        start = int(round(onset * fs))
        wet = fftconvolve(dry, rir.taps)
        placed.append((start, wet))
        t0 = start / fs
        segs.append(Segment(t0, t0 + len(dry) / fs, src.label))
        cursor = t0 + len(dry) / fs + CONCAT_GAP
    total = max(s + len(w) for s, w in placed)
    out = np.zeros(total)
    for start, wet in placed:
        out[start:start + len(wet)] += wet
    if normalize:
        peak = np.max(np.abs(out))
        if peak > 0:
            out *= PEAK_LEVEL / peak
    timeline = Timeline(recording_id, segs).merge_adjacent()
    return Scene(out, timeline, fs, list(rir_cache.values()))
