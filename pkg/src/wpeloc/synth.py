"""Synthetic wideband talkers and scenes for self-contained evaluation.

The talker model is deliberately crude: a sequence of ~120 ms "phones",
each a random set of formant resonators driven either by noise or, for
voiced phones, by a glottal pulse train around a per-talker pitch, all
gated by a syllabic envelope with occasional pauses.  The voiced phones
matter: their periodicity is predictable across frames, which is what
makes short analysis windows unreliable on real speech.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, fftconvolve, lfilter, sosfilt

from .roomsim import RoomSpec, Scene, SceneMode, Source, image_rir, render_scene
from .timeline import Timeline

LEAD_IN = 0.5
VOICED_PROB = 0.6


def _resonator(freq: float, bw: float, fs: float) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([1.0 - r]), a


def _pulse_train(n: int, f0: float, fs: float, rng: np.random.Generator) -> np.ndarray:
    period = fs / f0
    pulses = np.zeros(n)
    pos = rng.uniform(0, period)
    while pos < n:
        pulses[int(pos)] = 1.0
        pos += period * rng.uniform(0.99, 1.01)
    pulses = lfilter([1.0], [1.0, -0.9], pulses)  # soften into a glottal-like decay
    return pulses / (np.std(pulses) + 1e-12)


def speech_like(duration: float, fs: float = 16000.0, seed: int | np.random.Generator = 0,
                pause_prob: float = 0.1, voiced_prob: float = VOICED_PROB,
                pitch: float | None = None) -> np.ndarray:
    """Formant babble of the given duration, peak 0.5.

    ``pitch`` (Hz) is the talker's mean f0; drawn at random when omitted.
    """
    rng = np.random.default_rng(seed)
    pitch = rng.uniform(90, 220) if pitch is None else pitch
    n = int(round(duration * fs))
    out = np.zeros(n)
    phone = int(0.12 * fs)
    fade = int(0.01 * fs)
    ramp = np.ones(phone + fade)
    ramp[:fade] = np.linspace(0, 1, fade)
    ramp[-fade:] = np.linspace(1, 0, fade)
    for start in range(0, n, phone):
        noise = rng.standard_normal(phone + fade)
        if rng.random() < voiced_prob:
            f0 = pitch * rng.uniform(0.85, 1.15)
            excitation = _pulse_train(phone + fade, f0, fs, rng) + 0.1 * noise
        else:
            excitation = noise
        seg = 0.3 * excitation  # flat floor keeps every band populated
        for lo, hi in ((250, 900), (900, 2500), (2500, 4000), (4000, 7000)):
            b, a = _resonator(rng.uniform(lo, hi), rng.uniform(80, 400), fs)
            seg = seg + rng.uniform(0.5, 2.0) * lfilter(b, a, excitation) * np.sqrt(hi / 100)
        seg *= ramp
        stop = min(n, start + len(seg))
        out[start:stop] += seg[: stop - start]
    t = np.arange(n) / fs
    rate = rng.uniform(3.0, 5.0)
    envelope = 0.35 + 0.65 * np.abs(np.sin(np.pi * rate * t + rng.uniform(0, np.pi)))
    pauses = rng.random(int(np.ceil(duration / 0.25))) < pause_prob
    gate = np.repeat(np.where(pauses, 0.05, 1.0), int(0.25 * fs))[:n]
    gate = np.convolve(gate, np.ones(160) / 160, mode="same")
    out *= envelope * gate
    out = sosfilt(butter(2, 100, "highpass", fs=fs, output="sos"), out)
    peak = np.max(np.abs(out))
    return out * (0.5 / peak) if peak > 0 else out


@dataclass
class RoomLayout:
    room: RoomSpec
    mic: tuple[float, float, float]
    positions: list[tuple[float, float, float]]


def random_layout(n_positions: int, seed: int | np.random.Generator, rt60=(0.4, 0.6),
                  fs: float = 16000.0, min_sep: float = 1.0) -> RoomLayout:
    """Random shoebox room with a microphone and well-separated talker spots."""
    rng = np.random.default_rng(seed)
    dims = (rng.uniform(5, 8), rng.uniform(4, 6), rng.uniform(2.6, 3.2))
    room = RoomSpec(dims, rt60=float(rng.uniform(*rt60)), sample_rate=fs)
    margin = 0.5
    mic = (rng.uniform(margin, dims[0] - margin), rng.uniform(margin, dims[1] - margin),
           rng.uniform(0.8, 1.2))
    positions: list[tuple[float, float, float]] = []
    for _ in range(10_000):
        if len(positions) == n_positions:
            break
        p = (rng.uniform(margin, dims[0] - margin), rng.uniform(margin, dims[1] - margin),
             rng.uniform(1.2, 1.8))
        if np.linalg.norm(np.subtract(p, mic)) < 0.8:
            continue
        if all(np.linalg.norm(np.subtract(p, q)) >= min_sep for q in positions):
            positions.append(p)
    else:
        raise RuntimeError("could not place talkers")
    return RoomLayout(room, mic, positions)


def conversation_scene(seed: int, n_talkers: int = 2, turns: int = 6,
                       turn_len=(6.0, 9.0), rt60=(0.4, 0.6), fs: float = 16000.0,
                       recording_id: str | None = None) -> Scene:
    """Talkers at distinct spots taking alternating, non-overlapping turns."""
    rng = np.random.default_rng(seed)
    layout = random_layout(n_talkers, rng, rt60=rt60, fs=fs)
    sources = []
    for i in range(turns):
        spk = i % n_talkers
        dur = rng.uniform(*turn_len)
        sources.append(Source(speech_like(dur, fs, rng), layout.positions[spk], f"spk{spk}"))
    rec = recording_id or f"scene{seed}"
    return render_scene(sources, layout.room, layout.mic, SceneMode.CONCAT, recording_id=rec)


@dataclass
class PairAudio:
    a: np.ndarray
    b: np.ndarray
    same: bool


def training_pairs(n_same: int, n_diff: int, seed: int, seg_len: float = 4.0,
                   rt60=(0.4, 0.6), fs: float = 16000.0, pairs_per_room: int = 10) -> list[PairAudio]:
    """Reverberant segment pairs from the same or from different positions.

    Every pair shares a room and microphone; segments always carry
    different talker material.
    """
    rng = np.random.default_rng(seed)
    out: list[PairAudio] = []
    want = list(rng.permutation([True] * n_same + [False] * n_diff))
    for k in range(0, len(want), pairs_per_room):
        layout = random_layout(4, rng, rt60=rt60, fs=fs)
        rirs = [image_rir(layout.room, p, layout.mic).taps for p in layout.positions]
        for same in want[k:k + pairs_per_room]:
            i, j = rng.choice(len(rirs), size=2, replace=False)
            if same:
                j = i
            a = _reverberate(speech_like(seg_len + LEAD_IN, fs, rng), rirs[i], fs)
            b = _reverberate(speech_like(seg_len + LEAD_IN, fs, rng), rirs[j], fs)
            out.append(PairAudio(a, b, same))
    return out


def _reverberate(dry: np.ndarray, rir: np.ndarray, fs: float) -> np.ndarray:
    # drop the lead-in so the segment starts with the reverb tail built up
    wet = fftconvolve(dry, rir)[int(round(LEAD_IN * fs)):len(dry)]
    return wet / np.max(np.abs(wet))


def speech_timeline(scene: Scene) -> Timeline:
    return scene.timeline.speech_regions()
