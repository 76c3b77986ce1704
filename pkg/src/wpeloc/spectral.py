"""Short-time Fourier analysis and the joint-energy band weighting.

Frames are taken without edge padding, so a signal of length ``L`` yields
``1 + (L - n_fft) // hop`` frames and only the interior covered by at least
two overlapping windows is reconstructed exactly by :func:`istft`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

# Relative energy below which a segment is treated as silent.
SILENCE_FLOOR = 1e-12


class WindowKind(str, Enum):
    SQRT_HANN = "sqrt_hann"
    HANN = "hann"
    RECT = "rect"


def make_window(kind: WindowKind | str, n_fft: int) -> np.ndarray:
    kind = WindowKind(kind)
    if kind is WindowKind.RECT:
        return np.ones(n_fft)
    # periodic Hann: sums to a constant at hop = n_fft / 2
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    if kind is WindowKind.SQRT_HANN:
        return np.sqrt(hann)
    return hann


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT matrix indexed ``data[frame, bin]``."""

    data: np.ndarray
    n_fft: int
    hop: int
    sample_rate: float
    window_kind: WindowKind = WindowKind.SQRT_HANN

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("spectrogram data must be a (frames, bins) matrix with N >= 1")
        if data.shape[1] != self.n_fft // 2 + 1:
            raise ValueError(
                f"expected {self.n_fft // 2 + 1} one-sided bins, got {data.shape[1]}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "window_kind", WindowKind(self.window_kind))

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(data, self.n_fft, self.hop, self.sample_rate, self.window_kind)

    def __mul__(self, c: float) -> "Spectrogram":
        return self.with_data(self.data * c)

    __rmul__ = __mul__


def stft(
    signal: np.ndarray,
    n_fft: int = 256,
    hop: int = 128,
    window_kind: WindowKind | str = WindowKind.SQRT_HANN,
    sample_rate: float = 16000.0,
) -> Spectrogram:
    """One-sided STFT of a real signal.

    Raises
    ------
    ValueError
        If the signal is shorter than one window ("segment too short") or
        ``hop`` exceeds ``n_fft``.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if hop < 1 or hop > n_fft:
        raise ValueError("hop must lie in 1..n_fft")
    if len(x) < n_fft:
        raise ValueError("segment too short")
    n_frames = 1 + (len(x) - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop][:n_frames]
    window = make_window(window_kind, n_fft)
    data = np.fft.rfft(frames * window, axis=-1)
    return Spectrogram(data, n_fft, hop, sample_rate, WindowKind(window_kind))


def _ola_weight(window: np.ndarray, hop: int) -> np.ndarray:
    """Steady-state sum of squared windows, one period of length ``hop``."""
    n_fft = len(window)
    acc = np.zeros(hop)
    sq = window**2
    for start in range(0, n_fft, hop):
        chunk = sq[start:start + hop]
        acc[: len(chunk)] += chunk
    return acc


def is_cola(window_kind: WindowKind | str, n_fft: int, hop: int) -> bool:
    acc = _ola_weight(make_window(window_kind, n_fft), hop)
    return bool(np.ptp(acc) <= 1e-10 * np.max(acc)) and np.max(acc) > 0


def istft(spec: Spectrogram) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`.

    The synthesis window equals the analysis window, so the pair must sum
    to a constant in squared overlap-add; anything else raises.
    """
    n_fft, hop = spec.n_fft, spec.hop
    if not is_cola(spec.window_kind, n_fft, hop):
        raise ValueError(
            f"window {spec.window_kind.value!r} with n_fft={n_fft}, hop={hop} is not COLA"
        )
    window = make_window(spec.window_kind, n_fft)
    norm = _ola_weight(window, hop)[0]
    frames = np.fft.irfft(spec.data, n=n_fft, axis=-1) * window
    out = np.zeros((spec.n_frames - 1) * hop + n_fft)
    for n, frame in enumerate(frames):
        out[n * hop:n * hop + n_fft] += frame
    return out / norm


@dataclass(frozen=True)
class PowerProfile:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("power profile must be a vector")
        if np.any(v < 0):
            raise ValueError("power profile entries must be nonnegative")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class WeightVector:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def mean_power(spec: Spectrogram) -> PowerProfile:
    """Per-bin power averaged over frames."""
    x = spec.data
    return PowerProfile(np.mean((x * x.conj()).real, axis=0))


def joint_energy_weights(p1: PowerProfile, p2: PowerProfile) -> WeightVector:
    """Geometric mean of the two normalized power profiles, bin by bin.

    Bins where only one segment carries energy get zero weight; the
    weights sum to at most one, with equality when both normalized
    profiles coincide.
    """
    a = np.asarray(p1.values, dtype=float)
    b = np.asarray(p2.values, dtype=float)
    if a.shape != b.shape:
        raise ValueError("power profiles differ in length")
    n_bins = len(a)
    for p in (a, b):
        total = p.sum()
        # profiles are frame means, so a fixed floor per bin is the relevant scale
        if not total > SILENCE_FLOOR * n_bins or not np.isfinite(total):
            raise ValueError("silent segment")
    return WeightVector(np.sqrt((a / a.sum()) * (b / b.sum())))
