"""Mono WAV input/output (16-bit PCM or 32-bit float)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Return ``(samples, sample_rate)`` with samples as float in [-1, 1]."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        return data.astype(float) / 32768.0, int(rate)
    if data.dtype == np.float32:
        return data.astype(float), int(rate)
    raise ValueError(f"{path}: unsupported sample format {data.dtype}")


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: float) -> None:
    """Write 32-bit float samples."""
    x = np.asarray(samples, dtype=np.float32)
    wavfile.write(str(path), int(round(sample_rate)), x)
