"""Single-channel weighted prediction error (WPE) dereverberation.

Each frequency bin is treated as an independent autoregressive problem:
the late reverberation in frame ``n`` is predicted from frames
``n - D - k`` (``k = 0..K-1``) and subtracted.  The filter is re-estimated
for a fixed number of iterations, each time reweighting frames by the
current estimate of the early-speech power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import PowerProfile, Spectrogram, mean_power

DIAGONAL_LOADING = 1e-8


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 10
    delay: int = 3
    iterations: int = 3
    power_floor: float = 1e-6

    def __post_init__(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise ValueError("taps, delay and iterations must all be >= 1")
        if not self.power_floor > 0:
            raise ValueError("power_floor must be positive")

    def min_frames(self) -> int:
        """Smallest frame count accepted by :func:`estimate_wpe`."""
        return self.delay + self.taps + 1

    def to_dict(self) -> dict:
        return {
            "taps": self.taps,
            "delay": self.delay,
            "iterations": self.iterations,
            "power_floor": self.power_floor,
        }


@dataclass(frozen=True)
class WpeFilter:
    """Prediction filter ``coeffs[k, f]`` for lag ``delay + k`` at bin ``f``.

    ``power`` is the mean power profile of the segment the filter was
    estimated on; comparisons between filters weight bins by it.
    """

    coeffs: np.ndarray
    config: WpeConfig = field(default_factory=WpeConfig)
    power: PowerProfile | None = None

    def __post_init__(self):
        g = np.asarray(self.coeffs, dtype=complex)
        if g.ndim != 2:
            raise ValueError("coeffs must be a (taps, bins) matrix")
        if g.shape[0] != self.config.taps:
            raise ValueError("coeffs tap count does not match config")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite filter coefficients")
        if self.power is not None and len(self.power) != g.shape[1]:
            raise ValueError("power profile length does not match bin count")
        object.__setattr__(self, "coeffs", g)

    @property
    def n_bins(self) -> int:
        return self.coeffs.shape[1]


@dataclass(frozen=True)
class DereverbResult:
    filter: WpeFilter
    residual: Spectrogram


def tap_tensor(x: np.ndarray, taps: int, delay: int) -> np.ndarray:
    """Stack delayed copies of ``x`` (frames, bins) into (bins, frames, taps).

    Entry ``[f, n, k]`` is ``x[n - delay - k, f]``, zero before frame 0.
    """
    n_frames, n_bins = x.shape
    out = np.zeros((n_bins, n_frames, taps), dtype=complex)
    for k in range(taps):
        lag = delay + k
        if lag < n_frames:
            out[:, lag:, k] = x[: n_frames - lag].T
    return out


def _predict(x_tilde: np.ndarray, g: np.ndarray) -> np.ndarray:
    # g^H x~ for every (f, n); g is (bins, taps)
    return np.matmul(x_tilde, g.conj()[:, :, None])[:, :, 0].T


def solve_filters(x: np.ndarray, x_tilde: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Solve the power-weighted normal equations for every bin at once.

    ``lam`` has the shape of ``x`` (frames, bins).  Returns ``g`` as
    (bins, taps).
    """
    inv = 1.0 / lam.T  # (bins, frames)
    weighted = x_tilde * inv[:, :, None]
    corr = np.matmul(weighted.transpose(0, 2, 1), x_tilde.conj())
    cross = np.matmul(weighted.transpose(0, 2, 1), x.T.conj()[:, :, None])[:, :, 0]
    taps = x_tilde.shape[2]
    load = DIAGONAL_LOADING * np.trace(corr, axis1=1, axis2=2).real / taps
    # guard bins with no regressor energy at all
    load = np.where(load > 0, load, DIAGONAL_LOADING)
    corr = corr + load[:, None, None] * np.eye(taps)
    return np.linalg.solve(corr, cross[:, :, None])[:, :, 0]


def weighted_residual_power(x: np.ndarray, x_tilde: np.ndarray, g: np.ndarray,
                            lam: np.ndarray) -> float:
    resid = x - _predict(x_tilde, g)
    return float(np.sum(np.abs(resid) ** 2 / lam))


def _power_weights(e: np.ndarray, x_power_max: np.ndarray, floor: float) -> np.ndarray:
    return np.maximum(np.abs(e) ** 2, floor * x_power_max[None, :])


def estimate_wpe(spec: Spectrogram, cfg: WpeConfig = WpeConfig()) -> DereverbResult:
    """Estimate WPE prediction filters and the dereverberated spectrogram.

    Raises
    ------
    ValueError
        If there are not more than ``delay + taps`` frames.
    """
    x = spec.data
    n_frames = x.shape[0]
    if n_frames <= cfg.delay + cfg.taps:
        raise ValueError("segment too short for WPE")
    x_tilde = tap_tensor(x, cfg.taps, cfg.delay)
    x_power_max = np.max(np.abs(x) ** 2, axis=0)
    # bins with no energy at all still need a positive weight
    x_power_max = np.where(x_power_max > 0, x_power_max, 1.0)
    e = x
    g = np.zeros((x.shape[1], cfg.taps), dtype=complex)
    for _ in range(cfg.iterations):
        lam = _power_weights(e, x_power_max, cfg.power_floor)
        g = solve_filters(x, x_tilde, lam)
        e = x - _predict(x_tilde, g)
    filt = WpeFilter(g.T.copy(), cfg, mean_power(spec))
    return DereverbResult(filt, spec.with_data(e))


def apply_wpe(spec: Spectrogram, filt: WpeFilter) -> Spectrogram:
    """Subtract the filter's late-reverberation prediction from ``spec``."""
    if spec.n_bins != filt.n_bins:
        raise ValueError(
            f"bin count mismatch: spectrogram has {spec.n_bins}, filter {filt.n_bins}"
        )
    cfg = filt.config
    x_tilde = tap_tensor(spec.data, cfg.taps, cfg.delay)
    return spec.with_data(spec.data - _predict(x_tilde, filt.coeffs.T))
