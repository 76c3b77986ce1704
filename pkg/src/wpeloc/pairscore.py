"""Same-location scoring for pairs of WPE filters.

Two filters are compared through a magnitude ratio and a relative delay.
Each feature is turned into a log-likelihood ratio (same vs. different
position) and the two ratios are fused by a two-class LDA so that zero is
the equal-prior decision boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .spectral import WeightVector, joint_energy_weights
from .wpe import WpeConfig, WpeFilter

SCHEMA_VERSION = 1
KAPPA_MAX = 500.0
VARIANCE_FLOOR = 1e-6
# |G2| below this fraction of max|G2| is excluded from the ratio average
RATIO_GUARD = 1e-12

ALPHA_NORMALIZED = "normalized"
ALPHA_VERBATIM = "verbatim"


class NoComparableEnergy(ValueError):
    def __init__(self, msg="no comparable energy"):
        super().__init__(msg)


@dataclass(frozen=True)
class PairFeatures:
    log_alpha: float
    delay_bin: int
    llr_mag: float
    llr_delay: float
    fused: float


@dataclass(frozen=True)
class ScoreModel:
    sigma2_same: float
    sigma2_diff: float
    kappa_same: float
    lda_w: tuple[float, float] = (1.0, 1.0)
    lda_b: float = 0.0
    delay_bins: int = 256
    score_floor: float = -1e3
    alpha_mode: str = ALPHA_NORMALIZED
    wpe: WpeConfig = field(default_factory=WpeConfig)
    stft: dict = field(default_factory=lambda: {
        "n_fft": 256, "hop": 128, "window": "sqrt_hann", "sample_rate": 16000})

    def __post_init__(self):
        if not (self.sigma2_same > 0 and self.sigma2_diff > 0):
            raise ValueError("variances must be positive")
        if not 0 <= self.kappa_same <= KAPPA_MAX:
            raise ValueError(f"kappa_same must lie in [0, {KAPPA_MAX}]")
        if self.delay_bins < 1:
            raise ValueError("delay_bins must be positive")
        if self.alpha_mode not in (ALPHA_NORMALIZED, ALPHA_VERBATIM):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")
        object.__setattr__(self, "lda_w", tuple(float(v) for v in self.lda_w))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["lda_w"] = list(self.lda_w)
        doc["wpe"] = self.wpe.to_dict()
        return {"schema_version": SCHEMA_VERSION, **doc}

    @classmethod
    def from_json(cls, doc: dict) -> "ScoreModel":
        doc = dict(doc)
        version = doc.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema version {version!r}")
        doc["wpe"] = WpeConfig(**doc.get("wpe", {}))
        return cls(**doc)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ScoreModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _check_pair(g1: WpeFilter, g2: WpeFilter, eps: WeightVector) -> np.ndarray:
    if g1.coeffs.shape != g2.coeffs.shape:
        raise ValueError(
            f"filter shapes differ: {g1.coeffs.shape} vs {g2.coeffs.shape}"
        )
    w = np.asarray(eps.values, dtype=float)
    if len(w) != g1.n_bins:
        raise ValueError("weight vector length does not match bin count")
    return w


def estimate_alpha(g1: WpeFilter, g2: WpeFilter, eps: WeightVector,
                   mode: str = ALPHA_NORMALIZED) -> float:
    """Energy-weighted mean of the filter magnitude ratio ``|G1| / |G2|``.

    In ``"normalized"`` mode the weights are rescaled to sum to one within
    each tap, so identical filters give exactly 1.  ``"verbatim"`` divides
    the weighted sum by ``K * F`` instead and is kept for comparison.
    Coefficients of ``g2`` below the guard are dropped from the average.
    """
    w = _check_pair(g1, g2, eps)
    a1, a2 = np.abs(g1.coeffs), np.abs(g2.coeffs)
    valid = a2 >= RATIO_GUARD * a2.max() if a2.max() > 0 else np.zeros_like(a2, bool)
    weights = np.where(valid, w[None, :], 0.0)
    ratio = np.divide(a1, a2, out=np.zeros_like(a1), where=valid)
    if mode == ALPHA_VERBATIM:
        if not np.any(weights > 0):
            raise NoComparableEnergy()
        return float(np.sum(weights * ratio) / a1.size)
    if mode != ALPHA_NORMALIZED:
        raise ValueError(f"unknown alpha mode {mode!r}")
    per_tap = weights.sum(axis=1)
    usable = per_tap > 0
    if not np.any(usable):
        raise NoComparableEnergy()
    tap_means = np.sum(weights[usable] * ratio[usable], axis=1) / per_tap[usable]
    return float(np.mean(tap_means))


def delay_objective(g1: WpeFilter, g2: WpeFilter, eps: WeightVector,
                    delay_bins: int) -> np.ndarray:
    """Phase-transform cross-correlation of two filters over candidate delays.

    Returns the real objective for every ``d`` in ``0..delay_bins-1``.  The
    cross term ``G1 * conj(G2)`` is whitened to unit magnitude and weighted
    by the joint energy of each bin, then evaluated at ``exp(+2j*pi*d*f/T)``
    and summed over taps, in the manner of GCC-PHAT.
    """
    w = _check_pair(g1, g2, eps)
    n_bins = g1.n_bins
    if delay_bins < n_bins:
        # ifft zero-padding below would silently alias bins above T
        raise ValueError("delay_bins must be at least the bin count")
    cross = g1.coeffs * g2.coeffs.conj()
    mag = np.abs(cross)
    nonzero = mag > 0
    if not np.any(nonzero & (w[None, :] > 0)):
        raise NoComparableEnergy()
    phat = np.divide(cross, mag, out=np.zeros_like(cross), where=nonzero) * w[None, :]
    spectrum = phat.sum(axis=0) / n_bins
    # sum_f c_f exp(+2j pi d f / T) == T * ifft(c, T)[d]
    return (np.fft.ifft(spectrum, n=delay_bins) * delay_bins).real


def estimate_delay(g1: WpeFilter, g2: WpeFilter, eps: WeightVector,
                   delay_bins: int | None = None) -> int:
    """Most likely relative delay (in samples, modulo ``delay_bins``)."""
    if delay_bins is None:
        delay_bins = 2 * (g1.n_bins - 1)
    return int(np.argmax(delay_objective(g1, g2, eps, delay_bins)))


def magnitude_llr(log_alpha: float, model: ScoreModel) -> float:
    s_same, s_diff = model.sigma2_same, model.sigma2_diff
    return 0.5 * (math.log(s_diff / s_same) + log_alpha**2 * (1 / s_diff - 1 / s_same))


def _delay_log_normalizer(kappa: float, delay_bins: int) -> float:
    d = np.arange(delay_bins)
    return float(logsumexp(kappa * np.cos(2 * np.pi * d / delay_bins)))


def delay_llr(delay_bin: int, model: ScoreModel) -> float:
    """Discrete von Mises against uniform, both on ``0..T-1``."""
    t = model.delay_bins
    if not 0 <= delay_bin < t:
        raise ValueError(f"delay bin {delay_bin} outside 0..{t - 1}")
    kappa = model.kappa_same
    if kappa == 0:
        return 0.0
    # fold so that d and T - d give bit-identical values
    d = min(delay_bin, t - delay_bin)
    return kappa * math.cos(2 * math.pi * d / t) - _delay_log_normalizer(kappa, t) + math.log(t)


def fuse(llr_mag: float, llr_delay: float, model: ScoreModel) -> float:
    w = model.lda_w
    return w[0] * llr_mag + w[1] * llr_delay + model.lda_b


def pair_log_alpha(g1: WpeFilter, g2: WpeFilter, eps: WeightVector, mode: str) -> float:
    """Antisymmetrized log magnitude ratio.

    A weighted mean of ratios is not the reciprocal of the mean of the
    inverse ratios, so both directions are averaged in the log domain.
    Swapping the filters then flips the sign exactly.
    """
    forward = estimate_alpha(g1, g2, eps, mode)
    backward = estimate_alpha(g2, g1, eps, mode)
    if not (forward > 0 and backward > 0):
        raise NoComparableEnergy()
    return 0.5 * (math.log(forward) - math.log(backward))


def raw_features(g1: WpeFilter, g2: WpeFilter, delay_bins: int,
                 alpha_mode: str = ALPHA_NORMALIZED) -> tuple[float, int]:
    """Model-independent ``(log_alpha, delay_bin)`` for one pair."""
    if g1.power is None or g2.power is None:
        raise ValueError("filters carry no power profile")
    eps = joint_energy_weights(g1.power, g2.power)
    log_alpha = pair_log_alpha(g1, g2, eps, alpha_mode)
    return log_alpha, estimate_delay(g1, g2, eps, delay_bins)


def features_from_raw(log_alpha: float, delay_bin: int, model: ScoreModel) -> PairFeatures:
    lm = magnitude_llr(log_alpha, model)
    ld = delay_llr(delay_bin, model)
    return PairFeatures(log_alpha, delay_bin, lm, ld, fuse(lm, ld, model))


def pair_features(g1: WpeFilter, g2: WpeFilter, model: ScoreModel) -> PairFeatures:
    log_alpha, d = raw_features(g1, g2, model.delay_bins, model.alpha_mode)
    return features_from_raw(log_alpha, d, model)


def fit_kappa(delay_bins_same: Sequence[int], delay_bins: int) -> float:
    """Zero-mean von Mises concentration from the mean resultant length."""
    d = np.asarray(delay_bins_same, dtype=float)
    r_bar = float(np.mean(np.cos(2 * np.pi * d / delay_bins)))
    if r_bar >= 1.0 - 1e-12:
        return KAPPA_MAX
    if r_bar <= 0:
        return 0.0
    kappa = r_bar * (2 - r_bar**2) / (1 - r_bar**2)
    return float(min(max(kappa, 0.0), KAPPA_MAX))


def fit_lda(x_same: np.ndarray, x_diff: np.ndarray) -> tuple[np.ndarray, float]:
    """Two-class LDA with pooled within-class covariance.

    Returns ``(w, b)`` such that ``w @ x + b`` is zero halfway between the
    class means and positive on the ``x_same`` side.
    """
    x_same = np.asarray(x_same, dtype=float)
    x_diff = np.asarray(x_diff, dtype=float)
    mu_s, mu_d = x_same.mean(axis=0), x_diff.mean(axis=0)
    scatter = (x_same - mu_s).T @ (x_same - mu_s) + (x_diff - mu_d).T @ (x_diff - mu_d)
    dof = max(len(x_same) + len(x_diff) - 2, 1)
    cov = scatter / dof
    ridge = 1e-9 * np.trace(cov) + 1e-12
    cov = cov + ridge * np.eye(cov.shape[0])
    w = np.linalg.solve(cov, mu_s - mu_d)
    b = -float(w @ (mu_s + mu_d)) / 2
    return w, b


def fit_model_from_raw(same: Sequence[tuple[float, int]], diff: Sequence[tuple[float, int]],
                       delay_bins: int, **model_kwargs) -> ScoreModel:
    """Fit the score model from precomputed ``(log_alpha, delay_bin)`` pairs."""
    if len(same) < 2 or len(diff) < 2:
        raise ValueError("need at least 2 pairs per class")
    la_same = np.array([p[0] for p in same])
    la_diff = np.array([p[0] for p in diff])
    sigma2_same = max(float(np.mean(la_same**2)), VARIANCE_FLOOR)
    sigma2_diff = max(float(np.mean(la_diff**2)), VARIANCE_FLOOR)
    kappa = fit_kappa([p[1] for p in same], delay_bins)
    base = ScoreModel(sigma2_same, sigma2_diff, kappa, delay_bins=delay_bins, **model_kwargs)

    def llrs(rows):
        return np.array([[magnitude_llr(la, base), delay_llr(d, base)] for la, d in rows])

    x_same, x_diff = llrs(same), llrs(diff)
    w, b = fit_lda(x_same, x_diff)
    scores = np.concatenate([x_same @ w + b, x_diff @ w + b])
    return ScoreModel(
        sigma2_same, sigma2_diff, kappa, lda_w=(float(w[0]), float(w[1])), lda_b=b,
        delay_bins=delay_bins, score_floor=float(scores.min()), **model_kwargs,
    )


def train_model(same_pairs: Sequence[tuple[WpeFilter, WpeFilter]],
                diff_pairs: Sequence[tuple[WpeFilter, WpeFilter]],
                delay_bins: int = 256, alpha_mode: str = ALPHA_NORMALIZED,
                **model_kwargs) -> ScoreModel:
    """Estimate variances, concentration and LDA fusion from labeled pairs."""
    if len(same_pairs) < 2 or len(diff_pairs) < 2:
        raise ValueError("need at least 2 pairs per class")
    same = [raw_features(a, b, delay_bins, alpha_mode) for a, b in same_pairs]
    diff = [raw_features(a, b, delay_bins, alpha_mode) for a, b in diff_pairs]
    if "wpe" not in model_kwargs:
        model_kwargs["wpe"] = same_pairs[0][0].config
    return fit_model_from_raw(same, diff, delay_bins, alpha_mode=alpha_mode, **model_kwargs)
