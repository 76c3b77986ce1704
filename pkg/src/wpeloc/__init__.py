"""Same-location scoring of audio segments from WPE filters, and diarization built on it."""

from .diarizer import DiarizeConfig, KnownCount, StftConfig, Threshold, ahc_cluster, diarize, score_matrix, segment_windows
from .metrics import DerBreakdown, der, der_chunked, random_baseline
from .pairscore import PairFeatures, ScoreModel, estimate_alpha, estimate_delay, pair_features, train_model
from .roomsim import RoomSpec, Rir, RirParts, decompose_rir, image_rir, render_scene
from .spectral import PowerProfile, Spectrogram, WeightVector, WindowKind, istft, joint_energy_weights, mean_power, stft
from .timeline import Segment, Timeline, read_rttm, write_rttm
from .wpe import DereverbResult, WpeConfig, WpeFilter, apply_wpe, estimate_wpe

__version__ = "0.1.0"
