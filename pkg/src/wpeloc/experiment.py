"""Batch experiments over a directory of recordings.

A corpus is a directory of ``<recording_id>.wav`` files next to reference
RTTM files.  The reference supplies the oracle speech regions (and, when
asked for, the true speaker count); everything else comes from audio.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .audio import read_wav
from .diarizer import DiarizeConfig, KnownCount, StftConfig, Threshold, diarize
from .metrics import DerBreakdown, der_chunked
from .pairscore import ScoreModel, train_model
from .spectral import WindowKind, stft
from .timeline import Timeline, read_rttm
from .wpe import WpeConfig, estimate_wpe

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Malformed or incomplete experiment configuration."""


ORACLE = "oracle"


@dataclass
class ExperimentConfig:
    audio_dir: Path
    rttm_dir: Path
    model: Path
    out_dir: Path
    seed: int
    window: float = 4.0
    shift: float = 0.5
    threshold: float | None = 0.0
    num_speakers: int | str | None = None
    chunk_len: float | None = None
    wpe: WpeConfig | None = None
    stft: StftConfig | None = None

    @classmethod
    def from_json(cls, doc: dict, base: Path = Path(".")) -> "ExperimentConfig":
        if "seed" not in doc:
            raise ConfigError("config must set 'seed'")
        try:
            paths = {k: base / doc[k] for k in ("audio_dir", "rttm_dir", "model")}
        except KeyError as exc:
            raise ConfigError(f"config is missing {exc.args[0]!r}") from None
        d = doc.get("diarize", {})
        wpe = WpeConfig(**doc["wpe"]) if "wpe" in doc else None
        stft_cfg = None
        if "stft" in doc:
            s = doc["stft"]
            stft_cfg = StftConfig(s.get("n_fft", 256), s.get("hop", 128),
                                  WindowKind(s.get("window", "sqrt_hann")))
        cfg = cls(
            out_dir=base / doc.get("out_dir", "out"), seed=int(doc["seed"]),
            window=float(d.get("window", 4.0)), shift=float(d.get("shift", 0.5)),
            threshold=d.get("threshold", 0.0), num_speakers=d.get("num_speakers"),
            chunk_len=d.get("chunk_len"), wpe=wpe, stft=stft_cfg, **paths,
        )
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), path.parent)

    def cluster_mode(self, reference: Timeline):
        if self.num_speakers is not None:
            if self.num_speakers == ORACLE:
                return KnownCount(max(1, len(reference.labels)))
            return KnownCount(int(self.num_speakers))
        if self.threshold is None:
            raise ConfigError("set either a threshold or a speaker count")
        return Threshold(float(self.threshold))

    def diarize_config(self, reference: Timeline) -> DiarizeConfig:
        return DiarizeConfig(self.window, self.shift, self.cluster_mode(reference), self.chunk_len)


def model_stft(model: ScoreModel) -> tuple[StftConfig, float]:
    s = model.stft
    return (StftConfig(int(s.get("n_fft", 256)), int(s.get("hop", 128)),
                       WindowKind(s.get("window", "sqrt_hann"))),
            float(s.get("sample_rate", 16000)))


def load_references(rttm_dir: Path) -> dict[str, Timeline]:
    rttm_dir = Path(rttm_dir)
    files = [rttm_dir] if rttm_dir.is_file() else sorted(rttm_dir.glob("*.rttm"))
    refs: dict[str, Timeline] = {}
    for f in files:
        refs.update(read_rttm(f))
    if not refs:
        raise FileNotFoundError(f"no RTTM references under {rttm_dir}")
    return refs


def diarize_corpus(cfg: ExperimentConfig, model: ScoreModel | None = None,
                   references: dict[str, Timeline] | None = None) -> dict[str, Timeline]:
    """Diarize every referenced recording; results in recording-id order."""
    model = model or ScoreModel.load(cfg.model)
    refs = references or load_references(cfg.rttm_dir)
    stft_cfg, model_rate = model_stft(model)
    stft_cfg = cfg.stft or stft_cfg
    wpe_cfg = cfg.wpe or model.wpe
    if wpe_cfg != model.wpe:
        log.warning("WPE settings differ from those the model was trained with")
    out = {}
    for rec in sorted(refs):
        wav = Path(cfg.audio_dir) / f"{rec}.wav"
        audio, rate = read_wav(wav)
        if rate != model_rate:
            log.warning("%s: sample rate %d differs from the model's %g", rec, rate, model_rate)
        ref = refs[rec]
        out[rec] = diarize(audio, ref.speech_regions(), cfg.diarize_config(ref), wpe_cfg, model,
                           sample_rate=rate, stft_cfg=stft_cfg)
    return out


def score_corpus(references: dict[str, Timeline], hypotheses: dict[str, Timeline],
                 chunk_len: float | None = None) -> dict[str, DerBreakdown]:
    scores = {}
    for rec in sorted(references):
        hyp = hypotheses.get(rec, Timeline(rec, []))
        scores[rec] = der_chunked(references[rec], hyp, chunk_len)
    return scores


def pooled(scores: Iterable[DerBreakdown]) -> DerBreakdown:
    total = DerBreakdown(0.0, 0.0, 0.0, 0.0)
    for s in scores:
        total = total + s
    return total


DER_FIELDS = ["recording_id", "miss", "false_alarm", "confusion", "total_speech", "der"]


def write_der_csv(path: Path, scores: dict[str, DerBreakdown]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DER_FIELDS)
        for rec, s in scores.items():
            w.writerow([rec, f"{s.miss:.4f}", f"{s.false_alarm:.4f}", f"{s.confusion:.4f}",
                        f"{s.total_speech:.4f}", f"{s.der:.6f}"])


def read_der_csv(path: Path) -> dict[str, DerBreakdown]:
    with open(path, newline="") as fh:
        return {
            row["recording_id"]: DerBreakdown(float(row["miss"]), float(row["false_alarm"]),
                                              float(row["confusion"]), float(row["total_speech"]))
            for row in csv.DictReader(fh)
        }


def sweep(cfg: ExperimentConfig, windows: Sequence[float], shifts: Sequence[float],
          model: ScoreModel | None = None) -> list[dict]:
    """Pooled DER over a window x shift grid; cells with shift > window are empty."""
    model = model or ScoreModel.load(cfg.model)
    refs = load_references(cfg.rttm_dir)
    rows = []
    for win in windows:
        for sh in shifts:
            row = {"window": win, "shift": sh, "der": None}
            if sh <= win:
                hyps = diarize_corpus(replace(cfg, window=win, shift=sh), model, refs)
                row["der"] = pooled(score_corpus(refs, hyps, cfg.chunk_len).values()).der
            rows.append(row)
    return rows


def write_sweep_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "shift", "der"])
        for r in rows:
            w.writerow([f"{r['window']:g}", f"{r['shift']:g}",
                        "" if r["der"] is None else f"{r['der']:.6f}"])


@dataclass
class PairSpec:
    a: tuple[Path, float, float]
    b: tuple[Path, float, float]
    same: bool


@dataclass
class TrainManifest:
    pairs: list[PairSpec]
    seed: int
    wpe: WpeConfig = field(default_factory=WpeConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    delay_bins: int | None = None
    alpha_mode: str = "normalized"

    @classmethod
    def load(cls, path: str | Path) -> "TrainManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        if "seed" not in doc:
            raise ConfigError("manifest must set 'seed'")

        def seg(d):
            return (path.parent / d["wav"], float(d["start"]), float(d["end"]))

        pairs = []
        for p in doc.get("pairs", []):
            if p["label"] not in ("same", "diff"):
                raise ValueError(f"pair label must be 'same' or 'diff', got {p['label']!r}")
            pairs.append(PairSpec(seg(p["a"]), seg(p["b"]), p["label"] == "same"))
        s = doc.get("stft", {})
        return cls(
            pairs, int(doc["seed"]), WpeConfig(**doc.get("wpe", {})),
            StftConfig(s.get("n_fft", 256), s.get("hop", 128), WindowKind(s.get("window", "sqrt_hann"))),
            doc.get("delay_bins"), doc.get("alpha_mode", "normalized"),
        )


def train_from_manifest(manifest: TrainManifest) -> ScoreModel:
    cache: dict[Path, tuple[np.ndarray, int]] = {}
    rates = set()

    def filt(spec):
        wav, start, end = spec
        if wav not in cache:
            cache[wav] = read_wav(wav)
        audio, rate = cache[wav]
        rates.add(rate)
        seg = audio[int(round(start * rate)):int(round(end * rate))]
        s = stft(seg, manifest.stft.n_fft, manifest.stft.hop, manifest.stft.window, rate)
        return estimate_wpe(s, manifest.wpe).filter

    same = [(filt(p.a), filt(p.b)) for p in manifest.pairs if p.same]
    diff = [(filt(p.a), filt(p.b)) for p in manifest.pairs if not p.same]
    if len(rates) > 1:
        raise ValueError(f"training audio mixes sample rates {sorted(rates)}")
    rate = rates.pop() if rates else 16000
    delay_bins = manifest.delay_bins or manifest.stft.n_fft
    stft_doc = {"n_fft": manifest.stft.n_fft, "hop": manifest.stft.hop,
                "window": manifest.stft.window.value, "sample_rate": rate}
    return train_model(same, diff, delay_bins, manifest.alpha_mode, wpe=manifest.wpe,
                       stft=stft_doc)
