"""Batch front end: simulate scenes, train score models, diarize and score.

Subcommands::

    wpeloc simulate SCENE.json --out DIR
    wpeloc synth-pairs --n-same N --n-diff N --seed S --out DIR
    wpeloc train MANIFEST.json --out DIR
    wpeloc diarize --config CFG.json [--threshold T | --num-speakers N] [--chunk-len S]
    wpeloc eval REF HYP [--chunk-len S] [--out DIR]
    wpeloc sweep --config CFG.json --windows 1,2,4 --shifts 0.5,1

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio import read_wav, write_wav
from .experiment import (
    ORACLE, ConfigError, ExperimentConfig, TrainManifest, diarize_corpus, load_references,
    pooled, score_corpus, sweep, train_from_manifest, write_der_csv, write_sweep_csv,
)
from .roomsim import RoomSpec, Source, render_scene
from .synth import speech_like, training_pairs
from .timeline import read_rttm, write_rttm

log = logging.getLogger("wpeloc")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _out_dir(args, default: Path | None = None) -> Path:
    out = Path(args.out) if args.out else default
    if out is None:
        raise UsageError("--out is required")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> None:
    scene_path = Path(args.scene)
    doc = json.loads(scene_path.read_text())
    seed = args.seed if args.seed is not None else doc.get("seed")
    if seed is None:
        raise UsageError("scene must set 'seed' (or pass --seed)")
    r = doc["room"]
    room = RoomSpec(tuple(r["dims"]), rt60=r.get("rt60"), reflection=r.get("reflection"),
                    speed_of_sound=r.get("speed_of_sound", 343.0),
                    sample_rate=r.get("sample_rate", 16000))
    rng = np.random.default_rng(seed)
    sources = []
    for spec in doc["sources"]:
        if "wav" in spec:
            signal, rate = read_wav(scene_path.parent / spec["wav"])
            if rate != room.sample_rate:
                raise ValueError(f"{spec['wav']}: sample rate {rate} != room {room.sample_rate:g}")
        elif "synth" in spec:
            signal = speech_like(float(spec["synth"]["duration"]), room.sample_rate, rng)
        else:
            raise ValueError("each source needs 'wav' or 'synth'")
        sources.append(Source(signal, tuple(spec["position"]), str(spec["label"]),
                              float(spec.get("onset", 0.0))))
    rec = doc.get("recording_id", scene_path.stem)
    scene = render_scene(sources, room, tuple(doc["mic"]), doc.get("mode", "concat"),
                         doc.get("max_order"), rec, strip=doc.get("strip_silence", True))
    out = _out_dir(args)
    write_wav(out / f"{rec}.wav", scene.signal, room.sample_rate)
    write_rttm(out / f"{rec}.rttm", scene.timeline)
    print(f"{rec}: {len(scene.signal) / room.sample_rate:.2f} s, {len(scene.timeline)} segments")


def cmd_synth_pairs(args) -> None:
    if args.seed is None:
        raise UsageError("--seed is required")
    out = _out_dir(args)
    pairs = training_pairs(args.n_same, args.n_diff, args.seed, seg_len=args.seg_len)
    rows = []
    for i, p in enumerate(pairs):
        entry = {"label": "same" if p.same else "diff"}
        for side, sig in (("a", p.a), ("b", p.b)):
            name = f"pair{i:04d}{side}.wav"
            write_wav(out / name, sig, 16000)
            entry[side] = {"wav": name, "start": 0.0, "end": len(sig) / 16000}
        rows.append(entry)
    manifest = {"seed": args.seed, "pairs": rows}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(f"wrote {len(rows)} pairs to {out / 'manifest.json'}")


def cmd_train(args) -> None:
    manifest = TrainManifest.load(args.manifest)
    if args.seed is not None:
        manifest.seed = args.seed
    model = train_from_manifest(manifest)
    out = _out_dir(args)
    model.save(out / "model.json")
    print(
        f"sigma2_same={model.sigma2_same:.6g} sigma2_diff={model.sigma2_diff:.6g} "
        f"kappa_same={model.kappa_same:.6g} lda_w=({model.lda_w[0]:.6g}, {model.lda_w[1]:.6g}) "
        f"lda_b={model.lda_b:.6g}"
    )


def _experiment(args) -> ExperimentConfig:
    if not args.config:
        raise UsageError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.chunk_len is not None:
        cfg = replace(cfg, chunk_len=args.chunk_len)
    if args.num_speakers is not None:
        n = args.num_speakers
        cfg = replace(cfg, num_speakers=n if n == ORACLE else int(n), threshold=None)
    elif args.threshold is not None:
        cfg = replace(cfg, threshold=args.threshold, num_speakers=None)
    if args.out:
        cfg = replace(cfg, out_dir=Path(args.out))
    return cfg


def cmd_diarize(args) -> None:
    cfg = _experiment(args)
    hyps = diarize_corpus(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for rec, tl in hyps.items():
        write_rttm(cfg.out_dir / f"{rec}.rttm", tl)
        print(f"{rec}: {len(tl.labels)} clusters, {len(tl)} segments")


def _load_rttms(path: Path) -> dict:
    path = Path(path)
    if path.is_dir():
        out = {}
        for f in sorted(path.glob("*.rttm")):
            out.update(read_rttm(f))
        return out
    return read_rttm(path)


def cmd_eval(args) -> None:
    refs = _load_rttms(args.reference)
    if not refs:
        raise ValueError(f"no reference segments in {args.reference}")
    hyps = _load_rttms(args.hypothesis)
    scores = score_corpus(refs, hyps, args.chunk_len)
    print(f"{'recording':<24}{'miss':>9}{'fa':>9}{'conf':>9}{'total':>9}{'DER%':>8}")
    for rec, s in scores.items():
        print(f"{rec:<24}{s.miss:9.2f}{s.false_alarm:9.2f}{s.confusion:9.2f}"
              f"{s.total_speech:9.2f}{100 * s.der:8.2f}")
    total = pooled(scores.values())
    print(f"{'ALL':<24}{total.miss:9.2f}{total.false_alarm:9.2f}{total.confusion:9.2f}"
          f"{total.total_speech:9.2f}{100 * total.der:8.2f}")
    if args.out:
        write_der_csv(_out_dir(args) / "der.csv", scores)


def cmd_sweep(args) -> None:
    cfg = _experiment(args)
    rows = sweep(cfg, args.windows, args.shifts)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(cfg.out_dir / "sweep.csv", rows)
    for r in rows:
        der = "" if r["der"] is None else f"{100 * r['der']:.2f}"
        print(f"window={r['window']:g} shift={r['shift']:g} DER%={der}")


def _add_cluster_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float, help="stop merging below this score")
    g.add_argument("--num-speakers", help=f"cluster to N speakers ({ORACLE!r}: reference count)")
    p.add_argument("--chunk-len", type=float, help="process equal chunks of this many seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wpeloc", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="render a scene description to WAV + RTTM")
    p.add_argument("scene")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth-pairs", help="write synthetic same/diff training pairs")
    p.add_argument("--n-same", type=int, default=100)
    p.add_argument("--n-diff", type=int, default=100)
    p.add_argument("--seg-len", type=float, default=4.0)
    common(p)
    p.set_defaults(func=cmd_synth_pairs)

    p = sub.add_parser("train", help="fit a score model from a pairs manifest")
    p.add_argument("manifest")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diarize", help="diarize every recording named in the config")
    p.add_argument("--config")
    _add_cluster_flags(p)
    common(p)
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("eval", help="score hypothesis RTTM against reference")
    p.add_argument("reference")
    p.add_argument("hypothesis")
    p.add_argument("--chunk-len", type=float)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="DER over a window x shift grid")
    p.add_argument("--config")
    p.add_argument("--windows", type=_float_list, required=True)
    p.add_argument("--shifts", type=_float_list, required=True)
    _add_cluster_flags(p)
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"wpeloc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"wpeloc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
