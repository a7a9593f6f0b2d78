"""Command-line entry point: ``vidtemporal {eval,refine,track,synth,bench,plotdata}``.

Exit codes: 0 success, 1 I/O or parse error, 2 invariant violation in input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import jsonschema

from . import metrics
from .associate import AssociatorConfig, SequencingError, Tracklet, run
from .core import BBox
from .io import (InputInvariantError, ParseError, TrackletRecord, atomic_writer,
                 header_line, load_detections, load_tracklet_records, open_input,
                 sequence_lines, write_json, write_jsonl)
from .metrics import CHANNELS, ConsistencyError
from .refine import EMIT_MODES, ONLINE_DROP, RefinerConfig, refine_stream
from .sot import PROFILES, SotConfig, bench_candidate_selection, run_sot_by_detection
from .synth import PerturbationSpec, TrackSpec, generate

log = logging.getLogger("vidtemporal")

HIGH_FREQ_CUT = 0.1

SYNTH_SCHEMA = {
    "type": "object",
    "definitions": {
        "video": {
            "type": "object",
            "required": ["t_v", "tracks"],
            "properties": {
                "video_id": {"type": "string"},
                "t_v": {"type": "integer", "minimum": 1},
                "tracks": {"type": "array", "items": {"$ref": "#/definitions/track"}},
                "perturbation": {"$ref": "#/definitions/perturbation"},
            },
        },
        "track": {
            "type": "object",
            "required": ["span", "box"],
            "properties": {
                "span": {"type": "array", "items": {"type": "integer", "minimum": 0},
                         "minItems": 2, "maxItems": 2},
                "box": {"type": "array", "items": {"type": "number"},
                        "minItems": 4, "maxItems": 4},
                "motion": {"enum": ["stationary", "constant-velocity", "sinusoidal"]},
                "velocity": {"type": "array", "items": {"type": "number"},
                             "minItems": 4, "maxItems": 4},
                "amplitude": {"type": "number"},
                "period": {"type": "number", "minimum": 2},
                "class_id": {"type": "integer"},
                "score": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "perturbation": {
            "type": "object",
            "properties": {
                "jitter_sigma_center": {"type": "number", "minimum": 0},
                "jitter_sigma_size": {"type": "number", "minimum": 0},
                "dropout_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "burst_dropout": {"type": "array", "items": {
                    "type": "array", "items": {"type": "integer", "minimum": 0},
                    "minItems": 2, "maxItems": 2}},
                "ghost_tracks": {"type": "integer", "minimum": 0},
                "ghost_length": {"type": "integer", "minimum": 1},
                "ghost_class": {"type": "integer"},
                "seed": {"type": "integer"},
            },
        },
    },
    "oneOf": [
        {"$ref": "#/definitions/video"},
        {"type": "object", "required": ["videos"],
         "properties": {"videos": {"type": "array",
                                   "items": {"$ref": "#/definitions/video"}}}},
    ],
}


class SchemaError(ValueError):
    pass


def _assoc_cfg(args) -> AssociatorConfig:
    return AssociatorConfig(args.score_threshold, args.assoc_iou, args.s_lost_max,
                            args.s_obj_max)


def _refiner_cfg(args) -> RefinerConfig:
    return RefinerConfig(args.s_sde, args.omega, args.emit_mode)


def _add_assoc_flags(p):
    g = p.add_argument_group("association")
    g.add_argument("--score-threshold", type=float, default=0.5)
    g.add_argument("--assoc-iou", type=float, default=0.3,
                   help="minimum IoU to link a detection to a tracklet (convention)")
    g.add_argument("--s-lost-max", type=int, default=10,
                   help="frames a lost tracklet stays alive (convention)")
    g.add_argument("--s-obj-max", type=int, default=5)


def _add_refine_flags(p):
    g = p.add_argument_group("refinement")
    g.add_argument("--s-sde", type=int, default=10)
    g.add_argument("--omega", type=float, default=10.0)
    g.add_argument("--emit-mode", choices=EMIT_MODES, default=ONLINE_DROP)


def _load(args):
    with open_input(args.input) as fh:
        return load_detections(fh, args.input or "<stdin>", args.t_v)


# -- commands ----------------------------------------------------------------

def cmd_eval(args) -> int:
    videos = _load(args)
    if not any(seq.detections() for seq in videos.values()):
        log.warning("input holds no detections; every metric is zero")
    cfg = _assoc_cfg(args)
    reports = [metrics.evaluate(run(seq, cfg), seq.t_v, vid) for vid, seq in videos.items()]
    agg = metrics.aggregate(reports)
    log_values = not args.no_log
    doc = {
        "config": {"score_threshold": cfg.score_threshold,
                   "assoc_iou_threshold": cfg.assoc_iou_threshold,
                   "S_lost_max": cfg.S_lost_max, "S_obj_max": cfg.S_obj_max,
                   "S_ESDE": metrics.S_ESDE, "S_SDE": metrics.S_SDE, "log": log_values},
        "videos": [r.to_dict(log=log_values, per_tracklet=args.per_tracklet) for r in reports],
        "aggregate": agg.to_dict(log=log_values, per_tracklet=False),
    }
    write_json(args.output, doc)
    return 0


def cmd_refine(args) -> int:
    videos = _load(args)
    assoc_cfg, ref_cfg = _assoc_cfg(args), _refiner_cfg(args)
    det_rows, track_rows = [], []
    for vid, seq in videos.items():
        result = refine_stream(seq, assoc_cfg, ref_cfg)
        det_rows.append(header_line(vid, seq.t_v))
        track_rows.append(header_line(vid, seq.t_v))
        for r in result.records:
            rec = TrackletRecord.from_detection(vid, r.track_id, r.detection, r.interpolated)
            row = rec.to_dict()
            track_rows.append(row)
            det_rows.append({k: v for k, v in row.items() if k != "track_id"})
    write_jsonl(args.output, det_rows)
    if args.tracklets:
        write_jsonl(args.tracklets, track_rows)
    return 0


def _box_dict(b: BBox) -> dict:
    return {"cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h}


def cmd_track(args) -> int:
    videos = _load(args)
    assoc_cfg = _assoc_cfg(args)
    if args.mode == "mot":
        rows = []
        for vid, seq in videos.items():
            rows.append(header_line(vid, seq.t_v))
            for t in run(seq, assoc_cfg):
                for det in t.history:
                    if det is not None:
                        rows.append(TrackletRecord.from_detection(vid, t.id, det).to_dict())
        write_jsonl(args.output, rows)
        return 0

    sot_cfg = SotConfig(args.u_sos, args.u_nms, args.score_threshold)
    ref_cfg = _refiner_cfg(args)
    doc = {"videos": []}
    for vid, seq in videos.items():
        outputs, events = run_sot_by_detection(seq.frames, sot_cfg, assoc_cfg, ref_cfg)
        frames = []
        for o in outputs:
            entry = {"frame": o.frame, "mode": o.mode, "track_id": None, "box": None,
                     "score": None}
            if o.tracked is not None:
                entry.update(track_id=o.tracked.track_id, box=_box_dict(o.tracked.detection.box),
                             score=o.tracked.detection.score)
            frames.append(entry)
        doc["videos"].append({
            "video_id": vid, "t_v": seq.t_v, "frames": frames,
            "switches": [{"frame": f, "from": a, "to": b} for f, a, b in events],
        })
    write_json(args.output, doc)
    return 0


def _parse_synth_video(obj: dict, seed: int | None):
    tracks = [TrackSpec(span=tuple(t["span"]), base_box=BBox(*t["box"]),
                        motion=t.get("motion", "stationary"),
                        velocity=tuple(t.get("velocity", (0.0, 0.0, 0.0, 0.0))),
                        amplitude=t.get("amplitude", 0.0), period=t.get("period", 2.0),
                        class_id=t.get("class_id", 0), base_score=t.get("score", 0.9))
              for t in obj["tracks"]]
    p = dict(obj.get("perturbation", {}))
    if seed is not None:
        p["seed"] = seed
    p["burst_dropout"] = tuple(tuple(b) for b in p.get("burst_dropout", ()))
    return tracks, PerturbationSpec(**p), obj["t_v"], obj.get("video_id", "synth")


def load_synth_spec(obj, seed: int | None = None):
    try:
        jsonschema.validate(obj, SYNTH_SCHEMA)
    except jsonschema.ValidationError as exc:
        # Prefer the most specific failure under oneOf.
        best = jsonschema.exceptions.best_match(exc.context) if exc.context else exc
        path = "/".join(str(p) for p in best.absolute_path) or "<root>"
        raise SchemaError(f"synth spec invalid at {path}: {best.message}") from None
    items = obj["videos"] if "videos" in obj else [obj]
    try:
        return [_parse_synth_video(v, seed) for v in items]
    except ValueError as exc:
        raise SchemaError(f"synth spec invalid: {exc}") from None


def cmd_synth(args) -> int:
    try:
        with open_input(args.spec) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", exc.lineno, args.spec) from None
    rows, ledgers = [], []
    for i, (tracks, perturb, t_v, vid) in enumerate(load_synth_spec(obj, args.seed)):
        if "videos" in obj and vid == "synth":
            vid = f"synth{i}"
        seq, ledger = generate(tracks, perturb, t_v, vid)
        rows.extend(sequence_lines(seq))
        ledgers.append({"video_id": vid, "seed": perturb.seed, **ledger.to_dict()})
    write_jsonl(args.output, rows)
    if args.ledger:
        write_json(args.ledger, {"videos": ledgers})
    return 0


def cmd_bench(args) -> int:
    cfg = SotConfig(args.u_sos, args.u_nms, args.score_threshold)
    rec = bench_candidate_selection(args.candidates, args.profile, cfg, args.seed, args.repeats)
    row = {"candidates": rec.candidates, "profile": rec.profile, "repeats": rec.repeats,
           "nms_ms": rec.nms_ms_per_frame, "sos_nms_ms": rec.sos_nms_ms_per_frame,
           "ratio": rec.ratio, "survivors_after_sos": rec.survivors_after_sos}
    if args.json:
        print(json.dumps(row))
    else:
        print(f"{'candidates':>10} {'profile':>10} {'nms_ms':>10} {'sos_nms_ms':>11} "
              f"{'ratio':>7} {'survivors':>10}")
        print(f"{rec.candidates:>10} {rec.profile:>10} {rec.nms_ms_per_frame:>10.4f} "
              f"{rec.sos_nms_ms_per_frame:>11.4f} {rec.ratio:>7.3f} "
              f"{rec.survivors_after_sos:>10}")
    return 0


def tracklets_from_records(records) -> list[Tracklet]:
    by_id: dict[int, list] = {}
    for r in records:
        by_id.setdefault(r.track_id, []).append(r)
    out = []
    for tid in sorted(by_id):
        recs = sorted(by_id[tid], key=lambda r: r.frame)
        t = Tracklet(tid, recs[0].class_id, recs[0].frame)
        for r in recs:
            t.add(r.to_detection())
        out.append(t)
    return out


def cmd_plotdata(args) -> int:
    videos = {}
    if args.tracklets_input:
        with open_input(args.input) as fh:
            for vid, (t_v, recs) in load_tracklet_records(fh, args.input, args.t_v).items():
                videos[vid] = tracklets_from_records(recs)
    else:
        cfg = _assoc_cfg(args)
        videos = {vid: run(seq, cfg) for vid, seq in _load(args).items()}

    with atomic_writer(args.out_prefix + "_curves.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "track_id", "frame", "channel", "value", "miss"])
        for vid, tracklets in videos.items():
            for t in tracklets:
                for offset, det in enumerate(t.history):
                    f = t.first_frame + offset
                    for c, ch in enumerate(CHANNELS):
                        if det is None:
                            w.writerow([vid, t.id, f, ch, "", 1])
                        else:
                            w.writerow([vid, t.id, f, ch, repr(det.box.as_tuple()[c]), 0])
    with atomic_writer(args.out_prefix + "_spectrum.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "track_id", "channel", "q", "A", "high_freq"])
        for vid, tracklets in videos.items():
            for t in tracklets:
                series = metrics.channel_series(t)
                for ch in CHANNELS:
                    for pt in metrics.dft_amplitudes(series[ch]):
                        w.writerow([vid, t.id, ch, repr(pt.q), repr(pt.A),
                                    int(pt.q > HIGH_FREQ_CUT)])
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidtemporal",
        description="Temporal continuity/stability analytics for video detection streams")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="compute continuity and stability metrics")
    p.add_argument("input", nargs="?", help="detections JSONL (default: stdin)")
    p.add_argument("-o", "--output", help="report JSON path (default: stdout)")
    p.add_argument("--t-v", type=int, help="override video duration in frames")
    p.add_argument("--no-log", action="store_true", help="report raw values only")
    p.add_argument("--per-tracklet", action="store_true",
                   help="include the per-tracklet breakdown")
    _add_assoc_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("refine", help="online tracklet refinement")
    p.add_argument("input", nargs="?")
    p.add_argument("-o", "--output", help="refined detections JSONL (default: stdout)")
    p.add_argument("--tracklets", help="also write tracklet records here")
    p.add_argument("--t-v", type=int)
    _add_assoc_flags(p)
    _add_refine_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("track", help="MOT tracklets or SOT-by-detection trajectory")
    p.add_argument("input", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--t-v", type=int)
    p.add_argument("--mode", choices=("mot", "sot-by-detection"), default="mot")
    p.add_argument("--u-sos", type=float, default=0.3)
    p.add_argument("--u-nms", type=float, default=0.5)
    _add_assoc_flags(p)
    _add_refine_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("synth", help="generate a synthetic detection stream")
    p.add_argument("spec", help="synth spec JSON")
    p.add_argument("-o", "--output", help="detections JSONL (default: stdout)")
    p.add_argument("--ledger", help="write the injected-defect ledger here")
    p.add_argument("--seed", type=int, help="override the spec's seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time NMS against SOS-NMS")
    p.add_argument("--candidates", type=int, default=1000)
    p.add_argument("--profile", choices=PROFILES, default="clustered")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1000)
    p.add_argument("--u-sos", type=float, default=0.3)
    p.add_argument("--u-nms", type=float, default=0.5)
    p.add_argument("--score-threshold", type=float, default=0.5)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plotdata", help="per-tracklet curves and spectra as CSV")
    p.add_argument("input", nargs="?")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--tracklets-input", action="store_true",
                   help="input holds tracklet records instead of detections")
    p.add_argument("--t-v", type=int)
    _add_assoc_flags(p)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        log.error("%s", exc)
        return 1
    except (InputInvariantError, SchemaError, ConsistencyError, SequencingError,
            ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
