"""JSON-Lines wire formats for detections and tracklets.

A detection line::

    {"video_id": "v0", "frame": 3, "class_id": 1, "score": 0.8,
     "cx": 0.5, "cy": 0.4, "w": 0.1, "h": 0.2}

An optional header line ``{"video_id": "v0", "t_v": 120}`` (no ``frame``)
declares the video duration; without it the duration is the last frame
seen plus one. Unknown fields are ignored. Tracklet lines add
``track_id`` and ``interpolated``.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Iterator

from .core import BBox, Detection, VideoSequence


class ParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str = "<input>"):
        self.lineno = lineno
        where = f"{source}:{lineno}: " if lineno is not None else f"{source}: "
        super().__init__(where + message)


class InputInvariantError(ValueError):
    """Parsed input that violates a data invariant (bad score, box, frame)."""


@dataclass(frozen=True)
class DetectionRecord:
    video_id: str
    frame: int
    class_id: int
    score: float
    cx: float
    cy: float
    w: float
    h: float

    FIELDS = ("video_id", "frame", "class_id", "score", "cx", "cy", "w", "h")

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionRecord":
        return cls(**_typed(d, cls.FIELDS))

    @classmethod
    def from_detection(cls, video_id: str, det: Detection) -> "DetectionRecord":
        b = det.box
        return cls(video_id, det.frame, det.class_id, det.score, b.cx, b.cy, b.w, b.h)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}

    def to_detection(self) -> Detection:
        return Detection(self.frame, self.class_id, self.score,
                         BBox(self.cx, self.cy, self.w, self.h))


@dataclass(frozen=True)
class TrackletRecord:
    video_id: str
    track_id: int
    frame: int
    class_id: int
    score: float
    cx: float
    cy: float
    w: float
    h: float
    interpolated: bool = False

    FIELDS = ("video_id", "track_id", "frame", "class_id", "score",
              "cx", "cy", "w", "h", "interpolated")

    @classmethod
    def from_dict(cls, d: dict) -> "TrackletRecord":
        d = dict(d)
        d.setdefault("interpolated", False)
        return cls(**_typed(d, cls.FIELDS))

    @classmethod
    def from_detection(cls, video_id: str, track_id: int, det: Detection,
                       interpolated: bool = False) -> "TrackletRecord":
        b = det.box
        return cls(video_id, track_id, det.frame, det.class_id, det.score,
                   b.cx, b.cy, b.w, b.h, interpolated)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}

    def to_detection(self) -> Detection:
        return Detection(self.frame, self.class_id, self.score,
                         BBox(self.cx, self.cy, self.w, self.h))


_TYPES = {"video_id": str, "frame": int, "track_id": int, "class_id": int,
          "score": float, "cx": float, "cy": float, "w": float, "h": float,
          "interpolated": bool, "t_v": int}


def _typed(d: dict, fields) -> dict:
    out = {}
    for k in fields:
        if k not in d:
            raise KeyError(f"missing field {k!r}")
        v = d[k]
        want = _TYPES[k]
        if want is str:
            v = str(v)
        elif want is bool:
            if not isinstance(v, bool):
                raise TypeError(f"field {k!r} must be a boolean")
        elif want is int:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
                raise TypeError(f"field {k!r} must be an integer")
            v = int(v)
        else:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise TypeError(f"field {k!r} must be a number")
            v = float(v)
        out[k] = v
    return out


@contextmanager
def open_input(path: str | None) -> Iterator[IO[str]]:
    if path in (None, "-"):
        yield sys.stdin
    else:
        with open(path, encoding="utf-8") as fh:
            yield fh


def iter_json_lines(fh: IO[str], source: str = "<input>") -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", lineno, source) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno, source)
        yield lineno, obj


def _grouped(fh, source, record_cls):
    records: dict[str, list] = {}
    durations: dict[str, int] = {}
    for lineno, obj in iter_json_lines(fh, source):
        if "frame" not in obj and "t_v" in obj and "video_id" in obj:
            try:
                durations[str(obj["video_id"])] = _typed(obj, ("t_v",))["t_v"]
            except (KeyError, TypeError) as exc:
                raise ParseError(str(exc), lineno, source) from None
            records.setdefault(str(obj["video_id"]), [])
            continue
        try:
            rec = record_cls.from_dict(obj)
        except (KeyError, TypeError) as exc:
            raise ParseError(str(exc.args[0]), lineno, source) from None
        try:
            det = rec.to_detection()
        except ValueError as exc:
            raise InputInvariantError(f"{source}:{lineno}: {exc}") from None
        records.setdefault(rec.video_id, []).append((rec, det))
    return records, durations


def _duration(video_id, items, durations, t_v_override):
    last = max((det.frame for _, det in items), default=-1)
    t_v = t_v_override or durations.get(video_id) or last + 1
    if last >= t_v:
        raise InputInvariantError(
            f"video {video_id!r}: frame {last} beyond declared duration {t_v}")
    return max(t_v, 1)


def load_detections(fh: IO[str], source: str = "<input>",
                    t_v: int | None = None) -> dict[str, VideoSequence]:
    """Parse a detection stream into per-video sequences (frame-sorted)."""
    records, durations = _grouped(fh, source, DetectionRecord)
    out = {}
    for vid in sorted(records):
        items = records[vid]
        n = _duration(vid, items, durations, t_v)
        out[vid] = VideoSequence.from_detections(vid, n, (d for _, d in items))
    return out


def load_tracklet_records(fh: IO[str], source: str = "<input>",
                          t_v: int | None = None):
    """Parse tracklet lines; returns ``{video_id: (t_v, [TrackletRecord])}``."""
    records, durations = _grouped(fh, source, TrackletRecord)
    out = {}
    for vid in sorted(records):
        items = records[vid]
        seen = set()
        for rec, _ in items:
            key = (rec.track_id, rec.frame)
            if key in seen:
                raise InputInvariantError(
                    f"video {vid!r}: duplicate track {rec.track_id} at frame {rec.frame}")
            seen.add(key)
        n = _duration(vid, items, durations, t_v)
        out[vid] = (n, [r for r, _ in items])
    return out


def header_line(video_id: str, t_v: int) -> dict:
    return {"video_id": video_id, "t_v": t_v}


def sequence_lines(seq: VideoSequence) -> list[dict]:
    lines = [header_line(seq.video_id, seq.t_v)]
    lines.extend(DetectionRecord.from_detection(seq.video_id, d).to_dict()
                 for d in seq.detections())
    return lines


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, separators=(", ", ": "))


@contextmanager
def atomic_writer(path: str | None) -> Iterator[IO[str]]:
    """Write to a temp file next to ``path`` and rename on success."""
    if path in (None, "-"):
        yield sys.stdout
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: str | None, rows: Iterable[dict]) -> None:
    with atomic_writer(path) as fh:
        for row in rows:
            fh.write(dumps_line(row) + "\n")


def write_json(path: str | None, obj) -> None:
    with atomic_writer(path) as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
