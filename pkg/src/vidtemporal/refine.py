"""Online tracklet refinement (OTR).

Three steps run on top of the associator, frame by frame:

* short tracklet suppression: nothing of a tracklet is emitted before it is
  matched at a frame where its duration exceeds ``S_SDE``;
* fragment filling: a reliable tracklet that misses a frame emits a box
  extrapolated at the window's mean velocity;
* temporal location fusion: matched boxes are replaced by a geometric-weighted
  average over the recent window, newest box weighted most.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .associate import Associator, AssociatorConfig, Tracklet, WindowEntry
from .core import BBox, Detection, FrameDetections, VideoSequence

MIN_SIZE = 1e-4
ONLINE_DROP = "online-drop"
OFFLINE_RETROEMIT = "offline-retroemit"
EMIT_MODES = (ONLINE_DROP, OFFLINE_RETROEMIT)


@dataclass(frozen=True)
class FusionWeights:
    omega: float
    S_obj: int
    weights: tuple[float, ...]


@dataclass(frozen=True)
class RefinerConfig:
    S_SDE: int = 10
    omega: float = 10.0
    emit_mode: str = ONLINE_DROP

    def __post_init__(self):
        if self.S_SDE < 1:
            raise ValueError("S_SDE must be >= 1")
        if self.omega < 1:
            raise ValueError("omega must be >= 1")
        if self.emit_mode not in EMIT_MODES:
            raise ValueError(f"emit_mode must be one of {EMIT_MODES}")


def fusion_weights(omega: float = 10.0, S_obj: int = 5) -> FusionWeights:
    """Normalized ``omega**l`` for ``l`` stepping evenly from 1 down to 0.1."""
    if omega < 1 or S_obj < 1:
        raise ValueError("need omega >= 1 and S_obj >= 1")
    exponents = np.linspace(1.0, 0.1, S_obj) if S_obj > 1 else np.array([1.0])
    raw = np.power(float(omega), exponents)
    w = raw / raw.sum()
    return FusionWeights(float(omega), S_obj, tuple(float(x) for x in w))


def _entries(window) -> list[tuple[int, BBox]]:
    # Accept WindowEntry records or bare boxes (taken as consecutive frames).
    out = []
    for i, e in enumerate(window):
        if isinstance(e, BBox):
            out.append((i, e))
        else:
            out.append((e.frame, e.box))
    return out


def fill_fragment(window: Sequence[WindowEntry] | Sequence[BBox],
                  frame: int | None = None) -> BBox:
    """Predict the box at ``frame`` under constant velocity.

    Velocity is the mean frame-to-frame change across the window, i.e.
    ``(newest - oldest) / frames_between``; ``frame`` defaults to one past
    the newest entry.
    """
    entries = _entries(window)
    if not entries:
        raise ValueError("cannot extrapolate from an empty window")
    f_last, last = entries[-1]
    if frame is None:
        frame = f_last + 1
    if len(entries) < 2:
        return last
    f_first, first = entries[0]
    steps = frame - f_last
    span = f_last - f_first
    p = []
    for a, b in zip(first.as_tuple(), last.as_tuple()):
        p.append(b + (b - a) / span * steps)
    return BBox(p[0], p[1], max(p[2], MIN_SIZE), max(p[3], MIN_SIZE))


def fuse_location(window: Sequence[WindowEntry] | Sequence[BBox],
                  weights: FusionWeights) -> BBox:
    boxes = [b for _, b in _entries(window)]
    if not boxes:
        raise ValueError("cannot fuse an empty window")
    n = min(len(boxes), len(weights.weights))
    w = np.asarray(weights.weights[:n])
    w = w / w.sum()
    recent = np.array([b.as_tuple() for b in boxes[::-1][:n]])
    # Anchored on the newest box so identical windows return it bit-exactly.
    anchor = recent[0]
    fused = anchor + w @ (recent - anchor)
    return BBox(*(float(v) for v in fused))


def is_reliable(tracklet: Tracklet, frame: int, cfg: RefinerConfig) -> bool:
    return tracklet.S_dur(frame) > cfg.S_SDE


@dataclass(frozen=True)
class EmittedBox:
    track_id: int
    detection: Detection
    interpolated: bool = False

    @property
    def frame(self) -> int:
        return self.detection.frame


class Refiner:
    """Causal OTR over one stream; ``step`` returns boxes released now.

    In offline-retroemit mode the release may include withheld boxes from
    earlier frames of a tracklet that has just become reliable.
    """

    def __init__(self, assoc_cfg: AssociatorConfig = AssociatorConfig(),
                 cfg: RefinerConfig = RefinerConfig(), next_id: int = 0):
        self.assoc = Associator(assoc_cfg, next_id=next_id)
        self.cfg = cfg
        self.weights = fusion_weights(cfg.omega, assoc_cfg.S_obj_max)
        self.reliable: set[int] = set()
        self.pending: dict[int, list[EmittedBox]] = {}
        self.current: dict[int, EmittedBox] = {}

    def suppress_short(self, tracklet: Tracklet, frame: int, matched: bool) -> bool:
        """True when the tracklet's box at ``frame`` may be emitted.

        Reliability latches on the first matched frame past ``S_SDE``.
        """
        if tracklet.id in self.reliable:
            return True
        if matched and is_reliable(tracklet, frame, self.cfg):
            self.reliable.add(tracklet.id)
            return True
        return False

    def step(self, frame: FrameDetections) -> list[EmittedBox]:
        rec = self.assoc.step(frame)
        f = frame.frame
        matched = {tid: det for tid, det in rec.matches}
        for t in self.assoc.active:
            if t.id in rec.spawned:
                matched[t.id] = t.last_detection
        for tid in rec.died:
            self.pending.pop(tid, None)
            self.reliable.discard(tid)
        self.current = {}
        released = []
        for t in self.assoc.active:
            det = matched.get(t.id)
            if det is not None:
                box = fuse_location(t.window, self.weights)
                out = EmittedBox(t.id, Detection(f, t.class_id, det.score, box))
            else:
                box = fill_fragment(t.window, f)
                out = EmittedBox(t.id, Detection(f, t.class_id, t.window[-1].score, box),
                                 interpolated=True)
            self.current[t.id] = out
            if self.suppress_short(t, f, det is not None):
                released.extend(self.pending.pop(t.id, ()))
                released.append(out)
            elif self.cfg.emit_mode == OFFLINE_RETROEMIT:
                self.pending.setdefault(t.id, []).append(out)
        return released

    def reliable_tracklets(self) -> list[Tracklet]:
        return [t for t in self.assoc.active if t.id in self.reliable]


def suppress_short(tracklet: Tracklet, frame: int, cfg: RefinerConfig) -> bool:
    """Stateless form of the emit decision for a matched frame."""
    return is_reliable(tracklet, frame, cfg)


@dataclass
class RefineResult:
    sequence: VideoSequence
    records: list[EmittedBox] = field(default_factory=list)


def refine_stream(seq: VideoSequence, assoc_cfg: AssociatorConfig = AssociatorConfig(),
                  cfg: RefinerConfig = RefinerConfig()) -> RefineResult:
    refiner = Refiner(assoc_cfg, cfg)
    records = []
    for fr in seq.frames:
        records.extend(refiner.step(fr))
    records.sort(key=lambda r: (r.frame, r.track_id))
    refined = VideoSequence.from_detections(seq.video_id, seq.t_v,
                                            (r.detection for r in records))
    return RefineResult(refined, records)
