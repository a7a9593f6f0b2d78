"""IoU tracker that keeps lost tracklets alive so recall gaps become fragments."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import BBox, Detection, FrameDetections, VideoSequence, iou


class SequencingError(ValueError):
    """Frames were fed to a tracker out of order."""


@dataclass(frozen=True)
class AssociatorConfig:
    score_threshold: float = 0.5
    assoc_iou_threshold: float = 0.3
    S_lost_max: int = 10
    S_obj_max: int = 5

    def __post_init__(self):
        for name in ("score_threshold", "assoc_iou_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.S_lost_max < 1 or self.S_obj_max < 1:
            raise ValueError("S_lost_max and S_obj_max must be >= 1")


@dataclass(frozen=True)
class WindowEntry:
    """One matched object kept in a tracklet's recent window."""

    frame: int
    score: float
    box: BBox


@dataclass
class Tracklet:
    id: int
    class_id: int
    first_frame: int
    S_obj_max: int = 5
    last_matched_frame: int = -1
    S_lost: int = 0
    # None marks a frame on which the tracklet was not recalled.
    history: list[Optional[Detection]] = field(default_factory=list)
    window: deque = field(default=None)

    def __post_init__(self):
        if self.window is None:
            self.window = deque(maxlen=self.S_obj_max)

    @property
    def D(self) -> list[WindowEntry]:
        return list(self.window)

    @property
    def t_n(self) -> int:
        return len(self.history)

    @property
    def om(self) -> int:
        return sum(1 for h in self.history if h is None)

    @property
    def last_detection(self) -> Detection:
        return self.history[-1]

    @property
    def last_box(self) -> BBox:
        return self.window[-1].box

    def S_dur(self, frame: int) -> int:
        """Frames elapsed since the first match, gaps included (0 at birth)."""
        return frame - self.first_frame

    def add(self, det: Detection) -> None:
        if self.history:
            gap = det.frame - self.last_matched_frame - 1
            self.history.extend([None] * gap)
        self.history.append(det)
        self.last_matched_frame = det.frame
        self.window.append(WindowEntry(det.frame, det.score, det.box))
        self.S_lost = 0

    def matched_frames(self) -> list[int]:
        return [d.frame for d in self.history if d is not None]


@dataclass
class StepRecord:
    frame: int
    matches: list[tuple[int, Detection]]
    spawned: list[int]
    lost: list[int]
    died: list[int]


def _canonical(dets):
    # Order-independent tie-breaking: rank detections by content, not arrival.
    return sorted(dets, key=lambda d: (-d.score, d.class_id, d.box.cx, d.box.cy,
                                        d.box.w, d.box.h))


def greedy_match(tracklets: list[Tracklet], dets: list[Detection],
                 threshold: float) -> list[tuple[int, int]]:
    """Greedy global-max IoU pairing within equal class.

    Returns ``(tracklet_index, detection_index)`` pairs. Ties break on
    detection score, then detection index, then tracklet index.
    """
    pairs = []
    for ti, t in enumerate(tracklets):
        last = t.last_box
        for di, d in enumerate(dets):
            if d.class_id != t.class_id:
                continue
            o = iou(last, d.box)
            if o >= threshold:
                pairs.append((-o, -d.score, di, ti))
    pairs.sort()
    used_t, used_d, out = set(), set(), []
    for _, _, di, ti in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        out.append((ti, di))
    return out


class Associator:
    """Frame-by-frame tracker state.

    The first frame fed may have any index; later frames must follow by one.
    """

    def __init__(self, cfg: AssociatorConfig = AssociatorConfig(), next_id: int = 0):
        self.cfg = cfg
        self.active: list[Tracklet] = []
        self.finished: list[Tracklet] = []
        self.next_id = next_id
        self.frame: Optional[int] = None

    def step(self, frame: FrameDetections) -> StepRecord:
        if self.frame is not None and frame.frame != self.frame + 1:
            raise SequencingError(
                f"expected frame {self.frame + 1}, got {frame.frame}")
        self.frame = frame.frame
        cfg = self.cfg
        dets = _canonical(d for d in frame.detections if d.score >= cfg.score_threshold)

        pairs = greedy_match(self.active, dets, cfg.assoc_iou_threshold)
        matched_t = {ti for ti, _ in pairs}
        matched_d = {di for _, di in pairs}
        matches = []
        for ti, di in pairs:
            self.active[ti].add(dets[di])
            matches.append((self.active[ti].id, dets[di]))

        lost, died, survivors = [], [], []
        for ti, t in enumerate(self.active):
            if ti not in matched_t:
                t.S_lost += 1
                if t.S_lost > cfg.S_lost_max:
                    died.append(t.id)
                    self.finished.append(t)
                    continue
                lost.append(t.id)
            survivors.append(t)
        self.active = survivors

        spawned = []
        for di, d in enumerate(dets):
            if di in matched_d:
                continue
            t = Tracklet(self.next_id, d.class_id, d.frame, S_obj_max=cfg.S_obj_max)
            self.next_id += 1
            t.add(d)
            self.active.append(t)
            spawned.append(t.id)
        matches.sort(key=lambda m: m[0])
        return StepRecord(frame.frame, matches, spawned, lost, died)

    def finalize(self) -> list[Tracklet]:
        """Close every tracklet; trailing losses are never part of history."""
        out = self.finished + self.active
        self.finished, self.active = [], []
        return sorted(out, key=lambda t: t.id)


def step(state: Associator, frame: FrameDetections) -> StepRecord:
    return state.step(frame)


def run(seq: VideoSequence, cfg: AssociatorConfig = AssociatorConfig()) -> list[Tracklet]:
    tracker = Associator(cfg)
    for fr in seq.frames:
        tracker.step(fr)
    return tracker.finalize()
