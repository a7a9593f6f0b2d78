"""Small-overlap suppression and SOT-by-detection.

The tracker starts in MOT mode (NMS, association, OTR). As soon as OTR
declares a tracklet reliable, the highest-scoring one is handed to the SOT
branch, which picks one box per frame with SOS-NMS around the previous
tracked box. An empty SOS survivor set sends the tracker back to MOT with
a fresh associator.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .associate import AssociatorConfig, Tracklet
from .core import (BBox, Detection, FrameDetections, boxes_to_corners,
                   detections_to_arrays, iou_one_to_many, nms, nms_indices)
from .refine import EmittedBox, Refiner, RefinerConfig, fuse_location, fusion_weights

MOT = "MOT"
SOT = "SOT"


@dataclass(frozen=True)
class SotConfig:
    U_sos: float = 0.3
    U_nms: float = 0.5
    score_threshold: float = 0.5

    def __post_init__(self):
        for name in ("U_sos", "U_nms", "score_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


def sos_nms_index(prev_corner: np.ndarray, corners: np.ndarray, scores: np.ndarray,
                  classes: np.ndarray, U_sos: float, U_nms: float) -> Optional[int]:
    """Array core of SOS-NMS. Returns the chosen index or None on failure."""
    overlap = iou_one_to_many(prev_corner, corners)
    survivors = np.flatnonzero(overlap >= U_sos)
    if not survivors.size:
        return None
    kept = survivors[nms_indices(corners[survivors], scores[survivors],
                                 classes[survivors], 0.0, U_nms)]
    # Highest carried IoU; ties go to higher score, then lower index.
    best = np.lexsort((kept, -scores[kept], -overlap[kept]))[0]
    return int(kept[best])


def sos_nms(candidates: Sequence[Detection], prev_box: BBox,
            cfg: SotConfig = SotConfig()) -> Optional[Detection]:
    """Pick the single tracked box, or None to signal tracking failure.

    ``candidates`` are expected to have passed the confidence threshold.
    Scores are returned untouched.
    """
    if not candidates:
        return None
    boxes, scores, classes = detections_to_arrays(candidates)
    prev = boxes_to_corners(np.array([prev_box.as_tuple()]))[0]
    i = sos_nms_index(prev, boxes_to_corners(boxes), scores, classes,
                      cfg.U_sos, cfg.U_nms)
    return None if i is None else candidates[i]


@dataclass
class FrameOutput:
    frame: int
    mode: str
    boxes: list[EmittedBox] = field(default_factory=list)
    tracked: Optional[EmittedBox] = None
    switch: Optional[tuple[str, str]] = None


@dataclass
class TrackerState:
    mode: str = MOT
    refiner: Optional[Refiner] = None
    tracklet: Optional[Tracklet] = None
    prev_box: Optional[BBox] = None
    next_id: int = 0


class SotByDetection:
    def __init__(self, sot_cfg: SotConfig = SotConfig(),
                 assoc_cfg: AssociatorConfig = AssociatorConfig(),
                 refiner_cfg: RefinerConfig = RefinerConfig()):
        self.sot_cfg = sot_cfg
        self.assoc_cfg = assoc_cfg
        self.refiner_cfg = refiner_cfg
        self.weights = fusion_weights(refiner_cfg.omega, assoc_cfg.S_obj_max)
        self.state = TrackerState()
        self.state.refiner = self._fresh_refiner()
        self.events: list[tuple[int, str, str]] = []

    def _fresh_refiner(self) -> Refiner:
        return Refiner(self.assoc_cfg, self.refiner_cfg, next_id=self.state.next_id)

    def step(self, frame: FrameDetections) -> FrameOutput:
        if self.state.mode == MOT:
            return self._mot_step(frame)
        return self._sot_step(frame)

    def _mot_step(self, frame: FrameDetections) -> FrameOutput:
        st = self.state
        kept = nms(list(frame.detections), self.sot_cfg.score_threshold, self.sot_cfg.U_nms)
        released = st.refiner.step(FrameDetections(frame.frame, tuple(kept)))
        st.next_id = st.refiner.assoc.next_id
        out = FrameOutput(frame.frame, MOT, boxes=released)
        # A frame is labelled with the mode in force after it is processed.
        reliable = st.refiner.reliable_tracklets()
        if reliable:
            # Highest latest score; earlier-born identity wins ties.
            chosen = min(reliable, key=lambda t: (-t.window[-1].score, t.id))
            st.mode = SOT
            st.tracklet = chosen
            st.prev_box = st.refiner.current[chosen.id].detection.box
            st.refiner = None
            out.mode = SOT
            out.switch = (MOT, SOT)
            self.events.append((frame.frame, MOT, SOT))
        return out

    def _sot_step(self, frame: FrameDetections) -> FrameOutput:
        st = self.state
        t = st.tracklet
        cands = [d for d in frame.detections
                 if d.score >= self.sot_cfg.score_threshold and d.class_id == t.class_id]
        hit = sos_nms(cands, st.prev_box, self.sot_cfg)
        if hit is None:
            st.mode = MOT
            st.tracklet = None
            st.prev_box = None
            st.refiner = self._fresh_refiner()
            self.events.append((frame.frame, SOT, MOT))
            # The restarted MOT branch already sees this frame's detections.
            out = self._mot_step(frame)
            out.switch = (SOT, MOT)
            return out
        t.add(hit)
        box = fuse_location(t.window, self.weights)
        emitted = EmittedBox(t.id, Detection(frame.frame, t.class_id, hit.score, box))
        st.prev_box = box
        return FrameOutput(frame.frame, SOT, boxes=[emitted], tracked=emitted)


def track_step(state: SotByDetection, frame: FrameDetections) -> FrameOutput:
    return state.step(frame)


def run_sot_by_detection(frames: Sequence[FrameDetections], sot_cfg: SotConfig = SotConfig(),
                         assoc_cfg: AssociatorConfig = AssociatorConfig(),
                         refiner_cfg: RefinerConfig = RefinerConfig()):
    tracker = SotByDetection(sot_cfg, assoc_cfg, refiner_cfg)
    outputs = [tracker.step(fr) for fr in frames]
    return outputs, tracker.events


# -- candidate-selection benchmark -------------------------------------------

PROFILES = ("clustered", "uniform", "far")


def synthetic_candidates(n: int, profile: str, seed: int = 0, clusters: int = 20):
    """Reproducible candidate set plus the previous tracked box.

    ``clustered`` mimics raw detector output: boxes scattered around a few
    object locations, one of which is the tracked one.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")
    rng = np.random.default_rng(seed)
    if profile == "clustered":
        k = max(1, min(clusters, n))
        centers = rng.uniform(0.1, 0.9, size=(k, 2))
        sizes = rng.uniform(0.05, 0.15, size=(k, 2))
        which = rng.integers(0, k, size=n)
        cxcy = centers[which] + rng.normal(0.0, 0.01, size=(n, 2))
        wh = sizes[which] * rng.uniform(0.85, 1.15, size=(n, 2))
        prev = np.concatenate([centers[0], sizes[0]])
    elif profile == "uniform":
        cxcy = rng.uniform(0.0, 1.0, size=(n, 2))
        wh = rng.uniform(0.05, 0.2, size=(n, 2))
        prev = np.array([0.5, 0.5, 0.1, 0.1])
    else:
        cxcy = rng.uniform(0.0, 0.6, size=(n, 2))
        wh = rng.uniform(0.02, 0.08, size=(n, 2))
        prev = np.array([0.9, 0.9, 0.05, 0.05])
    boxes = np.concatenate([cxcy, wh], axis=1)
    scores = rng.uniform(0.5, 1.0, size=n)
    return boxes, scores, prev


@dataclass
class BenchRecord:
    candidates: int
    profile: str
    repeats: int
    nms_ms_per_frame: float
    sos_nms_ms_per_frame: float
    survivors_after_sos: int

    @property
    def ratio(self) -> float:
        if self.nms_ms_per_frame == 0:
            return float("nan")
        return self.sos_nms_ms_per_frame / self.nms_ms_per_frame


def bench_candidate_selection(candidate_count: int = 1000, overlap_profile: str = "clustered",
                              cfg: SotConfig = SotConfig(), seed: int = 0,
                              repeats: int = 1000) -> BenchRecord:
    """Median wall-clock per frame of plain NMS vs SOS-NMS on the same inputs."""
    boxes, scores, prev = synthetic_candidates(candidate_count, overlap_profile, seed)
    classes = np.zeros(candidate_count, dtype=np.int64)
    corners = boxes_to_corners(boxes)
    prev_corner = boxes_to_corners(prev[None])[0]
    survivors = int((iou_one_to_many(prev_corner, corners) >= cfg.U_sos).sum())

    nms_times, sos_times = [], []
    clock = time.perf_counter
    for _ in range(repeats):
        t0 = clock()
        nms_indices(corners, scores, classes, cfg.score_threshold, cfg.U_nms)
        t1 = clock()
        sos_nms_index(prev_corner, corners, scores, classes, cfg.U_sos, cfg.U_nms)
        t2 = clock()
        nms_times.append(t1 - t0)
        sos_times.append(t2 - t1)
    return BenchRecord(candidate_count, overlap_profile, repeats,
                       1e3 * statistics.median(nms_times),
                       1e3 * statistics.median(sos_times), survivors)
