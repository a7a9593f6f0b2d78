"""Box geometry, detection records, IoU and per-class greedy NMS.

Boxes are center-format ``(cx, cy, w, h)`` normalized by frame size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class BBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width and height must be positive: {vals}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    frame: int
    class_id: int
    score: float
    box: BBox

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"negative frame index {self.frame}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class FrameDetections:
    frame: int
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        for d in self.detections:
            if d.frame != self.frame:
                raise ValueError(
                    f"detection at frame {d.frame} placed in frame {self.frame}")


@dataclass(frozen=True)
class VideoSequence:
    """All detections of one video, one entry per frame ``0..t_v-1``."""

    video_id: str
    t_v: int
    frames: tuple[FrameDetections, ...] = field(default=())

    def __post_init__(self):
        if self.t_v < 1:
            raise ValueError("video duration must be at least one frame")
        frames = tuple(self.frames)
        if len(frames) != self.t_v:
            raise ValueError(
                f"expected {self.t_v} frames, got {len(frames)}")
        for i, fr in enumerate(frames):
            if fr.frame != i:
                raise ValueError(f"frame slot {i} holds frame {fr.frame}")
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_detections(cls, video_id: str, t_v: int,
                        detections: Iterable[Detection]) -> "VideoSequence":
        buckets: list[list[Detection]] = [[] for _ in range(t_v)]
        for d in detections:
            if d.frame >= t_v:
                raise ValueError(
                    f"detection at frame {d.frame} beyond duration {t_v}")
            buckets[d.frame].append(d)
        return cls(video_id, t_v,
                   tuple(FrameDetections(i, tuple(b)) for i, b in enumerate(buckets)))

    def detections(self) -> list[Detection]:
        return [d for fr in self.frames for d in fr.detections]


def iou(a: BBox, b: BBox) -> float:
    # Operation order must stay in lockstep with iou_one_to_many so that
    # scalar and vectorized paths return bit-identical values.
    ax1 = a.cx - a.w / 2
    ax2 = a.cx + a.w / 2
    ay1 = a.cy - a.h / 2
    ay2 = a.cy + a.h / 2
    bx1 = b.cx - b.w / 2
    bx2 = b.cx + b.w / 2
    by1 = b.cy - b.h / 2
    by2 = b.cy + b.h / 2
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def boxes_to_corners(boxes: np.ndarray) -> np.ndarray:
    """``(n, 4)`` center boxes to ``(n, 4)`` corners ``x1, y1, x2, y2``."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    half_w = boxes[:, 2] / 2
    half_h = boxes[:, 3] / 2
    return np.stack([boxes[:, 0] - half_w, boxes[:, 1] - half_h,
                     boxes[:, 0] + half_w, boxes[:, 1] + half_h], axis=1)


def iou_one_to_many(corner: np.ndarray, corners: np.ndarray) -> np.ndarray:
    ax1, ay1, ax2, ay2 = corner
    iw = np.maximum(0.0, np.minimum(ax2, corners[:, 2]) - np.maximum(ax1, corners[:, 0]))
    ih = np.maximum(0.0, np.minimum(ay2, corners[:, 3]) - np.maximum(ay1, corners[:, 1]))
    inter = iw * ih
    union = ((ax2 - ax1) * (ay2 - ay1)
             + (corners[:, 2] - corners[:, 0]) * (corners[:, 3] - corners[:, 1])
             - inter)
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def greedy_nms(corners: np.ndarray, scores: np.ndarray, threshold: float) -> np.ndarray:
    """Class-agnostic greedy NMS; returns kept indices in descending score.

    Score ties go to the lower index.
    """
    n = len(scores)
    if n == 0:
        return np.empty(0, dtype=np.intp)
    order = np.lexsort((np.arange(n), -scores))
    keep = []
    while order.size:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        if not rest.size:
            break
        overlap = iou_one_to_many(corners[i], corners[rest])
        order = rest[overlap <= threshold]
    return np.asarray(keep, dtype=np.intp)


def nms_indices(corners: np.ndarray, scores: np.ndarray, classes: np.ndarray,
                score_threshold: float, nms_threshold: float) -> np.ndarray:
    """Per-class NMS over array inputs; indices sorted by descending score."""
    scores = np.asarray(scores, dtype=np.float64)
    classes = np.asarray(classes)
    passing = np.flatnonzero(scores >= score_threshold)
    if not passing.size:
        return passing
    kept = []
    for c in np.unique(classes[passing]):
        idx = passing[classes[passing] == c]
        kept.append(idx[greedy_nms(corners[idx], scores[idx], nms_threshold)])
    kept = np.concatenate(kept)
    return kept[np.lexsort((kept, -scores[kept]))]


def detections_to_arrays(dets: Sequence[Detection]):
    boxes = np.array([d.box.as_tuple() for d in dets], dtype=np.float64).reshape(-1, 4)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    classes = np.array([d.class_id for d in dets], dtype=np.int64)
    return boxes, scores, classes


def nms(candidates: Sequence[Detection], score_threshold: float = 0.5,
        nms_threshold: float = 0.5) -> list[Detection]:
    """Score-filter then suppress overlaps independently per ``class_id``."""
    if not candidates:
        return []
    frames = {d.frame for d in candidates}
    if len(frames) > 1:
        raise ValueError(f"nms candidates span several frames: {sorted(frames)}")
    boxes, scores, classes = detections_to_arrays(candidates)
    keep = nms_indices(boxes_to_corners(boxes), scores, classes,
                       score_threshold, nms_threshold)
    return [candidates[i] for i in keep]
