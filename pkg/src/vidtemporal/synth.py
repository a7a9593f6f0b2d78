"""Synthetic detection streams with known defects, plus brute-force oracles.

Randomness comes from numpy's PCG64 generator seeded with
``PerturbationSpec.seed``; a given seed always yields the same stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import BBox, Detection, VideoSequence, iou
from .metrics import SpectrumPoint

MOTIONS = ("stationary", "constant-velocity", "sinusoidal")
MIN_SIZE = 1e-4
# Frames of clearance kept around ghosts so no tracklet can bridge to them.
GHOST_CLEARANCE = 12


@dataclass(frozen=True)
class TrackSpec:
    span: tuple[int, int]
    base_box: BBox
    motion: str = "stationary"
    velocity: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    amplitude: float = 0.0
    period: float = 2.0
    class_id: int = 0
    base_score: float = 0.9

    def __post_init__(self):
        if self.motion not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        first, last = self.span
        if first < 0 or last < first:
            raise ValueError(f"bad span {self.span}")
        if self.motion == "sinusoidal" and self.period < 2:
            raise ValueError("sinusoidal period must be >= 2 frames")
        if not 0.0 <= self.base_score <= 1.0:
            raise ValueError("base_score outside [0, 1]")

    def box_at(self, frame: int) -> BBox:
        """Noise-free box at ``frame``."""
        cx, cy, w, h = self.base_box.as_tuple()
        dt = frame - self.span[0]
        if self.motion == "constant-velocity":
            vx, vy, vw, vh = self.velocity
            cx, cy, w, h = cx + vx * dt, cy + vy * dt, w + vw * dt, h + vh * dt
        elif self.motion == "sinusoidal":
            phase = 2 * math.pi * dt / self.period
            cx += self.amplitude * math.sin(phase)
            cy += self.amplitude * math.cos(phase)
        return BBox(cx, cy, max(w, MIN_SIZE), max(h, MIN_SIZE))


@dataclass(frozen=True)
class PerturbationSpec:
    jitter_sigma_center: float = 0.0
    jitter_sigma_size: float = 0.0
    dropout_rate: float = 0.0
    burst_dropout: tuple[tuple[int, int], ...] = ()
    ghost_tracks: int = 0
    ghost_length: int = 2
    ghost_class: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ValueError("dropout_rate outside [0, 1]")
        if self.jitter_sigma_center < 0 or self.jitter_sigma_size < 0:
            raise ValueError("jitter sigmas must be non-negative")
        if self.ghost_tracks < 0 or self.ghost_length < 1:
            raise ValueError("ghost_tracks >= 0 and ghost_length >= 1 required")
        object.__setattr__(self, "burst_dropout",
                           tuple((int(s), int(n)) for s, n in self.burst_dropout))


@dataclass
class TrackLedger:
    index: int
    span: tuple[int, int]
    emitted_frames: list[int]
    dropped_frames: list[int]
    truth: dict[int, BBox] = field(repr=False, default_factory=dict)

    @property
    def interior_misses(self) -> int:
        if not self.emitted_frames:
            return 0
        lo, hi = self.emitted_frames[0], self.emitted_frames[-1]
        return sum(1 for f in self.dropped_frames if lo < f < hi)

    @property
    def longest_gap(self) -> int:
        f = self.emitted_frames
        return max((b - a - 1 for a, b in zip(f, f[1:])), default=0)


@dataclass
class DefectLedger:
    t_v: int
    jitter_sigma_center: float
    jitter_sigma_size: float
    tracks: list[TrackLedger]
    ghosts: list[tuple[int, BBox]]
    ghost_length: int

    @property
    def gap_count(self) -> int:
        return sum(t.interior_misses for t in self.tracks)

    @property
    def ghost_count(self) -> int:
        return len(self.ghosts)

    def to_dict(self) -> dict:
        return {
            "t_v": self.t_v,
            "jitter_sigma_center": self.jitter_sigma_center,
            "jitter_sigma_size": self.jitter_sigma_size,
            "gap_count": self.gap_count,
            "ghost_count": self.ghost_count,
            "ghost_length": self.ghost_length,
            "ghosts": [{"first_frame": f, "cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h}
                       for f, b in self.ghosts],
            "tracks": [{"index": t.index, "span": list(t.span),
                        "emitted_frames": len(t.emitted_frames),
                        "dropped_frames": t.dropped_frames,
                        "interior_misses": t.interior_misses,
                        "longest_gap": t.longest_gap} for t in self.tracks],
        }


def _truncated_normal(rng: np.random.Generator, sigma: float, size: int) -> np.ndarray:
    # Draw even for sigma == 0 so every level of a sweep sees the same noise.
    return sigma * np.clip(rng.standard_normal(size), -4.0, 4.0)


def _place_ghost(rng, start, length, t_v, real_boxes, ghosts, size=0.05, margin=0.05,
                 tries=500):
    lo = max(0, start - GHOST_CLEARANCE)
    hi = min(t_v, start + length + GHOST_CLEARANCE)
    # Inflated so jittered detections around the true boxes stay clear too.
    nearby = [BBox(b.cx, b.cy, b.w + 2 * margin, b.h + 2 * margin)
              for f in range(lo, hi) for b in real_boxes.get(f, ())]
    others = [b for _, b in ghosts]
    for _ in range(tries):
        cand = BBox(float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.05, 0.95)), size, size)
        if all(iou(cand, b) == 0.0 for b in nearby) and all(iou(cand, b) == 0.0 for b in others):
            return cand
    raise ValueError("could not place a ghost track clear of real tracks")


def generate(specs: Sequence[TrackSpec], perturb: PerturbationSpec = PerturbationSpec(),
             t_v: int = 100, video_id: str = "synth") -> tuple[VideoSequence, DefectLedger]:
    for s in specs:
        if s.span[1] >= t_v:
            raise ValueError(f"track span {s.span} exceeds video duration {t_v}")
    rng = np.random.default_rng(perturb.seed)
    forced = set()
    for start, length in perturb.burst_dropout:
        forced.update(range(start, start + length))

    dets: list[Detection] = []
    ledgers = []
    real_boxes: dict[int, list[BBox]] = {}
    for i, s in enumerate(specs):
        first, last = s.span
        n = last - first + 1
        jc = _truncated_normal(rng, perturb.jitter_sigma_center, 2 * n).reshape(n, 2)
        js = _truncated_normal(rng, perturb.jitter_sigma_size, 2 * n).reshape(n, 2)
        drops = rng.random(n) < perturb.dropout_rate
        led = TrackLedger(i, s.span, [], [])
        for j, f in enumerate(range(first, last + 1)):
            truth = s.box_at(f)
            led.truth[f] = truth
            real_boxes.setdefault(f, []).append(truth)
            if drops[j] or f in forced:
                led.dropped_frames.append(f)
                continue
            box = BBox(truth.cx + jc[j, 0], truth.cy + jc[j, 1],
                       max(truth.w + js[j, 0], MIN_SIZE), max(truth.h + js[j, 1], MIN_SIZE))
            dets.append(Detection(f, s.class_id, s.base_score, box))
            led.emitted_frames.append(f)
        ledgers.append(led)

    ghosts: list[tuple[int, BBox]] = []
    L = perturb.ghost_length
    for _ in range(perturb.ghost_tracks):
        start = int(rng.integers(0, max(1, t_v - L + 1)))
        box = _place_ghost(rng, start, L, t_v, real_boxes, ghosts)
        ghosts.append((start, box))
        for f in range(start, min(start + L, t_v)):
            dets.append(Detection(f, perturb.ghost_class, 0.8, box))

    seq = VideoSequence.from_detections(video_id, t_v, dets)
    ledger = DefectLedger(t_v, perturb.jitter_sigma_center, perturb.jitter_sigma_size,
                          ledgers, ghosts, L)
    return seq, ledger


# -- oracles -----------------------------------------------------------------

def oracle_dft(series: Sequence[float]) -> list[SpectrumPoint]:
    """Direct O(t^2) DFT magnitudes for k = 1..t//2, via an explicit DFT matrix."""
    x = np.asarray(series, dtype=np.float64)
    t = x.size
    k = np.arange(1, t // 2 + 1)
    # Reducing k*j modulo t keeps the twiddle angles small and accurate.
    phase = (np.outer(k, np.arange(t)) % t) * (2 * math.pi / t)
    re = np.cos(phase) @ x
    im = -np.sin(phase) @ x
    return [SpectrumPoint(float(q), float(a)) for q, a in zip(k / t, np.hypot(re, im))]


def _naive_nms(cands: list[tuple[int, Detection]], threshold: float):
    kept = []
    for c in sorted({d.class_id for _, d in cands}):
        pool = sorted([(i, d) for i, d in cands if d.class_id == c],
                      key=lambda x: (-x[1].score, x[0]))
        while pool:
            head = pool.pop(0)
            kept.append(head)
            pool = [p for p in pool if iou(head[1].box, p[1].box) <= threshold]
    return kept


def oracle_sos_nms(candidates: Sequence[Detection], prev_box: BBox, cfg) -> Optional[Detection]:
    """Filter by IoU with ``prev_box``, full NMS, then IoU argmax."""
    scored = [(i, d, iou(prev_box, d.box)) for i, d in enumerate(candidates)]
    survivors = [(i, d) for i, d, o in scored if o >= cfg.U_sos]
    if not survivors:
        return None
    kept = _naive_nms(survivors, cfg.U_nms)
    overlap = {i: o for i, _, o in scored}
    i, d = max(kept, key=lambda x: (overlap[x[0]], x[1].score, -x[0]))
    return d
