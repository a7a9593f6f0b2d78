"""Label-free recall-continuity and localization-stability metrics.

Continuity: ESDE and SDE (time spent in short tracklets), TFE and FTR
(missing frames inside tracklets), each passed through ``log_contrast``
and summed into RCE.

Stability: CJE and SJE weight every non-DC DFT amplitude of the center
and size channels by its frequency, scaled by 1e3 per tracklet frame.
The DFT is unnormalized and frequencies are in cycles per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .associate import Tracklet

S_ESDE = 3
S_SDE = 10
CENTER_CHANNELS = ("cx", "cy")
SIZE_CHANNELS = ("w", "h")
CHANNELS = CENTER_CHANNELS + SIZE_CHANNELS
CONTINUITY_KEYS = ("ESDE", "SDE", "TFE", "FTR")


class ConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumPoint:
    q: float
    A: float


def log_contrast(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0 or math.isnan(alpha):
        raise ValueError(f"log_contrast expects a fraction in [0, 1], got {alpha}")
    if alpha == 1.0:
        return 1.0
    return math.log1p(99.0 * alpha) / math.log(100.0)


def short_duration_error(durations: Iterable[int], t_v: int, S: int) -> float:
    """Share of the video covered by tracklets shorter than ``S`` frames."""
    if t_v < 1:
        raise ValueError("t_v must be positive")
    return sum(t for t in durations if t < S) / t_v


def fragment_errors(tracklets: Sequence[Tracklet]) -> tuple[float, float]:
    if not tracklets:
        return 0.0, 0.0
    misses = [t.om for t in tracklets]
    total = sum(t.t_n for t in tracklets)
    tfe = sum(misses) / total
    ftr = sum(1 for m in misses if m > 0) / len(tracklets)
    return tfe, ftr


def _ac_amplitudes(x: np.ndarray) -> np.ndarray:
    # Non-DC bins ignore a constant offset; removing it keeps flat series at exact 0.
    return np.abs(np.fft.fft(x - x[0]))


def dft_amplitudes(series: Sequence[float]) -> list[SpectrumPoint]:
    x = np.asarray(series, dtype=np.float64)
    t = x.size
    if t < 2:
        return []
    amp = _ac_amplitudes(x)
    return [SpectrumPoint(k / t, float(amp[k])) for k in range(1, t // 2 + 1)]


def weighted_spectrum_sum(series: Sequence[float]) -> float:
    """``sum_k q_k * A_k`` over the non-DC half spectrum."""
    x = np.asarray(series, dtype=np.float64)
    t = x.size
    if t < 2:
        return 0.0
    k = np.arange(1, t // 2 + 1)
    amp = _ac_amplitudes(x)[k]
    return float(np.dot(k / t, amp))


def channel_series(tracklet: Tracklet) -> dict[str, np.ndarray]:
    """Per-channel series over the tracklet span.

    Miss frames are linearly interpolated between the matched frames around them.
    """
    hist = tracklet.history
    known = np.array([i for i, d in enumerate(hist) if d is not None])
    vals = np.array([d.box.as_tuple() for d in hist if d is not None]).reshape(-1, 4)
    pos = np.arange(len(hist))
    return {ch: np.interp(pos, known, vals[:, c]) for c, ch in enumerate(CHANNELS)}


def jitter_sums(tracklet: Tracklet) -> tuple[float, float]:
    series = channel_series(tracklet)
    center = sum(weighted_spectrum_sum(series[c]) for c in CENTER_CHANNELS)
    size = sum(weighted_spectrum_sum(series[c]) for c in SIZE_CHANNELS)
    return center, size


def jitter_errors(tracklets: Sequence[Tracklet]) -> tuple[float, float]:
    if not tracklets:
        return 0.0, 0.0
    total = sum(t.t_n for t in tracklets)
    center = size = 0.0
    for t in tracklets:
        c, s = jitter_sums(t)
        center += c
        size += s
    return 1e3 * center / total, 1e3 * size / total


def _logged(raw: float) -> float:
    # ESDE/SDE can exceed 1 when several objects share the video.
    return log_contrast(min(raw, 1.0))


@dataclass
class TrackletBreakdown:
    id: int
    class_id: int
    first_frame: int
    t_n: int
    om: int
    center_jitter: float
    size_jitter: float


@dataclass
class SequenceReport:
    t_v: int
    N: int
    raw: dict[str, float]
    tracklets: list[TrackletBreakdown] = field(default_factory=list)
    video_id: str | None = None

    @property
    def logged(self) -> dict[str, float]:
        return {k: _logged(self.raw[k]) for k in CONTINUITY_KEYS}

    @property
    def RCE(self) -> float:
        return sum(self.logged.values())

    @property
    def CJE(self) -> float:
        return self.raw["CJE"]

    @property
    def SJE(self) -> float:
        return self.raw["SJE"]

    @property
    def LJE(self) -> float:
        return self.CJE + self.SJE

    # Continuity attributes read as their log-contrast values.
    @property
    def ESDE(self) -> float:
        return _logged(self.raw["ESDE"])

    @property
    def SDE(self) -> float:
        return _logged(self.raw["SDE"])

    @property
    def TFE(self) -> float:
        return _logged(self.raw["TFE"])

    @property
    def FTR(self) -> float:
        return _logged(self.raw["FTR"])

    def to_dict(self, log: bool = True, per_tracklet: bool = True) -> dict:
        raw = dict(self.raw)
        raw["LJE"] = self.LJE
        out = {"t_v": self.t_v, "N": self.N}
        if self.video_id is not None:
            out = {"video_id": self.video_id, **out}
        if log:
            out.update(self.logged)
            out["RCE"] = self.RCE
            out.update(CJE=self.CJE, SJE=self.SJE, LJE=self.LJE)
        out["raw"] = raw
        if per_tracklet:
            out["tracklets"] = [vars(b).copy() for b in self.tracklets]
        return out


def evaluate(tracklets: Sequence[Tracklet], t_v: int,
             video_id: str | None = None) -> SequenceReport:
    if t_v < 1:
        raise ConsistencyError("t_v must be positive")
    for t in tracklets:
        if t.last_matched_frame + 1 > t_v:
            raise ConsistencyError(
                f"tracklet {t.id} ends at frame {t.last_matched_frame}, "
                f"beyond video duration {t_v}")
    durations = [t.t_n for t in tracklets]
    tfe, ftr = fragment_errors(tracklets)
    total = sum(durations)
    breakdown = []
    center_total = size_total = 0.0
    for t in tracklets:
        c, s = jitter_sums(t)
        center_total += c
        size_total += s
        breakdown.append(TrackletBreakdown(t.id, t.class_id, t.first_frame, t.t_n,
                                           t.om, c, s))
    raw = {
        "ESDE": short_duration_error(durations, t_v, S_ESDE),
        "SDE": short_duration_error(durations, t_v, S_SDE),
        "TFE": tfe,
        "FTR": ftr,
        "CJE": 1e3 * center_total / total if total else 0.0,
        "SJE": 1e3 * size_total / total if total else 0.0,
    }
    return SequenceReport(t_v, len(tracklets), raw, breakdown, video_id)


def aggregate(reports: Sequence[SequenceReport]) -> SequenceReport:
    """Duration-weighted mean of raw values; log contrast applied afterwards."""
    if not reports:
        return SequenceReport(1, 0, {k: 0.0 for k in CONTINUITY_KEYS + ("CJE", "SJE")})
    total = sum(r.t_v for r in reports)
    keys = CONTINUITY_KEYS + ("CJE", "SJE")
    raw = {k: sum(r.raw[k] * r.t_v for r in reports) / total for k in keys}
    return SequenceReport(total, sum(r.N for r in reports), raw, [], "__aggregate__")
