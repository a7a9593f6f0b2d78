import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from vidtemporal.associate import (Associator, AssociatorConfig, SequencingError,
                                   greedy_match, run)
from vidtemporal.core import BBox, FrameDetections

from conftest import det, sequence


def frame(f, *dets):
    return FrameDetections(f, tuple(dets))


def test_config_validation():
    with pytest.raises(ValueError):
        AssociatorConfig(score_threshold=1.5)
    with pytest.raises(ValueError):
        AssociatorConfig(S_lost_max=0)


def test_match_resets_lost():
    a = Associator()
    a.step(frame(0, det(0, 0.5)))
    a.step(frame(1))
    assert a.active[0].S_lost == 1
    # IoU 0.8 against the last box: widen slightly.
    rec = a.step(frame(2, det(2, 0.5, w=0.125, h=0.1)))
    assert [m[0] for m in rec.matches] == [0]
    assert a.active[0].S_lost == 0


def test_no_detections_increments_lost_only():
    a = Associator()
    a.step(frame(0, det(0, 0.5)))
    before = a.active[0].D
    a.step(frame(1))
    t = a.active[0]
    assert t.S_lost == 1 and t.D == before


def test_greedy_pairs_against_bruteforce():
    # IoU matrix [[0.9, 0.4], [0.4, 0.8]] built from 1-D overlaps.
    m = [[0.9, 0.4], [0.4, 0.8]]
    best = max(itertools.permutations(range(2)), key=lambda p: sum(m[i][p[i]] for i in range(2)))
    assert best == (0, 1)

    a = Associator()
    a.step(frame(0, det(0, 0.2), det(0, 0.8)))
    # Shift each box so its own tracklet overlaps most.
    rec = a.step(frame(1, det(1, 0.205), det(1, 0.81)))
    got = {tid: round(d.box.cx, 3) for tid, d in rec.matches}
    assert got == {0: 0.205, 1: 0.81}


def test_greedy_match_prefers_global_max():
    from vidtemporal.associate import Tracklet
    t0 = Tracklet(0, 0, 0)
    t0.add(det(0, 0.50))
    t1 = Tracklet(1, 0, 0)
    t1.add(det(0, 0.56))
    d = [det(1, 0.55), det(1, 0.45)]
    pairs = greedy_match([t0, t1], d, 0.3)
    assert sorted(pairs) == [(0, 1), (1, 0)]


def test_non_monotonic_frames_rejected():
    a = Associator()
    a.step(frame(0))
    with pytest.raises(SequencingError):
        a.step(frame(2))


def test_class_restricted():
    seq = sequence(2, [det(0, 0.5, class_id=0), det(1, 0.5, class_id=1)])
    assert len(run(seq)) == 2


def test_low_score_discarded():
    assert run(sequence(3, [det(1, 0.5, score=0.3)])) == []


def test_empty_sequence():
    assert run(sequence(10, [])) == []


def test_full_track():
    (t,) = run(sequence(20, [det(f, 0.5) for f in range(20)]))
    assert (t.t_n, t.om) == (20, 0)


def scan_misses(history):
    return sum(h is None for h in history)


def test_gap_within_life():
    frames = list(range(0, 5)) + list(range(7, 10))
    (t,) = run(sequence(10, [det(f, 0.5) for f in frames]))
    assert t.t_n == 10 and t.om == 2 == scan_misses(t.history)
    assert t.history[0] is not None and t.history[-1] is not None


@pytest.mark.parametrize("gap,expected", [(10, 1), (11, 2)])
def test_gap_splitting(gap, expected):
    frames = [0, 1, 2, 3 + gap, 4 + gap]
    tracks = run(sequence(30, [det(f, 0.5) for f in frames]))
    assert len(tracks) == expected
    assert len({t.id for t in tracks}) == expected


def test_trailing_losses_trimmed():
    (t,) = run(sequence(30, [det(f, 0.5) for f in range(5)]))
    assert t.t_n == 5 and t.om == 0 and t.last_matched_frame == 4


def test_window_bounded():
    a = Associator(AssociatorConfig(S_obj_max=3))
    for f in range(6):
        a.step(frame(f, det(f, 0.5 + 0.001 * f)))
    D = a.active[0].D
    assert [e.frame for e in D] == [3, 4, 5]


scene = st.lists(
    st.tuples(st.integers(0, 14), st.floats(0.1, 0.9), st.floats(0.1, 0.9),
              st.floats(0.5, 1.0), st.integers(0, 1)),
    max_size=40)


@settings(max_examples=100, deadline=None)
@given(scene, st.randoms(use_true_random=False))
def test_order_invariance_and_bounds(items, rnd):
    dets = [det(f, cx, cy, score=s, class_id=c) for f, cx, cy, s, c in items]
    shuffled = dets[:]
    rnd.shuffle(shuffled)
    a = run(sequence(15, dets))
    b = run(sequence(15, shuffled))
    assert [(t.id, t.history) for t in a] == [(t.id, t.history) for t in b]
    assert sum(t.t_n for t in a) <= len(a) * 15
    for t in a:
        assert t.t_n >= 1
        assert t.om == scan_misses(t.history)
        assert t.t_n == t.last_matched_frame - t.first_frame + 1


def test_greedy_on_stated_iou_matrix(monkeypatch):
    from vidtemporal import associate
    from vidtemporal.associate import Tracklet
    m = [[0.9, 0.4], [0.4, 0.8]]
    tracks = []
    for i in range(2):
        t = Tracklet(i, 0, 0)
        t.add(det(0, 0.1 * (i + 1)))
        tracks.append(t)
    dets = [det(1, 0.1), det(1, 0.2)]
    lookup = {(tracks[i].last_box, dets[j].box): m[i][j] for i in range(2) for j in range(2)}
    monkeypatch.setattr(associate, "iou", lambda a, b: lookup[(a, b)])
    pairs = greedy_match(tracks, dets, 0.3)
    brute = max(itertools.permutations(range(2)), key=lambda p: sum(m[i][p[i]] for i in range(2)))
    assert sorted(pairs) == [(i, brute[i]) for i in range(2)] == [(0, 0), (1, 1)]
