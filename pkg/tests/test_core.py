import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidtemporal.core import (BBox, Detection, FrameDetections, VideoSequence, iou,
                              iou_one_to_many, boxes_to_corners, nms)

from conftest import det


def raster_iou(a, b, step=1e-3):
    # Count grid cells whose centers fall inside each box.
    xs = np.arange(0.0, 1.0, step) + step / 2
    X, Y = np.meshgrid(xs, xs, indexing="ij")

    def inside(box):
        return ((np.abs(X - box.cx) < box.w / 2) & (np.abs(Y - box.cy) < box.h / 2))

    ia, ib = inside(a), inside(b)
    return (ia & ib).sum() / (ia | ib).sum()


boxes = st.builds(
    BBox,
    st.floats(-0.2, 1.2), st.floats(-0.2, 1.2),
    st.floats(1e-3, 1.0), st.floats(1e-3, 1.0),
)


def test_iou_identity():
    b = BBox(0.3, 0.4, 0.2, 0.1)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1)) == 0.0


def test_iou_third_matches_raster_oracle():
    a, b = BBox(0.5, 0.5, 0.2, 0.2), BBox(0.6, 0.5, 0.2, 0.2)
    oracle = raster_iou(a, b)
    assert oracle == pytest.approx(1 / 3, abs=5e-3)
    assert iou(a, b) == pytest.approx(1 / 3, rel=1e-12)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


@given(boxes, st.lists(boxes, min_size=1, max_size=20))
def test_vectorized_iou_bit_identical(a, others):
    corners = boxes_to_corners(np.array([b.as_tuple() for b in others]))
    prev = boxes_to_corners(np.array([a.as_tuple()]))[0]
    got = iou_one_to_many(prev, corners)
    assert [float(g) for g in got] == [iou(a, b) for b in others]


@pytest.mark.parametrize("bad", [(0.5, 0.5, 0.0, 0.1), (0.5, 0.5, 0.1, -1.0),
                                 (float("nan"), 0.5, 0.1, 0.1), (0.5, float("inf"), 0.1, 0.1)])
def test_bbox_rejects_invalid(bad):
    with pytest.raises(ValueError):
        BBox(*bad)


def test_bbox_may_extend_past_frame():
    BBox(-0.05, 1.02, 0.3, 0.3)


def test_detection_score_range():
    with pytest.raises(ValueError):
        det(0, 0.5, score=1.2)


def test_frame_detections_share_frame():
    with pytest.raises(ValueError):
        FrameDetections(1, (det(0, 0.5),))


def test_sequence_frames_explicit():
    seq = VideoSequence.from_detections("v", 4, [det(2, 0.5)])
    assert [f.frame for f in seq.frames] == [0, 1, 2, 3]
    assert seq.frames[0].detections == ()
    with pytest.raises(ValueError):
        VideoSequence.from_detections("v", 2, [det(2, 0.5)])


# -- nms ---------------------------------------------------------------------

def test_nms_single():
    d = det(0, 0.5, score=0.9)
    assert nms([d], 0.5, 0.5) == [d]


def test_nms_identical_boxes_keeps_best():
    a, b = det(0, 0.5, score=0.9), det(0, 0.5, score=0.8)
    assert nms([b, a], 0.5, 0.5) == [a]


def test_nms_third_overlap_both_kept():
    a = Detection(0, 0, 0.9, BBox(0.5, 0.5, 0.2, 0.2))
    b = Detection(0, 0, 0.8, BBox(0.6, 0.5, 0.2, 0.2))
    assert nms([a, b], 0.5, 0.5) == [a, b]


def test_nms_empty_and_score_filter():
    assert nms([], 0.5, 0.5) == []
    assert nms([det(0, 0.5, score=0.4)], 0.5, 0.5) == []


def test_nms_is_per_class():
    a = det(0, 0.5, score=0.9, class_id=0)
    b = det(0, 0.5, score=0.8, class_id=1)
    assert nms([a, b], 0.5, 0.5) == [a, b]


def test_nms_ties_break_on_input_order():
    a, b = det(0, 0.5, score=0.7), det(0, 0.5, score=0.7)
    out = nms([a, b], 0.5, 0.5)
    assert len(out) == 1 and out[0] is a


def test_nms_rejects_mixed_frames():
    with pytest.raises(ValueError):
        nms([det(0, 0.5), det(1, 0.5)])


def brute_nms(cands, score_thr, nms_thr):
    kept = []
    for c in sorted({d.class_id for d in cands}):
        pool = [(i, d) for i, d in enumerate(cands) if d.class_id == c and d.score >= score_thr]
        pool.sort(key=lambda x: (-x[1].score, x[0]))
        while pool:
            head = pool.pop(0)
            kept.append(head)
            pool = [p for p in pool if iou(p[1].box, head[1].box) <= nms_thr]
    kept.sort(key=lambda x: (-x[1].score, x[0]))
    return [d for _, d in kept]


dets = st.lists(
    st.builds(lambda cx, cy, w, h, s, c: Detection(0, c, s, BBox(cx, cy, w, h)),
              st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.05, 0.4),
              st.floats(0.05, 0.4), st.floats(0, 1), st.integers(0, 2)),
    max_size=30)


@settings(max_examples=200)
@given(dets, st.floats(0, 1), st.floats(0, 1))
def test_nms_properties(cands, score_thr, nms_thr):
    out = nms(cands, score_thr, nms_thr)
    assert out == brute_nms(cands, score_thr, nms_thr)
    ids = {id(d) for d in out}
    assert ids <= {id(d) for d in cands}
    for i, a in enumerate(out):
        for b in out[i + 1:]:
            if a.class_id == b.class_id:
                assert iou(a.box, b.box) <= nms_thr
    for d in cands:
        if d.score >= score_thr and id(d) not in ids:
            assert any(k.class_id == d.class_id and k.score >= d.score
                       and iou(k.box, d.box) > nms_thr for k in out)
    assert nms(out, score_thr, nms_thr) == out
    assert [d.score for d in out] == sorted((d.score for d in out), reverse=True)
