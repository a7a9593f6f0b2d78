import os
import sys

import pytest

from vidtemporal.core import BBox, Detection, VideoSequence

sys.path.insert(0, os.path.dirname(__file__))

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    number, title = mark.args
    status = "PASS" if rep.passed else "FAIL"
    if _criteria.get(number, ("", "PASS"))[1] == "FAIL":
        status = "FAIL"
    _criteria[number] = (title, status)
    if rep.when == "call":
        print(f"\n[{status}] criterion {number}: {title}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, status = _criteria[n]
        terminalreporter.write_line(f"[{status}] criterion {n:2d}: {title}")


def det(frame, cx, cy=0.5, w=0.1, h=0.1, score=0.9, class_id=0):
    return Detection(frame, class_id, score, BBox(cx, cy, w, h))


def sequence(t_v, detections, video_id="v"):
    return VideoSequence.from_detections(video_id, t_v, detections)
