import numpy as np
import pytest
from hypothesis import settings

from motionpose.geometry import CameraIntrinsics, Pose, Quaternion
from motionpose.simulation import SpacecraftModel

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def cam():
    return CameraIntrinsics.default()


@pytest.fixture
def model():
    return SpacecraftModel.box()


def random_pose(rng, depth=(6.0, 14.0), lateral=0.3):
    q = Quaternion(*rng.standard_normal(4))
    t = (rng.uniform(-lateral, lateral), rng.uniform(-lateral, lateral), rng.uniform(*depth))
    return Pose(q, t)


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    return Quaternion.from_rotvec(axis / np.linalg.norm(axis) * angle)


# acceptance summary: one line per criterion, printed at the end of every run
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed or rep.when == "call":
        _criteria[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_criteria):
        title, status, detail = _criteria[number]
        line = f"{status} criterion {number:>2}: {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
