import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from inkpd import _accel  # noqa: E402
from inkpd.ink_data import Recording, SubjectMeta  # noqa: E402


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per kernel backend."""
    prev = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


def make_recording(button, x=None, y=None, t=None, pressure=None, task=1, subject=None):
    button = np.asarray(button, dtype=float)
    n = button.size
    t = np.arange(n) * 0.01 if t is None else np.asarray(t, float)
    x = np.zeros(n) if x is None else np.asarray(x, float)
    y = np.zeros(n) if y is None else np.asarray(y, float)
    if pressure is None:
        pressure = np.where(button == 1, 500.0, 0.0)
    data = np.column_stack([x, y, t, button, pressure, np.full(n, 40.0), np.full(n, 50.0)])
    return Recording(subject, task, data)


def subject(sid="S01", age=70, sex="Female", label="PD"):
    return SubjectMeta(sid, age, sex, label)


def pytest_terminal_summary(terminalreporter):
    """Echo acceptance verdict lines so they appear in the plain -v log."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
