import numpy as np
import pytest

DATA_DIR_NAME = "data"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion after a run."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if getattr(report, "when", "call") != "call" and outcome == "passed":
                continue
            name = nodeid.split("::")[-1]
            rows.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if not rows:
        return
    seen = {}
    for name, status in rows:
        if seen.get(name) != "FAIL":
            seen[name] = status
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(seen):
        terminalreporter.write_line(f"{seen[name]}  {name}")


@pytest.fixture
def gradient_image():
    """Deterministic 16x16 grayscale ramp covering [0, 1]."""
    base = np.arange(256, dtype=np.float64).reshape(16, 16)
    return base / 255.0


@pytest.fixture
def gradient_rgb():
    """Deterministic 12x10x3 image with distinct channel patterns."""
    yy = np.linspace(0.0, 1.0, 12)[:, None]
    xx = np.linspace(0.0, 1.0, 10)[None, :]
    r = yy * np.ones_like(xx)
    g = np.ones_like(yy) * xx
    b = (yy + xx) / 2.0
    return np.stack([r, g, b], axis=2)


def random_image(rng, max_side=8, channels=1):
    height = int(rng.integers(1, max_side + 1))
    width = int(rng.integers(1, max_side + 1))
    if channels == 1:
        return rng.random((height, width))
    return rng.random((height, width, channels))
