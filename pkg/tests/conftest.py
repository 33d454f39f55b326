import numpy as np
import pytest

import voxmod

# Acceptance-test results land here so the terminal summary can print one
# pass/fail line per criterion even when -q swallows individual test names.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        suffix = f" - {detail}" if detail else ""
        terminalreporter.write_line(f"[C{number}] {status}{suffix}")


@pytest.fixture(scope="session")
def warm_jit():
    """Push one tiny frame through the whole pipeline so numba compilation
    happens before anything timing-sensitive runs."""
    cfg = voxmod.MapConfig(voxel_size=0.25, temporal_window=1, min_cluster_size=1,
                           reset_duration=2)
    pipe = voxmod.DetectionPipeline(cfg)
    rng = np.random.default_rng(0)
    pts = rng.uniform(1.0, 3.0, (200, 3))
    for t in range(4):
        pipe.process_frame(voxmod.Frame(index=t, points=pts, pose=voxmod.Pose()))
    # Exercise the weight-reset path too (first detection compiles it).
    voxmod.reset_dynamic_weights(pipe.map, np.empty(0, dtype=np.int64))
    return True
