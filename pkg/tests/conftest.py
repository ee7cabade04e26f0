import numpy as np
import pytest

from unfoldsim.geometry import AngularChain, default_mask, wrap_angle

# physically plausible centers for random chains, radians
CENTER = np.radians([-60.0, -45.0, 180.0, 111.0, 116.2, 121.7])


def random_angles(rng, n, spread=1.0):
    """Random six-angle array: dihedrals anywhere, bond angles in (90, 140) degrees."""
    a = np.empty((n, 6))
    a[:, :3] = rng.uniform(-np.pi, np.pi, (n, 3))
    a[:, 3:] = rng.uniform(np.radians(90), np.radians(140), (n, 3))
    if spread < 1.0:
        a = CENTER + spread * wrap_angle(a - CENTER)
    return np.where(default_mask(n), wrap_angle(a), 0.0)


def random_chain(rng, n, spread=1.0):
    return AngularChain(random_angles(rng, n, spread))


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def angle_gap(a, b):
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one acceptance line; printed together at the end of the run."""
    def _record(number, ok, detail):
        ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
