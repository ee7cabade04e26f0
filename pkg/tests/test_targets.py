import itertools
import math

import numpy as np
import pytest

from conftest import random_rotation
from unfoldsim import so3
from unfoldsim.dynamics import PotentialParams, SimConfig, Trajectory, simulate
from unfoldsim.errors import DegenerateNormalizer, OutOfRange, ShapeMismatch
from unfoldsim.metrics import helix_chain
from unfoldsim.targets import (
    AtomSet,
    VelocityTarget,
    bb_loss,
    ca_state_at,
    cfm_loss_r3,
    cfm_loss_so3,
    distogram_loss,
    lookahead_loss,
    r3_velocity_at,
    so3_targets_for_pair,
    total_loss,
)


def synthetic(fn, n_steps=100, n_res=3):
    """Cartesian trajectory whose CA track is ``fn(t)`` at flow times 1 - s/Nt."""
    cfg = SimConfig(n_steps=n_steps, variant="cartesian")
    times = 1.0 - np.arange(n_steps + 1) / n_steps
    pos = np.stack([fn(t) for t in times])
    return Trajectory(pos, np.zeros_like(pos), cfg, PotentialParams())


def brute_distogram(pred, true, threshold):
    n = true.shape[0]
    terms = []
    gated = 0
    for a_res, a, b_res, b in itertools.product(range(n), range(4), range(n), range(4)):
        dt = np.sqrt(np.sum((true[a_res, a] - true[b_res, b]) ** 2))
        dp = np.sqrt(np.sum((pred[a_res, a] - pred[b_res, b]) ** 2))
        if dt < threshold:
            gated += 1
            terms.append((dt - dp) * (dt - dp))
    z = gated - n
    return math.fsum(terms) / z, z


# -- R3 velocity ----------------------------------------------------------------


def test_stationary_trajectory_has_zero_velocity():
    traj = synthetic(lambda t: np.ones((3, 3)))
    for method in ("finite-diff", "cubic-spline"):
        assert np.allclose(r3_velocity_at(traj, 0.37, method), 0)


def test_linear_motion_velocity():
    c = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, 1.0], [2.0, 2.0, 2.0]])
    x0 = np.arange(9.0).reshape(3, 3)
    traj = synthetic(lambda t: x0 + c * t)
    for t in (0.0, 0.123, 0.5, 1.0):
        for method in ("finite-diff", "cubic-spline"):
            assert np.allclose(r3_velocity_at(traj, t, method), c, atol=1e-9)


def test_spline_derivative_of_sine():
    traj = synthetic(lambda t: np.full((1, 3), np.sin(2 * np.pi * t)), n_res=1)
    for t in np.linspace(0.05, 0.95, 19):
        t = round(t * 100) / 100
        v = r3_velocity_at(traj, t, "cubic-spline")
        assert np.allclose(v, 2 * np.pi * np.cos(2 * np.pi * t), atol=1e-3)


def test_methods_agree_on_smooth_track():
    traj = synthetic(lambda t: np.full((1, 3), np.sin(2 * np.pi * t)), n_res=1)
    dt = traj.dt
    bound = 5 * dt * (2 * np.pi) ** 2
    for t in np.linspace(0.0, 1.0, 37):
        a = r3_velocity_at(traj, t, "finite-diff")
        b = r3_velocity_at(traj, t, "cubic-spline")
        assert np.max(np.abs(a - b)) <= bound


def test_velocity_out_of_range():
    traj = synthetic(lambda t: np.zeros((2, 3)))
    with pytest.raises(OutOfRange):
        r3_velocity_at(traj, 1.5)
    single = Trajectory(traj.positions[:1], traj.velocities[:1], traj.config, traj.params)
    with pytest.raises(OutOfRange):
        r3_velocity_at(single, 1.0)


def test_angular_trajectory_velocity_is_centered():
    traj = simulate(helix_chain(8), PotentialParams(), SimConfig(n_steps=20))
    v = r3_velocity_at(traj, 0.5)
    assert np.allclose(v.mean(axis=0), 0, atol=1e-10)
    x = ca_state_at(traj, 0.5)
    assert np.allclose(x.mean(axis=0), 0, atol=1e-10)


# -- SO(3) targets ----------------------------------------------------------------


def test_so3_target_identical_rotations(rng):
    r = random_rotation(rng)
    for t in (0.1, 0.5, 1.0):
        _, v = so3_targets_for_pair(r, r, t)
        assert np.allclose(v, 0)


def test_so3_target_constant_norm(rng):
    for _ in range(30):
        r0, r1 = random_rotation(rng), random_rotation(rng)
        norms = [np.linalg.norm(so3_targets_for_pair(r0, r1, t)[1]) for t in np.linspace(0.02, 1, 30)]
        assert np.ptp(norms) < 1e-7


def test_so3_target_at_one(rng):
    r0, r1 = random_rotation(rng), random_rotation(rng)
    rt, v = so3_targets_for_pair(r0, r1, 1.0)
    assert np.array_equal(rt, r1)
    assert np.allclose(v, so3.log_map(r1.T @ r0))


def test_so3_target_integrates_back_to_start(rng):
    for _ in range(10):
        r0, r1 = random_rotation(rng), random_rotation(rng)
        t = rng.uniform(0.2, 1.0)
        rt, v = so3_targets_for_pair(r0, r1, t)
        # integrate dr/ds = -r hat(v) from s = t down to s = 0 in 1000 substeps
        r = rt.copy()
        h = t / 1000
        for _ in range(1000):
            r = r @ so3.exp_map(v * h)
        assert np.linalg.norm(r - r0) < 1e-4


def test_so3_target_rejects_zero_time(rng):
    with pytest.raises(OutOfRange):
        so3_targets_for_pair(np.eye(3), np.eye(3), 0.0)


def test_velocity_target_type():
    with pytest.raises(ShapeMismatch):
        VelocityTarget(np.zeros((3, 3)), np.zeros((2, 3)), 0.5)
    with pytest.raises(OutOfRange):
        VelocityTarget(np.zeros((3, 3)), np.zeros((3, 3)), 1.5)


# -- losses -----------------------------------------------------------------------


def test_cfm_r3_examples(rng):
    p = rng.normal(size=(10, 3))
    assert cfm_loss_r3(p, p) == 0.0
    q = p.copy()
    q[4] += (1.0, 0.0, 0.0)
    assert cfm_loss_r3(q, p) == pytest.approx(0.1)
    d = rng.normal(size=p.shape)
    assert cfm_loss_r3(p + 3 * d, p) == pytest.approx(9 * cfm_loss_r3(p + d, p))
    with pytest.raises(ShapeMismatch):
        cfm_loss_r3(p, p[:3])


def test_cfm_so3_examples(rng):
    p = rng.normal(size=(8, 3))
    assert cfm_loss_so3(p, p) == 0.0
    q = p.copy()
    q[2, 1] += 0.7
    assert cfm_loss_so3(q, p) == pytest.approx(0.49 / 8)
    r = random_rotation(rng)
    assert cfm_loss_so3(q @ r.T, p @ r.T) == pytest.approx(cfm_loss_so3(q, p))


def test_atom_losses(rng):
    a = rng.normal(size=(10, 4, 3))
    assert lookahead_loss(a, a) == 0.0
    b = a.copy()
    b[3, 2, 0] += 2.0
    assert lookahead_loss(b, a) == pytest.approx(0.1)
    assert bb_loss(b, a) == lookahead_loss(b, a)
    assert bb_loss(a + 1 / np.sqrt(3), a) == pytest.approx(1.0)
    perm = rng.permutation(10)
    assert bb_loss(b[perm], a[perm]) == pytest.approx(bb_loss(b, a))
    assert lookahead_loss(AtomSet(b), AtomSet(a)) == pytest.approx(0.1)


def test_atom_set_validation():
    with pytest.raises(ShapeMismatch):
        AtomSet(np.zeros((1, 4, 3)))
    with pytest.raises(ShapeMismatch):
        AtomSet(np.zeros((2, 3, 3)))


def test_distogram_zero_at_truth(rng):
    a = rng.normal(size=(4, 4, 3)) * 2
    assert distogram_loss(a, a) == 0.0


def test_distogram_matches_brute_force(rng):
    for _ in range(200):
        n = int(rng.integers(2, 6))
        true = rng.normal(size=(n, 4, 3)) * 3
        pred = true + rng.normal(size=true.shape)
        try:
            expected, _ = brute_distogram(pred, true, 6.0)
        except ZeroDivisionError:
            with pytest.raises(DegenerateNormalizer):
                distogram_loss(pred, true)
            continue
        assert distogram_loss(pred, true) == expected


def test_distogram_all_within_threshold_counts():
    # eight atoms on a line 0.5 A apart: every ordered pair is gated, Z = 64 - N
    true = np.zeros((2, 4, 3))
    true[:, :, 0] = np.arange(8).reshape(2, 4) * 0.5
    pred = true.copy()
    pred[1, 3, 1] = 0.3
    expected, z = brute_distogram(pred, true, 6.0)
    assert z == 64 - 2
    assert distogram_loss(pred, true) == expected


def test_distogram_symmetric_twin_counts_twice():
    # only the (0,0)-(1,0) pair changes length: atoms sit on a sphere about every other atom
    true = np.zeros((2, 4, 3))
    true[0, 0] = (0.0, 0.0, 0.0)
    true[1, 0] = (2.0, 0.0, 0.0)
    true[0, 1:] = [(1.0, 1.0, 0.0), (1.0, -1.0, 0.0), (1.0, 0.0, 1.0)]
    true[1, 1:] = [(1.0, 0.0, -1.0), (1.0, 0.7, 0.7), (1.0, -0.7, 0.7)]
    pred = true.copy()
    # reflect atom (1,0) through the plane x = 1 of the others: no distance to them changes
    delta = 0.5
    pred[1, 0] = (2.0 + delta, 0.0, 0.0)
    # the others are not equidistant, so compute which pairs actually moved
    d_true = np.linalg.norm(true.reshape(-1, 3)[:, None] - true.reshape(-1, 3)[None], axis=-1)
    d_pred = np.linalg.norm(pred.reshape(-1, 3)[:, None] - pred.reshape(-1, 3)[None], axis=-1)
    expected, z = brute_distogram(pred, true, 6.0)
    assert z == 62
    assert distogram_loss(pred, true) == pytest.approx(np.sum((d_true - d_pred) ** 2) / 62, rel=1e-15)
    assert distogram_loss(pred, true) == expected


def test_distogram_gating_removes_pair():
    true = np.zeros((2, 4, 3))
    true[0, :, 0] = [0.0, 1.0, 2.0, 3.0]
    true[1, :, 0] = [4.0, 5.0, 6.0, 7.0]
    pred = true * 1.1
    base, z0 = brute_distogram(pred, true, 6.5)
    far = true.copy()
    far[1, 3, 0] = 40.0  # now farther than 6.5 from every atom
    pred_far = pred.copy()
    pred_far[1, 3, 0] = 40.0 * 1.1
    after, z1 = brute_distogram(pred_far, far, 6.5)
    assert z1 < z0
    assert distogram_loss(pred_far, far, 6.5) == after
    assert distogram_loss(pred, true, 6.5) == base


def test_distogram_degenerate():
    # self pairs are always gated for a positive threshold, so Z <= 0 needs threshold <= 0
    true = np.zeros((2, 4, 3))
    true[..., 0] = np.arange(8).reshape(2, 4) * 100.0
    assert distogram_loss(true, true) == 0.0
    with pytest.raises(DegenerateNormalizer):
        distogram_loss(true, true, threshold=0.0)


def test_total_loss_indicator():
    assert total_loss(1, 2, 3, 100, 100, t=0.5, lam=10) == 6
    assert total_loss(1, 2, 3, 4, 5, t=0.75, lam=1) == 6
    assert total_loss(1, 2, 3, 4, 4, t=0.8, lam=0.25) == pytest.approx(8.0)
    assert total_loss(1, 2, 3, 4, 4, t=0.99, lam=0.0) == 6
