"""Flow-matching regression targets and reference loss kernels.

Losses are plain forward evaluations on numpy arrays; sampling of ``t`` and
mapping frames to atoms belong to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import so3
from .dynamics import Trajectory
from .errors import DegenerateNormalizer, OutOfRange, ShapeMismatch
from .geometry import DEFAULT_GEOMETRY, IdealGeometry, nerf_backbone

DEFAULT_DISTOGRAM_THRESHOLD = 6.0
DEFAULT_AUX_LAMBDA = 0.25
AUX_TIME = 0.75


@dataclass(frozen=True)
class VelocityTarget:
    """Per-residue translation and body-frame rotation velocities at ``flow_time``."""

    translation_velocity: np.ndarray
    rotation_velocity: np.ndarray
    flow_time: float

    def __post_init__(self):
        tv = np.asarray(self.translation_velocity, dtype=float)
        rv = np.asarray(self.rotation_velocity, dtype=float)
        if tv.ndim != 2 or tv.shape[1] != 3 or tv.shape != rv.shape:
            raise ShapeMismatch(f"velocity shapes {tv.shape} and {rv.shape} must both be (N, 3)")
        if not 0.0 <= self.flow_time <= 1.0:
            raise OutOfRange(f"flow_time {self.flow_time} outside [0, 1]")
        object.__setattr__(self, "translation_velocity", tv)
        object.__setattr__(self, "rotation_velocity", rv)


@dataclass(frozen=True)
class AtomSet:
    """Positions of N, CA, C, O per residue, ``(N, 4, 3)`` in Angstrom."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim != 3 or a.shape[1:] != (4, 3):
            raise ShapeMismatch(f"atom set needs shape (N, 4, 3), got {a.shape}")
        if a.shape[0] < 2:
            raise ShapeMismatch("atom set needs at least 2 residues")
        if not np.all(np.isfinite(a)):
            raise ValueError("atom set has non-finite coordinates")
        object.__setattr__(self, "atoms", a)

    def __len__(self):
        return self.atoms.shape[0]


def _atoms(x) -> np.ndarray:
    if isinstance(x, AtomSet):
        return x.atoms
    if hasattr(x, "atoms"):
        return np.asarray(x.atoms, dtype=float)
    return np.asarray(x, dtype=float)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")


# --------------------------------------------------------------------------
# Targets
# --------------------------------------------------------------------------


def _ca_track(traj: Trajectory, geom: IdealGeometry) -> np.ndarray:
    if traj.variant == "cartesian":
        return np.array(traj.positions)
    ca = np.stack([nerf_backbone(z, geom)[:, 1] for z in traj.positions])
    return ca - ca.mean(axis=1, keepdims=True)


def _span_check(traj: Trajectory, t: float) -> np.ndarray:
    if traj.n_states < 2:
        raise OutOfRange("velocity targets need at least two stored states")
    times = traj.flow_times[::-1]
    if not times[0] - 1e-12 <= t <= times[-1] + 1e-12:
        raise OutOfRange(f"t = {t} outside the stored span [{times[0]}, {times[-1]}]")
    return times


def _bracket(times: np.ndarray, t: float, dt: float) -> int:
    k = int(np.floor((t - times[0]) / dt + 1e-9))
    return min(max(k, 0), len(times) - 2)


def ca_state_at(traj: Trajectory, t: float, geom: IdealGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """CA positions at flow time ``t``, linear between stored states."""
    times = _span_check(traj, t)
    x = _ca_track(traj, geom)[::-1]
    k = _bracket(times, t, traj.dt)
    w = (t - times[k]) / traj.dt
    return x[k] + w * (x[k + 1] - x[k])


def r3_velocity_at(traj: Trajectory, t: float, method: str = "finite-diff",
                   geom: IdealGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """d(CA)/dt along the stored trajectory, with t the flow time.

    Angular trajectories are rebuilt through NeRF and centered first.
    ``finite-diff`` differences the grid pair bracketing ``t`` (the pair
    above ``t`` when it sits on a grid point, the last pair at the top).
    ``cubic-spline`` differentiates a natural cubic fit per coordinate.
    """
    if method not in ("finite-diff", "cubic-spline"):
        raise ValueError(f"unknown method {method!r}")
    times = _span_check(traj, t)
    x = _ca_track(traj, geom)[::-1]
    if method == "cubic-spline":
        return CubicSpline(times, x, axis=0, bc_type="natural")(t, 1)
    k = _bracket(times, t, traj.dt)
    return (x[k + 1] - x[k]) / traj.dt


def so3_targets_for_pair(r0, r1, t: float):
    """Geodesic point ``rt`` and its regression target ``log(rt^T r0) / t``."""
    if not 0.0 < t <= 1.0:
        raise OutOfRange(f"t = {t} outside (0, 1]")
    rt = so3.geodesic_interp(r0, r1, t)
    return rt, so3.so3_velocity(rt, r0, t)


def velocity_target(traj: Trajectory, r0, r1, t: float, method: str = "finite-diff",
                    geom: IdealGeometry = DEFAULT_GEOMETRY) -> VelocityTarget:
    """Bundle translation and rotation targets for per-residue frames ``r0``, ``r1``."""
    rot = np.stack([so3_targets_for_pair(a, b, t)[1] for a, b in zip(r0, r1)])
    return VelocityTarget(r3_velocity_at(traj, t, method, geom), rot, float(t))


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------


def cfm_loss_r3(predicted, target) -> float:
    """Mean over residues of the squared velocity error."""
    p = np.asarray(predicted, dtype=float)
    q = np.asarray(target, dtype=float)
    _same_shape(p, q)
    d = (p - q).reshape(p.shape[0], -1)
    return float(np.mean(np.sum(d * d, axis=1)))


def cfm_loss_so3(predicted, target) -> float:
    """Mean squared axis-angle error; the metric is Euclidean on tangent vectors."""
    return cfm_loss_r3(predicted, target)


def lookahead_loss(pred_atoms, true_atoms) -> float:
    """``1/(4N) sum_n sum_a |a_n - a_n'|^2`` over the four backbone atoms."""
    p, q = _atoms(pred_atoms), _atoms(true_atoms)
    _same_shape(p, q)
    d = p - q
    return float(np.sum(d * d) / (4 * p.shape[0]))


def bb_loss(pred_atoms, true_atoms) -> float:
    """Same kernel as :func:`lookahead_loss`, fed terminal states."""
    return lookahead_loss(pred_atoms, true_atoms)


def _pair_distances(atoms: np.ndarray) -> np.ndarray:
    flat = atoms.reshape(-1, 3)
    diff = flat[:, None, :] - flat[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def distogram_loss(pred_atoms, true_atoms, threshold: float = DEFAULT_DISTOGRAM_THRESHOLD) -> float:
    """Squared distance error over atom pairs whose true distance is under ``threshold``.

    Ordered pairs ``(n, a), (m, b)`` over all residues and atoms are counted
    in both the sum and the normalizer ``Z = gated pairs - N``.  Self pairs
    sit at distance 0, so Z only drops to 0 or below for ``threshold <= 0``.
    The sum is correctly rounded, so it does not depend on pair order.
    """
    p, q = _atoms(pred_atoms), _atoms(true_atoms)
    _same_shape(p, q)
    d_true = _pair_distances(q)
    d_pred = _pair_distances(p)
    gate = d_true < threshold
    z = int(np.count_nonzero(gate)) - q.shape[0]
    if z <= 0:
        raise DegenerateNormalizer(f"normalizer Z = {z}; no atom pairs within {threshold} A")
    diff = (d_true - d_pred)[gate]
    return math.fsum(diff * diff) / z


def total_loss(l_so3: float, l_r3: float, l_la: float, l_bb: float, l_2d: float, t: float,
               lam: float = DEFAULT_AUX_LAMBDA) -> float:
    """Main terms plus ``lam * (l_bb + l_2d)`` once ``t > 0.75``."""
    loss = l_so3 + l_r3 + l_la
    if t > AUX_TIME:
        loss += lam * (l_bb + l_2d)
    return float(loss)
