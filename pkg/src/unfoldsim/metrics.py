"""Trajectory diagnostics and the runtime benchmark."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from .dynamics import PotentialParams, SimConfig, Trajectory, potential_energy, simulate
from .errors import ShapeMismatch
from .geometry import DEFAULT_GEOMETRY, AngularChain, IdealGeometry, kabsch, wrap_angle

DEFAULT_COLLISION_THRESHOLD = 4.0
DEFAULT_EXCLUSION_WINDOW = 1

# ideal alpha helix (phi, psi, omega, theta1, theta2, theta3), degrees
_HELIX_DEG = (-57.0, -47.0, 180.0, 111.0, 116.2, 121.7)


@dataclass(frozen=True)
class CollisionProfile:
    counts: np.ndarray
    threshold: float = DEFAULT_COLLISION_THRESHOLD
    window: int = DEFAULT_EXCLUSION_WINDOW

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        if self.window < 1:
            raise ValueError("exclusion window must be >= 1")
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    def __len__(self):
        return len(self.counts)

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts))


def collision_count(ca_positions, threshold: float = DEFAULT_COLLISION_THRESHOLD,
                    w: int = DEFAULT_EXCLUSION_WINDOW) -> int:
    """Unordered pairs with ``|i - j| > w`` closer than ``threshold``."""
    x = np.asarray(ca_positions, dtype=float)
    count = x.shape[0]
    if count < 2:
        raise ShapeMismatch("collision counting needs at least 2 residues")
    i, j = np.triu_indices(count, k=1)
    close = (pdist(x) < threshold) & (j - i > w)
    return int(np.count_nonzero(close))


def trajectory_collisions(traj: Trajectory, threshold: float = DEFAULT_COLLISION_THRESHOLD,
                          w: int = DEFAULT_EXCLUSION_WINDOW,
                          geom: IdealGeometry = DEFAULT_GEOMETRY) -> CollisionProfile:
    ca = traj.ca_positions(geom)
    return CollisionProfile(np.array([collision_count(x, threshold, w) for x in ca]), threshold, w)


def kabsch_rmsd(a, b) -> float:
    """RMSD after optimal proper superposition of ``a`` onto ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ShapeMismatch(f"point sets {a.shape} and {b.shape} must match and be (N, 3)")
    if a.shape[0] < 3:
        raise ShapeMismatch("RMSD needs at least 3 points")
    rot, trans = kabsch(a, b)
    d = a @ rot.T + trans - b
    return float(np.sqrt(np.sum(d * d) / a.shape[0]))


def energy_profile(traj: Trajectory, params: PotentialParams = None,
                   geom: IdealGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """``(S, 3)`` columns potential, kinetic, total for every stored state.

    ``params`` defaults to the ones stored on the trajectory.
    """
    params = traj.params if params is None else params
    if params.target is None:
        params = params.with_target(traj.params.target)
    out = np.empty((traj.n_states, 3))
    for s in range(traj.n_states):
        pot = potential_energy(traj.positions[s], params, traj.variant, traj.mask, geom)
        v = traj.velocities[s]
        kin = 0.5 * float(np.sum(v * v))
        out[s] = pot, kin, pot + kin
    return out


def helix_chain(n_residues: int) -> AngularChain:
    """Synthetic compact chain: every residue at ideal helix angles."""
    angles = np.tile(wrap_angle(np.radians(_HELIX_DEG)), (n_residues, 1))
    return AngularChain.from_raw(angles)


def runtime_benchmark(lengths, params: PotentialParams = None, config: SimConfig = None,
                      repeats: int = 3) -> dict:
    """Median wall-clock seconds of ``simulate`` on helix chains of each length.

    The first call compiles the kernels, so one untimed warm-up run comes first.
    """
    params = PotentialParams() if params is None else params
    config = SimConfig() if config is None else replace(config, variant="angular")
    lengths = [int(n) for n in lengths]
    if any(n < 2 for n in lengths):
        raise ValueError("benchmark lengths must be >= 2")
    simulate(helix_chain(min(lengths)), params, config)
    result = {}
    for n in lengths:
        chain = helix_chain(n)
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            simulate(chain, params, config)
            times.append(time.perf_counter() - start)
        result[n] = float(np.median(times))
    return result


def scaling_exponent(timings: dict) -> float:
    """Slope of log(time) against log(length)."""
    n = np.array(sorted(timings), dtype=float)
    t = np.array([timings[k] for k in sorted(timings)])
    return float(np.polyfit(np.log(n), np.log(t), 1)[0])


def write_benchmark_csv(timings: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["length", "median_seconds"])
        for n in sorted(timings):
            writer.writerow([n, repr(timings[n])])


def write_collisions_csv(profile: CollisionProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "collisions"])
        for s, c in enumerate(profile.counts):
            writer.writerow([s, int(c)])
