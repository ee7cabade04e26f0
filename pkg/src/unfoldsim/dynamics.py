"""Damped Hamiltonian unfolding of protein backbones.

The angular variant integrates

    dz/dt = v
    dv/dt = -grad U(z) - gamma v,   U = k1 U_target(z) + k2 U_repulsion(nerf(z))

and the Cartesian variant does the same over CA coordinates.  Simulation
step ``s`` of ``Nt`` sits at flow time ``1 - s / Nt``: the data structure is
at t = 1 and the extended prior end at t = 0.

The repulsion gradient is pulled back through NeRF by reverse accumulation.
Changing one internal coordinate rigidly rotates every atom placed after it
about a fixed axis (the bond axis for a dihedral, the angle-plane normal for
a bond angle), so each partial derivative is a torque

    dU/dq_k = u_k . sum_{j >= k} (x_j - p_k) x g_j

and the sums over downstream atoms are reversed cumulative sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels as _k
from .errors import NonFiniteState, OutOfRange, ShapeMismatch
from .geometry import (
    DEFAULT_GEOMETRY,
    AngularChain,
    BackboneCoords,
    IdealGeometry,
    default_mask,
    kabsch,
    nerf_backbone,
    wrap_angle,
)

VARIANTS = ("angular", "cartesian")
INTEGRATORS = ("explicit-euler", "semi-implicit-euler")
REPULSION_ATOMS = ("ca", "backbone")

# extended strand (phi, psi, omega, theta1, theta2, theta3), degrees
BETA_STRAND_DEG = (-139.0, 135.0, 180.0, 111.0, 116.2, 121.7)


@dataclass(frozen=True)
class SimConfig:
    n_steps: int = 100
    sigma_beta: float = 0.01
    sigma_v: float = 0.1
    sigma_z: float = 0.01
    seed: int = 0
    variant: str = "angular"
    integrator: str = "explicit-euler"
    mu_beta_deg: tuple = BETA_STRAND_DEG
    align_target: bool = True

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps}")
        for name in ("sigma_beta", "sigma_v", "sigma_z"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if len(self.mu_beta_deg) != 6:
            raise ValueError("mu_beta_deg needs six angles")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "mu_beta_deg", tuple(float(v) for v in self.mu_beta_deg))

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def mu_beta(self) -> np.ndarray:
        return wrap_angle(np.radians(self.mu_beta_deg))


@dataclass(frozen=True)
class PotentialParams:
    """Weights of the unfolding potential.

    ``target`` is an ``(N, 6)`` angle array for the angular variant or an
    ``(N, 3)`` CA array for the Cartesian one; ``None`` means "draw it".
    ``wrap_target=False`` uses raw angle differences in the attraction.
    """

    k1: float = 1.0
    k2: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1e-6
    target: np.ndarray = field(default=None, compare=False)
    wrap_target: bool = True
    repulsion_atoms: str = "ca"

    def __post_init__(self):
        if not (self.k1 >= 0 and self.k2 >= 0):
            raise ValueError("k1 and k2 must be >= 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.repulsion_atoms not in REPULSION_ATOMS:
            raise ValueError(f"repulsion_atoms must be one of {REPULSION_ATOMS}")
        if self.target is not None:
            t = np.array(self.target, dtype=float)
            t.setflags(write=False)
            object.__setattr__(self, "target", t)

    def with_target(self, target) -> "PotentialParams":
        return replace(self, target=target)


@dataclass(frozen=True)
class PhaseState:
    positions: np.ndarray
    velocities: np.ndarray
    flow_time: float
    mask: np.ndarray = None

    def __post_init__(self):
        if np.shape(self.positions) != np.shape(self.velocities):
            raise ShapeMismatch(
                f"positions {np.shape(self.positions)} and velocities {np.shape(self.velocities)} differ"
            )
        if not -1e-12 <= self.flow_time <= 1 + 1e-12:
            raise OutOfRange(f"flow_time {self.flow_time} outside [0, 1]")

    @property
    def chain(self) -> AngularChain:
        return AngularChain(self.positions, self.mask)


@dataclass
class Trajectory:
    """States of one forward simulation, ``positions[s]`` at flow time ``start_time - s * dt``.

    Simulations start at ``start_time = 1``; excerpts such as a single
    exported state carry their own start.
    """

    positions: np.ndarray
    velocities: np.ndarray
    config: SimConfig
    params: PotentialParams
    source_id: str = ""
    mask: np.ndarray = None
    start_time: float = 1.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.positions.shape != self.velocities.shape:
            raise ShapeMismatch("positions and velocities must have identical shapes")
        width = 6 if self.config.variant == "angular" else 3
        if self.positions.ndim != 3 or self.positions.shape[2] != width:
            raise ShapeMismatch(
                f"{self.config.variant} trajectory needs (S, N, {width}) arrays, got {self.positions.shape}"
            )
        if self.mask is None and self.config.variant == "angular":
            self.mask = default_mask(self.positions.shape[1])
        if self.config.variant == "cartesian":
            self.mask = None
        elif self.mask.shape != self.positions.shape[1:]:
            raise ShapeMismatch(f"mask shape {self.mask.shape} != state shape {self.positions.shape[1:]}")
        last = self.start_time - (self.n_states - 1) / self.config.n_steps
        if not (self.start_time <= 1.0 + 1e-12 and last >= -1e-9):
            raise OutOfRange("stored states must lie within flow time [0, 1]")

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def n_states(self) -> int:
        return self.positions.shape[0]

    @property
    def n_residues(self) -> int:
        return self.positions.shape[1]

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def flow_times(self) -> np.ndarray:
        return self.start_time - np.arange(self.n_states) / self.config.n_steps

    def state(self, index: int) -> PhaseState:
        return PhaseState(
            self.positions[index], self.velocities[index], float(self.flow_times[index]), self.mask
        )

    @property
    def states(self) -> list:
        return [self.state(i) for i in range(self.n_states)]

    def ca_positions(self, geom: IdealGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
        """CA coordinates of every state, ``(S, N, 3)``; angular states go through NeRF."""
        if self.variant == "cartesian":
            return self.positions.copy()
        return np.stack([nerf_backbone(z, geom)[:, 1] for z in self.positions])


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------


def _angles_and_mask(z):
    if hasattr(z, "angles"):
        return np.asarray(z.angles, dtype=float), z.mask
    z = np.asarray(z, dtype=float)
    return z, None


def angle_difference(z, target, wrap=True):
    diff = np.asarray(z, dtype=float) - np.asarray(target, dtype=float)
    return wrap_angle(diff) if wrap else diff


def u_target(z, z_target, wrap: bool = True) -> float:
    """``1/2 sum (z - z_target)^2`` over unmasked angles, differences wrapped by default."""
    a, mask = _angles_and_mask(z)
    b, mask_b = _angles_and_mask(z_target)
    if a.shape != b.shape:
        raise ShapeMismatch(f"z {a.shape} and z_target {b.shape} differ")
    diff = angle_difference(a, b, wrap)
    if mask is None:
        mask = mask_b
    if mask is not None:
        diff = np.where(mask, diff, 0.0)
    return 0.5 * float(np.sum(diff * diff))


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.size % 3:
            raise ShapeMismatch("flat coordinate vector length must be a multiple of 3")
        x = x.reshape(-1, 3)
    return x


def u_repulsion(x, epsilon: float = 0.0) -> float:
    """``1/2 sum_{i != j} 1 / (|x_i - x_j| + epsilon)``."""
    x = _as_points(x)
    if x.shape[0] < 2:
        raise ShapeMismatch("repulsion needs at least 2 points")
    with np.errstate(divide="ignore"):
        return float(np.sum(1.0 / (pdist(x) + epsilon)))


def repulsion_gradient(x, epsilon: float = 0.0) -> np.ndarray:
    """Gradient of :func:`u_repulsion` with respect to the points, ``(N, 3)``."""
    return _k.repulsion_grad(np.ascontiguousarray(_as_points(x)), float(epsilon))


def nerf_pullback(backbone: np.ndarray, atom_grad: np.ndarray) -> np.ndarray:
    """Chain an atom-space gradient back to the six angles per residue.

    ``backbone`` is the ``(N, 3, 3)`` output of :func:`nerf_backbone` and
    ``atom_grad`` has the same shape.
    """
    return _k.nerf_adjoint(np.ascontiguousarray(backbone, dtype=float),
                           np.ascontiguousarray(atom_grad, dtype=float))


def _bonds(geom: IdealGeometry) -> np.ndarray:
    return np.array([geom.peptide_bond, geom.n_ca_bond, geom.ca_c_bond])


def _check_target(params: PotentialParams, shape):
    if params.target is None:
        raise ValueError("params.target is not set")
    if params.target.shape != tuple(shape):
        raise ShapeMismatch(f"target shape {params.target.shape} != positions shape {tuple(shape)}")


def repulsion_points(angles, params: PotentialParams, geom: IdealGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Atoms that carry repulsion for a chain: CA only, or N, CA, C."""
    backbone = nerf_backbone(angles, geom)
    if params.repulsion_atoms == "ca":
        return backbone[:, 1]
    return backbone.reshape(-1, 3)


def total_potential(z, params: PotentialParams, geom: IdealGeometry = DEFAULT_GEOMETRY) -> float:
    """``k1 U_target(z) + k2 U_repulsion(nerf(z))``."""
    angles, mask = _angles_and_mask(z)
    if mask is None:
        mask = default_mask(angles.shape[0])
    _check_target(params, angles.shape)
    energy = 0.0
    if params.k1:
        energy += params.k1 * u_target(_Masked(angles, mask), params.target, params.wrap_target)
    if params.k2:
        pts = repulsion_points(angles, params, geom)
        if pts.shape[0] > 1:
            energy += params.k2 * u_repulsion(pts, params.epsilon)
    return energy


def grad_potential(z, params: PotentialParams, geom: IdealGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Exact gradient of :func:`total_potential`; masked angles get 0."""
    angles, mask = _angles_and_mask(z)
    if mask is None:
        mask = default_mask(angles.shape[0])
    _check_target(params, angles.shape)
    return _k.angular_grad(np.ascontiguousarray(angles), *_angular_args(mask, params, geom))


def cartesian_potential(x, params: PotentialParams) -> float:
    x = _as_points(x)
    _check_target(params, x.shape)
    energy = 0.0
    if params.k1:
        diff = x - params.target
        energy += params.k1 * 0.5 * float(np.sum(diff * diff))
    if params.k2:
        energy += params.k2 * u_repulsion(x, params.epsilon)
    return energy


def cartesian_grad(x, params: PotentialParams) -> np.ndarray:
    x = _as_points(x)
    _check_target(params, x.shape)
    grad = np.zeros_like(x)
    if params.k1:
        grad += params.k1 * (x - params.target)
    if params.k2:
        grad += params.k2 * repulsion_gradient(x, params.epsilon)
    return grad


def potential_energy(positions, params: PotentialParams, variant: str, mask=None,
                     geom: IdealGeometry = DEFAULT_GEOMETRY) -> float:
    if variant == "cartesian":
        return cartesian_potential(positions, params)
    return total_potential(_Masked(positions, mask) if mask is not None else positions, params, geom)


class _Masked:
    """Unvalidated angle array + mask."""

    __slots__ = ("angles", "mask")

    def __init__(self, angles, mask):
        self.angles = angles
        self.mask = mask


# --------------------------------------------------------------------------
# Integration
# --------------------------------------------------------------------------


def _angular_args(mask, params: PotentialParams, geom: IdealGeometry):
    return (
        np.ascontiguousarray(mask, dtype=np.bool_), np.ascontiguousarray(params.target, dtype=float),
        float(params.k1), float(params.k2), float(params.epsilon), bool(params.wrap_target),
        _bonds(geom), params.repulsion_atoms == "backbone",
    )


def step(state: PhaseState, params: PotentialParams, config: SimConfig,
         geom: IdealGeometry = DEFAULT_GEOMETRY) -> PhaseState:
    """One integrator step; flow time decreases by ``dt``.

    Explicit Euler uses the update order ``z' = z + v dt``,
    ``v' = v - grad U(z) dt - gamma v dt``; the semi-implicit variant
    evaluates the force at ``z'``.
    """
    z = np.ascontiguousarray(state.positions, dtype=float)
    v = np.ascontiguousarray(state.velocities, dtype=float)
    semi = config.integrator == "semi-implicit-euler"
    _check_target(params, z.shape)
    mask = state.mask
    if config.variant == "angular":
        if mask is None:
            mask = default_mask(z.shape[0])
        z_next, v_next = _k.advance_angular(
            z, v, *_angular_args(mask, params, geom), float(params.gamma), config.dt, semi
        )
    else:
        z_next, v_next = _k.advance_cartesian(
            z, v, np.ascontiguousarray(params.target), float(params.k1), float(params.k2),
            float(params.epsilon), float(params.gamma), config.dt, semi,
        )
    if not (np.all(np.isfinite(z_next)) and np.all(np.isfinite(v_next))):
        raise NonFiniteState("non-finite state; dt is too large for the chosen k1, k2")
    return PhaseState(z_next, v_next, max(state.flow_time - config.dt, 0.0), mask)


def _run(z0, v0, params: PotentialParams, config: SimConfig, mask, geom):
    semi = config.integrator == "semi-implicit-euler"
    z0 = np.ascontiguousarray(z0, dtype=float)
    v0 = np.ascontiguousarray(v0, dtype=float)
    if config.variant == "angular":
        positions, velocities, failed = _k.run_angular(
            z0, v0, *_angular_args(mask, params, geom), float(params.gamma), config.dt,
            config.n_steps, semi,
        )
    else:
        positions, velocities, failed = _k.run_cartesian(
            z0, v0, np.ascontiguousarray(params.target), float(params.k1), float(params.k2),
            float(params.epsilon), float(params.gamma), config.dt, config.n_steps, semi,
        )
    if failed:
        raise NonFiniteState("non-finite state; dt is too large for the chosen k1, k2", step=int(failed))
    return positions, velocities


def _rng(rng, config: SimConfig):
    return np.random.default_rng(config.seed) if rng is None else rng


def draw_beta_angles(n_residues: int, config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    mask = default_mask(n_residues)
    z = config.mu_beta + config.sigma_beta * rng.standard_normal((n_residues, 6))
    return np.where(mask, wrap_angle(z), 0.0)


def simulate(data_chain: AngularChain, params: PotentialParams, config: SimConfig,
             geom: IdealGeometry = DEFAULT_GEOMETRY, rng=None, source_id: str = "") -> Trajectory:
    """Forward-simulate from the data end (t = 1) toward the extended prior.

    Draws the target around the strand angles unless ``params.target`` is
    set, then Gaussian initial velocities; ``rng=None`` seeds from
    ``config.seed``.
    """
    if config.variant != "angular":
        config = replace(config, variant="angular")
    rng = _rng(rng, config)
    count = data_chain.n_residues
    mask = data_chain.mask
    if params.target is None:
        params = params.with_target(np.where(mask, draw_beta_angles(count, config, rng), 0.0))
    else:
        _check_target(params, data_chain.angles.shape)
    v0 = np.where(mask, config.sigma_v * rng.standard_normal((count, 6)), 0.0)
    positions, velocities = _run(data_chain.angles, v0, params, config, mask, geom)
    return Trajectory(positions, velocities, config, params, source_id, np.array(mask))


def beta_strand_ca(n_residues: int, config: SimConfig, rng, geom: IdealGeometry = DEFAULT_GEOMETRY):
    """CA positions of a drawn strand, centered."""
    z = draw_beta_angles(n_residues, config, rng)
    ca = nerf_backbone(z, geom)[:, 1]
    return ca - ca.mean(axis=0)


def simulate_cartesian(coords, params: PotentialParams, config: SimConfig,
                       geom: IdealGeometry = DEFAULT_GEOMETRY, rng=None, source_id: str = "") -> Trajectory:
    """Cartesian variant over CA positions.

    The strand target is centered and, with ``config.align_target``,
    superposed onto the starting CA positions, so translating the input
    translates every state.
    """
    if config.variant != "cartesian":
        config = replace(config, variant="cartesian")
    rng = _rng(rng, config)
    x0 = np.array(coords.ca if isinstance(coords, BackboneCoords) else _as_points(coords), dtype=float)
    count = x0.shape[0]
    if params.target is None:
        target = beta_strand_ca(count, config, rng, geom)
        if config.align_target:
            rot, trans = kabsch(target, x0)
            target = target @ rot.T + trans
        params = params.with_target(target)
    else:
        _check_target(params, x0.shape)
    v0 = config.sigma_v * rng.standard_normal((count, 3))
    positions, velocities = _run(x0, v0, params, config, None, geom)
    return Trajectory(positions, velocities, config, params, source_id, None)


def sample_prior(n_residues: int, config: SimConfig, rng=None) -> PhaseState:
    """Draw ``(z, v)`` from the extended-strand terminal distribution at t = 0."""
    if n_residues < 2:
        raise ShapeMismatch("the prior needs at least 2 residues")
    rng = _rng(rng, config)
    mask = default_mask(n_residues)
    z = draw_beta_angles(n_residues, config, rng)
    v = np.where(mask, config.sigma_v * rng.standard_normal((n_residues, 6)), 0.0)
    return PhaseState(z, v, 0.0, mask)


def interpolate_state(traj: Trajectory, t: float):
    """Linear interpolation of the stored states at flow time ``t``."""
    if not 0.0 <= t <= 1.0:
        raise OutOfRange(f"t = {t} outside [0, 1]")
    pos = (traj.start_time - t) * traj.config.n_steps
    last = traj.n_states - 1
    if pos < -1e-9 or pos > last + 1e-9:
        raise OutOfRange(f"t = {t} is outside the stored trajectory span")
    lo = min(max(int(math.floor(pos + 1e-12)), 0), last)
    frac = pos - lo
    if lo == last or abs(frac) < 1e-12:
        return traj.positions[lo].copy(), traj.velocities[lo].copy()
    hi = lo + 1
    if traj.variant == "angular":
        dz = wrap_angle(traj.positions[hi] - traj.positions[lo])
        z = wrap_angle(traj.positions[lo] + frac * dz)
        z = np.where(traj.mask, z, 0.0)
    else:
        z = traj.positions[lo] + frac * (traj.positions[hi] - traj.positions[lo])
    v = traj.velocities[lo] + frac * (traj.velocities[hi] - traj.velocities[lo])
    return z, v


def sample_transition(traj: Trajectory, t: float, sigma_z: float, sigma_v: float, rng=None) -> PhaseState:
    """Draw from the Gaussian transition kernel centered on the simulated path."""
    rng = _rng(rng, traj.config)
    z, v = interpolate_state(traj, t)
    z = z + sigma_z * rng.standard_normal(z.shape)
    v = v + sigma_v * rng.standard_normal(v.shape)
    if traj.variant == "angular":
        z = np.where(traj.mask, wrap_angle(z), 0.0)
        v = np.where(traj.mask, v, 0.0)
    return PhaseState(z, v, float(t), traj.mask)
