"""Backbone geometry: angles, NeRF reconstruction and residue frames.

All lengths are in Angstrom and all angles in radians.  Per-residue angle
rows are ordered ``(phi, psi, omega, theta1, theta2, theta3)`` and follow the
index convention where every angle stored on residue ``i`` (except theta1)
couples residue ``i`` to residue ``i + 1``:

    psi_i    = dihedral(N_i, CA_i, C_i, N_i+1)
    phi_i    = dihedral(C_i, N_i+1, CA_i+1, C_i+1)
    omega_i  = dihedral(CA_i, C_i, N_i+1, CA_i+1)
    theta1_i = angle(N_i, CA_i, C_i)
    theta2_i = angle(CA_i, C_i, N_i+1)
    theta3_i = angle(C_i, N_i+1, CA_i+1)

so on the last residue only theta1 is defined.  Undefined entries are
stored as 0 and flagged in ``AngularChain.mask``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._kernels import nerf_chain, seed_atoms
from .errors import DegenerateGeometry, InvalidTorsion, ShapeMismatch

PHI, PSI, OMEGA, THETA1, THETA2, THETA3 = range(6)
ANGLE_NAMES = ("phi", "psi", "omega", "theta1", "theta2", "theta3")
ATOM_NAMES = ("N", "CA", "C", "O")

_EPS_DEGENERATE = 1e-12


def wrap_angle(x):
    """Map angles onto (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def _as_vec3(v, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ShapeMismatch(f"{name} must have shape (3,), got {v.shape}")
    return v


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Rotation:
    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ShapeMismatch(f"rotation must be 3x3, got {m.shape}")
        if not np.allclose(m.T @ m, np.eye(3), rtol=0.0, atol=1e-9):
            raise ValueError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > 1e-9:
            raise ValueError("rotation matrix must have determinant +1")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            return Rotation(self.m @ other.m)
        return self.m @ np.asarray(other, dtype=float)

    @property
    def T(self):
        return Rotation(self.m.T)


@dataclass(frozen=True)
class Frame:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        if not isinstance(self.rotation, Rotation):
            object.__setattr__(self, "rotation", Rotation(self.rotation))
        t = _as_vec3(self.translation, "translation").copy()
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(Rotation.identity(), np.zeros(3))

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.m.T + self.translation

    def compose(self, other: "Frame") -> "Frame":
        """``self * other``: apply ``other`` first, then ``self``."""
        return Frame(
            Rotation(self.rotation.m @ other.rotation.m),
            self.rotation.m @ other.translation + self.translation,
        )

    def inverse(self) -> "Frame":
        rt = self.rotation.m.T
        return Frame(Rotation(rt), -rt @ self.translation)


@dataclass(frozen=True)
class IdealGeometry:
    """Idealized Alanine reference atoms and the bond lengths derived from them."""

    n_star: tuple = (-0.525, 1.363, 0.0)
    ca_star: tuple = (0.0, 0.0, 0.0)
    c_star: tuple = (1.526, 0.0, 0.0)
    o_star: tuple = (0.627, 1.062, 0.0)
    x_varphi: tuple = (1.526, 0.0, 0.0)
    # C-N peptide bond; not implied by the frame constants (Engh-Huber value)
    peptide_bond: float = 1.329
    oxygen_torsion: tuple = (1.0, 0.0)

    def __post_init__(self):
        if tuple(self.ca_star) != (0.0, 0.0, 0.0):
            raise ValueError("ca_star must be the origin")
        if self.peptide_bond <= 0:
            raise ValueError("peptide_bond must be positive")

    @cached_property
    def n_ca_bond(self) -> float:
        return float(np.linalg.norm(np.subtract(self.n_star, self.ca_star)))

    @cached_property
    def ca_c_bond(self) -> float:
        return float(np.linalg.norm(np.subtract(self.c_star, self.ca_star)))

    @cached_property
    def ideal_theta1(self) -> float:
        return bond_angle(self.n_star, self.ca_star, self.c_star)


DEFAULT_GEOMETRY = IdealGeometry()


def default_mask(n_residues: int) -> np.ndarray:
    mask = np.ones((n_residues, 6), dtype=bool)
    mask[-1, :] = False
    mask[-1, THETA1] = True
    return mask


@dataclass(frozen=True)
class AngularChain:
    """Per-residue six-angle internal coordinates with a validity mask."""

    angles: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.array(self.angles, dtype=float)
        if a.ndim != 2 or a.shape[1] != 6 or a.shape[0] < 1:
            raise ShapeMismatch(f"angles must have shape (N, 6), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("angles must be finite")
        if np.any(a <= -np.pi) or np.any(a > np.pi):
            raise ValueError("angles must lie in (-pi, pi]")
        mask = default_mask(a.shape[0]) if self.mask is None else np.array(self.mask, dtype=bool)
        if mask.shape != a.shape:
            raise ShapeMismatch(f"mask shape {mask.shape} != angles shape {a.shape}")
        a = np.where(mask, a, 0.0)
        a.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_raw(cls, angles, mask=None):
        """Build a chain from unwrapped angles."""
        return cls(wrap_angle(angles), mask)

    def __len__(self):
        return self.angles.shape[0]

    @property
    def n_residues(self) -> int:
        return self.angles.shape[0]

    def __getattr__(self, name):
        if name in ANGLE_NAMES:
            return self.angles[:, ANGLE_NAMES.index(name)]
        raise AttributeError(name)


@dataclass(frozen=True)
class BackboneCoords:
    """Backbone atoms as an ``(N, 4, 3)`` array ordered N, CA, C, O."""

    atoms: np.ndarray

    def __post_init__(self):
        x = np.array(self.atoms, dtype=float)
        if x.ndim != 3 or x.shape[1:] != (4, 3) or x.shape[0] < 1:
            raise ShapeMismatch(f"atoms must have shape (N, 4, 3), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("coordinates must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "atoms", x)

    def __len__(self):
        return self.atoms.shape[0]

    @property
    def n_residues(self) -> int:
        return self.atoms.shape[0]

    @property
    def n(self):
        return self.atoms[:, 0]

    @property
    def ca(self):
        return self.atoms[:, 1]

    @property
    def c(self):
        return self.atoms[:, 2]

    @property
    def o(self):
        return self.atoms[:, 3]

    def translated(self, t) -> "BackboneCoords":
        return BackboneCoords(self.atoms + _as_vec3(t, "translation"))

    def transformed(self, frame: Frame) -> "BackboneCoords":
        return BackboneCoords(frame.apply(self.atoms))


# --------------------------------------------------------------------------
# Angles
# --------------------------------------------------------------------------


def _dihedral_batch(a, b, c, d):
    """Vectorized dihedral; returns (angles, min_normal_norm) per row."""
    b1 = b - a
    b2 = c - b
    b3 = d - c
    l1 = np.linalg.norm(b1, axis=-1)
    l2 = np.linalg.norm(b2, axis=-1)
    l3 = np.linalg.norm(b3, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        b2_hat = b2 / l2[..., None]
        n1 = np.cross(b1, b2) / (l1 * l2)[..., None]
        n2 = np.cross(b2, b3) / (l2 * l3)[..., None]
        y = np.sum(b2_hat * np.cross(n1, n2), axis=-1)
        x = np.sum(n1 * n2, axis=-1)
        ang = np.arctan2(y, x)
    ang = np.where(ang <= -np.pi, ang + 2.0 * np.pi, ang)
    size = np.minimum(np.linalg.norm(n1, axis=-1), np.linalg.norm(n2, axis=-1))
    size = np.where(np.isfinite(size), size, 0.0)
    return ang, size


def _bond_angle_batch(a, b, c):
    u = a - b
    v = c - b
    lu = np.linalg.norm(u, axis=-1)
    lv = np.linalg.norm(v, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.sum(u * v, axis=-1) / (lu * lv)
    ang = np.arccos(np.clip(cos, -1.0, 1.0))
    return ang, np.minimum(lu, lv)


def dihedral(a, b, c, d) -> float:
    """Signed dihedral of four points in (-pi, pi]."""
    a, b, c, d = (_as_vec3(v) for v in (a, b, c, d))
    ang, size = _dihedral_batch(a, b, c, d)
    if not size >= _EPS_DEGENERATE:
        raise DegenerateGeometry("collinear or coincident atoms in dihedral")
    return float(ang)


def bond_angle(a, b, c) -> float:
    """Angle at ``b`` between arms ``b->a`` and ``b->c``, in [0, pi]."""
    a, b, c = (_as_vec3(v) for v in (a, b, c))
    ang, size = _bond_angle_batch(a, b, c)
    if not size >= _EPS_DEGENERATE:
        raise DegenerateGeometry("zero-length arm in bond angle")
    return float(ang)


def extract_angles(coords: BackboneCoords) -> AngularChain:
    n, ca, c = coords.n, coords.ca, coords.c
    count = coords.n_residues
    if count < 2:
        raise ShapeMismatch("extract_angles needs at least 2 residues")
    out = np.zeros((count, 6))
    checks = []

    psi, s = _dihedral_batch(n[:-1], ca[:-1], c[:-1], n[1:])
    checks.append(("psi", s))
    phi, s = _dihedral_batch(c[:-1], n[1:], ca[1:], c[1:])
    checks.append(("phi", s))
    omega, s = _dihedral_batch(ca[:-1], c[:-1], n[1:], ca[1:])
    checks.append(("omega", s))
    th1, s = _bond_angle_batch(n, ca, c)
    checks.append(("theta1", s))
    th2, s = _bond_angle_batch(ca[:-1], c[:-1], n[1:])
    checks.append(("theta2", s))
    th3, s = _bond_angle_batch(c[:-1], n[1:], ca[1:])
    checks.append(("theta3", s))

    for name, size in checks:
        bad = np.flatnonzero(~(size >= _EPS_DEGENERATE))
        if bad.size:
            raise DegenerateGeometry(f"degenerate atoms while computing {name}", residue=int(bad[0]))

    out[:-1, PHI] = phi
    out[:-1, PSI] = psi
    out[:-1, OMEGA] = omega
    out[:, THETA1] = th1
    out[:-1, THETA2] = th2
    out[:-1, THETA3] = th3
    # bond angles equal to pi would be fine, but (-pi, pi] excludes -pi only
    return AngularChain(out)


# --------------------------------------------------------------------------
# NeRF reconstruction
# --------------------------------------------------------------------------

# Atoms are placed in the order N, CA, C per residue step i -> i+1, using
# (theta2_i, psi_i), (theta3_i, omega_i) and (theta1_i+1, phi_i) respectively.


def nerf_backbone(angles: np.ndarray, geom: IdealGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Place N, CA, C for every residue by sequential NeRF; returns ``(N, 3, 3)``."""
    angles = np.ascontiguousarray(angles, dtype=float)
    # residue 0: CA at the origin, C on +x, N in the xy-plane at angle theta1
    seed = seed_atoms(angles[0, THETA1], geom.n_ca_bond, geom.ca_c_bond)
    bonds = np.array([geom.peptide_bond, geom.n_ca_bond, geom.ca_c_bond])
    return nerf_chain(angles, seed, bonds)


def _oxygens(backbone: np.ndarray, geom: IdealGeometry) -> np.ndarray:
    rots = _frames_from_points(backbone[:, 0], backbone[:, 1], backbone[:, 2])
    local = _torsion_oxygen(geom, geom.oxygen_torsion)
    return np.einsum("kij,j->ki", rots, local) + backbone[:, 1]


def nerf_reconstruct(chain: AngularChain, geom: IdealGeometry = DEFAULT_GEOMETRY) -> BackboneCoords:
    """Rebuild backbone coordinates from internal coordinates with ideal bonds.

    Residue 0 is placed in the identity frame (exactly the idealized atoms
    when its theta1 equals the ideal N-CA-C angle); O is attached through the
    residue frame with ``geom.oxygen_torsion``.
    """
    backbone = nerf_backbone(chain.angles, geom)
    atoms = np.concatenate([backbone, _oxygens(backbone, geom)[:, None, :]], axis=1)
    return BackboneCoords(atoms)


# --------------------------------------------------------------------------
# Frames
# --------------------------------------------------------------------------


def _frames_from_points(n, ca, c):
    """Gram-Schmidt rotations for stacked (.., 3) atom arrays."""
    v1 = c - ca
    v2 = n - ca
    e1 = v1 / np.linalg.norm(v1, axis=-1, keepdims=True)
    u2 = v2 - e1 * np.sum(e1 * v2, axis=-1, keepdims=True)
    e2 = u2 / np.linalg.norm(u2, axis=-1, keepdims=True)
    e3 = np.cross(e1, e2)
    return np.stack([e1, e2, e3], axis=-1)


def atoms_to_frame(n, ca, c) -> Frame:
    n, ca, c = (_as_vec3(v) for v in (n, ca, c))
    v1 = c - ca
    v2 = n - ca
    l1 = np.linalg.norm(v1)
    if l1 < _EPS_DEGENERATE:
        raise DegenerateGeometry("C coincides with CA")
    u2 = v2 - v1 / l1 * np.dot(v1 / l1, v2)
    if np.linalg.norm(u2) < _EPS_DEGENERATE:
        raise DegenerateGeometry("N, CA, C are collinear")
    rot = _frames_from_points(n, ca, c)
    # re-orthonormalize against round-off so Rotation validation cannot trip
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    return Frame(Rotation(rot), ca)


def _torsion_oxygen(geom: IdealGeometry, varphi) -> np.ndarray:
    c1, c2 = varphi
    rx = np.array([[1.0, 0.0, 0.0], [0.0, c1, -c2], [0.0, c2, c1]])
    return rx @ np.asarray(geom.o_star, dtype=float) + np.asarray(geom.x_varphi, dtype=float)


def frame_to_atoms(frame: Frame, varphi=(1.0, 0.0), geom: IdealGeometry = DEFAULT_GEOMETRY):
    """Return ``(n, ca, c, o)`` for a residue frame and an oxygen torsion."""
    varphi = np.asarray(varphi, dtype=float)
    if varphi.shape != (2,) or abs(varphi @ varphi - 1.0) > 1e-9:
        raise InvalidTorsion(f"torsion {varphi.tolist()} is not on the unit circle")
    ref = np.array([geom.n_star, geom.ca_star, geom.c_star], dtype=float)
    n, ca, c = frame.apply(ref)
    o = frame.apply(_torsion_oxygen(geom, varphi))
    return n, ca, c, o


def backbone_frames(coords: BackboneCoords) -> np.ndarray:
    """Per-residue rotation matrices ``(N, 3, 3)``; translations are ``coords.ca``."""
    return _frames_from_points(coords.n, coords.ca, coords.c)


def center_chain(coords: BackboneCoords) -> BackboneCoords:
    """Translate so the mean CA position is the origin."""
    return BackboneCoords(coords.atoms - coords.ca.mean(axis=0))


def kabsch(mobile, reference):
    """Proper rotation ``R`` and translation ``t`` minimizing ``|mobile @ R.T + t - reference|``.

    Reflections are excluded by flipping the smallest singular direction.
    """
    mobile = np.asarray(mobile, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if mobile.shape != reference.shape or mobile.ndim != 2 or mobile.shape[1] != 3:
        raise ShapeMismatch(f"kabsch needs matching (N, 3) arrays, got {mobile.shape} and {reference.shape}")
    cm = mobile.mean(axis=0)
    cr = reference.mean(axis=0)
    h = (mobile - cm).T @ (reference - cr)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    fix = np.diag([1.0, 1.0, d])
    rot = vt.T @ fix @ u.T
    return rot, cr - rot @ cm
