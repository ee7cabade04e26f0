"""Compiled inner loops for NeRF placement and its adjoint."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _place(pts, ia, bond, ct, st, cp, sp):
    # place pts[ia + 3] from pts[ia], pts[ia + 1], pts[ia + 2] (a, b, c)
    # bond frame at c: x along b->c, z normal to (a, b, c), y = z x x
    ib, ic = ia + 1, ia + 2
    bcx, bcy, bcz = pts[ic, 0] - pts[ib, 0], pts[ic, 1] - pts[ib, 1], pts[ic, 2] - pts[ib, 2]
    inv = 1.0 / math.sqrt(bcx * bcx + bcy * bcy + bcz * bcz)
    bcx *= inv
    bcy *= inv
    bcz *= inv
    abx, aby, abz = pts[ib, 0] - pts[ia, 0], pts[ib, 1] - pts[ia, 1], pts[ib, 2] - pts[ia, 2]
    nx = aby * bcz - abz * bcy
    ny = abz * bcx - abx * bcz
    nz = abx * bcy - aby * bcx
    inv = 1.0 / math.sqrt(nx * nx + ny * ny + nz * nz)
    nx *= inv
    ny *= inv
    nz *= inv
    mx = ny * bcz - nz * bcy
    my = nz * bcx - nx * bcz
    mz = nx * bcy - ny * bcx
    d0 = -bond * ct
    r = bond * st
    d1 = r * cp
    d2 = r * sp
    pts[ia + 3, 0] = pts[ic, 0] + d0 * bcx + d1 * mx + d2 * nx
    pts[ia + 3, 1] = pts[ic, 1] + d0 * bcy + d1 * my + d2 * ny
    pts[ia + 3, 2] = pts[ic, 2] + d0 * bcz + d1 * mz + d2 * nz


@njit(cache=True)
def nerf_chain(angles, seed, bonds):
    """Sequential NeRF: ``seed`` holds residue 0 (N, CA, C); bonds are (C-N, N-CA, CA-C)."""
    count = angles.shape[0]
    pts = np.empty((3 * count, 3))
    pts[:3] = seed
    c = np.cos(angles)
    s = np.sin(angles)
    for i in range(count - 1):
        k = 3 * i
        _place(pts, k, bonds[0], c[i, 4], s[i, 4], c[i, 1], s[i, 1])
        _place(pts, k + 1, bonds[1], c[i, 5], s[i, 5], c[i, 2], s[i, 2])
        _place(pts, k + 2, bonds[2], c[i + 1, 3], s[i + 1, 3], c[i, 0], s[i, 0])
    return pts.reshape(count, 3, 3)


@njit(cache=True)
def nerf_adjoint(backbone, atom_grad):
    """Angle gradient from atom gradients by downstream torque sums."""
    count = backbone.shape[0]
    total = 3 * count
    pts = backbone.reshape(total, 3)
    g = atom_grad.reshape(total, 3)
    out = np.zeros((count, 6))

    # seed theta1 rotates N0 about the CA0 normal of the (C0, CA0, N0) plane
    ux, uy, uz = pts[2, 0] - pts[1, 0], pts[2, 1] - pts[1, 1], pts[2, 2] - pts[1, 2]
    wx, wy, wz = pts[0, 0] - pts[1, 0], pts[0, 1] - pts[1, 1], pts[0, 2] - pts[1, 2]
    ax, ay, az = uy * wz - uz * wy, uz * wx - ux * wz, ux * wy - uy * wx
    inv = 1.0 / math.sqrt(ax * ax + ay * ay + az * az)
    tx = wy * g[0, 2] - wz * g[0, 1]
    ty = wz * g[0, 0] - wx * g[0, 2]
    tz = wx * g[0, 1] - wy * g[0, 0]
    out[0, 3] = (ax * tx + ay * ty + az * tz) * inv

    sx = sy = sz = 0.0  # sum of x_j x g_j over downstream atoms
    fx = fy = fz = 0.0  # sum of g_j over downstream atoms
    for m in range(total - 1, 2, -1):
        dx, dy, dz = pts[m, 0], pts[m, 1], pts[m, 2]
        gx, gy, gz = g[m, 0], g[m, 1], g[m, 2]
        sx += dy * gz - dz * gy
        sy += dz * gx - dx * gz
        sz += dx * gy - dy * gx
        fx += gx
        fy += gy
        fz += gz
        cx, cy, cz = pts[m - 1, 0], pts[m - 1, 1], pts[m - 1, 2]
        bx, by, bz = pts[m - 2, 0], pts[m - 2, 1], pts[m - 2, 2]
        # torque about the pivot c
        qx = sx - (cy * fz - cz * fy)
        qy = sy - (cz * fx - cx * fz)
        qz = sz - (cx * fy - cy * fx)
        # dihedral axis b -> c
        ex, ey, ez = cx - bx, cy - by, cz - bz
        d_tau = (ex * qx + ey * qy + ez * qz) / math.sqrt(ex * ex + ey * ey + ez * ez)
        # bond-angle axis (b - c) x (d - c)
        px, py, pz = bx - cx, by - cy, bz - cz
        rx, ry, rz = dx - cx, dy - cy, dz - cz
        nx, ny, nz = py * rz - pz * ry, pz * rx - px * rz, px * ry - py * rx
        d_theta = (nx * qx + ny * qy + nz * qz) / math.sqrt(nx * nx + ny * ny + nz * nz)

        k = m - 3
        i = k // 3
        kind = k - 3 * i
        if kind == 0:  # N_{i+1}: theta2_i, psi_i
            out[i, 4] += d_theta
            out[i, 1] += d_tau
        elif kind == 1:  # CA_{i+1}: theta3_i, omega_i
            out[i, 5] += d_theta
            out[i, 2] += d_tau
        else:  # C_{i+1}: theta1_{i+1}, phi_i
            out[i + 1, 3] += d_theta
            out[i, 0] += d_tau
    return out


TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap(x):
    return math.pi - (math.pi - x) % TWO_PI


@njit(cache=True)
def seed_atoms(theta1, n_ca, ca_c):
    seed = np.zeros((3, 3))
    seed[0, 0] = n_ca * math.cos(theta1)
    seed[0, 1] = n_ca * math.sin(theta1)
    seed[2, 0] = ca_c
    return seed


@njit(cache=True)
def repulsion_grad(x, eps):
    """Gradient of sum_{i<j} 1 / (r_ij + eps) with respect to ``x`` (N, 3)."""
    count = x.shape[0]
    g = np.zeros((count, 3))
    for i in range(count):
        xi, yi, zi = x[i, 0], x[i, 1], x[i, 2]
        for j in range(i + 1, count):
            dx = xi - x[j, 0]
            dy = yi - x[j, 1]
            dz = zi - x[j, 2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r == 0.0:
                continue
            s = r + eps
            c = 1.0 / (r * s * s)
            g[i, 0] -= c * dx
            g[i, 1] -= c * dy
            g[i, 2] -= c * dz
            g[j, 0] += c * dx
            g[j, 1] += c * dy
            g[j, 2] += c * dz
    return g


@njit(cache=True)
def angular_grad(z, mask, target, k1, k2, eps, wrap_target, bonds, all_atoms):
    count = z.shape[0]
    grad = np.zeros((count, 6))
    if k1 != 0.0:
        for i in range(count):
            for j in range(6):
                d = z[i, j] - target[i, j]
                if wrap_target:
                    d = wrap(d)
                grad[i, j] = k1 * d
    if k2 != 0.0:
        backbone = nerf_chain(z, seed_atoms(z[0, 3], bonds[1], bonds[2]), bonds)
        g_atoms = np.zeros((count, 3, 3))
        if all_atoms:
            g_atoms[:] = repulsion_grad(backbone.reshape(3 * count, 3), eps).reshape(count, 3, 3)
        elif count > 1:
            ca = np.ascontiguousarray(backbone[:, 1, :])
            g_atoms[:, 1, :] = repulsion_grad(ca, eps)
        grad += k2 * nerf_adjoint(backbone, g_atoms)
    for i in range(count):
        for j in range(6):
            if not mask[i, j]:
                grad[i, j] = 0.0
    return grad


@njit(cache=True)
def advance_angular(z, v, mask, target, k1, k2, eps, wrap_target, bonds, all_atoms,
                    gamma, dt, semi_implicit):
    count = z.shape[0]
    z_next = np.zeros((count, 6))
    for i in range(count):
        for j in range(6):
            if mask[i, j]:
                z_next[i, j] = wrap(z[i, j] + v[i, j] * dt)
    if semi_implicit:
        force = angular_grad(z_next, mask, target, k1, k2, eps, wrap_target, bonds, all_atoms)
    else:
        force = angular_grad(z, mask, target, k1, k2, eps, wrap_target, bonds, all_atoms)
    v_next = np.zeros((count, 6))
    for i in range(count):
        for j in range(6):
            if mask[i, j]:
                v_next[i, j] = v[i, j] - force[i, j] * dt - gamma * v[i, j] * dt
    return z_next, v_next


@njit(cache=True)
def advance_cartesian(x, v, target, k1, k2, eps, gamma, dt, semi_implicit):
    x_next = x + v * dt
    at = x_next if semi_implicit else x
    force = np.zeros_like(x)
    if k1 != 0.0:
        force += k1 * (at - target)
    if k2 != 0.0:
        force += k2 * repulsion_grad(at, eps)
    v_next = v - force * dt - gamma * v * dt
    return x_next, v_next


@njit(cache=True)
def _finite(a):
    for value in a.ravel():
        if not math.isfinite(value):
            return False
    return True


@njit(cache=True)
def run_angular(z0, v0, mask, target, k1, k2, eps, wrap_target, bonds, all_atoms,
                gamma, dt, n_steps, semi_implicit):
    """Integrate ``n_steps``; returns (positions, velocities, failed_step or 0)."""
    positions = np.zeros((n_steps + 1,) + z0.shape)
    velocities = np.zeros((n_steps + 1,) + z0.shape)
    positions[0] = z0
    velocities[0] = v0
    z, v = z0.copy(), v0.copy()
    for s in range(1, n_steps + 1):
        z, v = advance_angular(z, v, mask, target, k1, k2, eps, wrap_target, bonds, all_atoms,
                               gamma, dt, semi_implicit)
        if not (_finite(z) and _finite(v)):
            return positions, velocities, s
        positions[s] = z
        velocities[s] = v
    return positions, velocities, 0


@njit(cache=True)
def run_cartesian(x0, v0, target, k1, k2, eps, gamma, dt, n_steps, semi_implicit):
    positions = np.zeros((n_steps + 1,) + x0.shape)
    velocities = np.zeros((n_steps + 1,) + x0.shape)
    positions[0] = x0
    velocities[0] = v0
    x, v = x0.copy(), v0.copy()
    for s in range(1, n_steps + 1):
        x, v = advance_cartesian(x, v, target, k1, k2, eps, gamma, dt, semi_implicit)
        if not (_finite(x) and _finite(v)):
            return positions, velocities, s
        positions[s] = x
        velocities[s] = v
    return positions, velocities, 0
