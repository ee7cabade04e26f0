"""Binary trajectory container.

Layout, little-endian throughout::

    b"UFTR"  u16 version  u8 variant (0 angular, 1 cartesian)
    u32 n_residues  u32 n_steps (= stored frames - 1)  f64 dt  u64 seed
    f64 k1 k2 gamma epsilon sigma_beta sigma_v sigma_z
    u32 length + UTF-8 source_id
    -- extension --
    u8 integrator  u8 flags  f64[6] mu_beta (degrees)  f64 start_time
    u8 has_target  [f64 target array]  u32 CRC32 of the header so far
    -- body --
    per frame: positions, [angular: validity bitmask, ceil(6N/8) bytes], velocities
    -- footer --
    u32 CRC32 of the body

The bitmask is packed least-significant bit first over the row-major
``(N, 6)`` mask.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

from .dynamics import INTEGRATORS, VARIANTS, PotentialParams, SimConfig, Trajectory
from .errors import CorruptFile, UnsupportedVersion

MAGIC = b"UFTR"
VERSION = 1

_FIXED = struct.Struct("<4sHBIIdQ7d")
_EXT = struct.Struct("<BB6dd")
_U32 = struct.Struct("<I")

_FLAG_WRAP = 1
_FLAG_ALIGN = 2
_FLAG_BACKBONE = 4


def _width(variant: str) -> int:
    return 6 if variant == "angular" else 3


def encode_trajectory(traj: Trajectory) -> bytes:
    cfg, params = traj.config, traj.params
    count = traj.n_residues
    head = bytearray(_FIXED.pack(
        MAGIC, VERSION, VARIANTS.index(traj.variant), count, traj.n_states - 1, cfg.dt, cfg.seed,
        params.k1, params.k2, params.gamma, params.epsilon, cfg.sigma_beta, cfg.sigma_v, cfg.sigma_z,
    ))
    name = traj.source_id.encode("utf-8")
    head += _U32.pack(len(name)) + name
    flags = ((_FLAG_WRAP if params.wrap_target else 0) | (_FLAG_ALIGN if cfg.align_target else 0)
             | (_FLAG_BACKBONE if params.repulsion_atoms == "backbone" else 0))
    head += _EXT.pack(INTEGRATORS.index(cfg.integrator), flags, *cfg.mu_beta_deg, traj.start_time)
    if params.target is None:
        head += b"\x00"
    else:
        head += b"\x01" + np.ascontiguousarray(params.target, dtype="<f8").tobytes()
    head += _U32.pack(zlib.crc32(head))

    body = bytearray()
    bits = b""
    if traj.variant == "angular":
        bits = np.packbits(np.asarray(traj.mask, dtype=bool).ravel(), bitorder="little").tobytes()
    for pos, vel in zip(traj.positions, traj.velocities):
        body += np.ascontiguousarray(pos, dtype="<f8").tobytes()
        body += bits
        body += np.ascontiguousarray(vel, dtype="<f8").tobytes()
    return bytes(head) + bytes(body) + _U32.pack(zlib.crc32(body))


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory(traj: Trajectory, path) -> None:
    atomic_write_bytes(path, encode_trajectory(traj))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise CorruptFile(f"file ends inside {what}", self.pos)
        out = self.data[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: struct.Struct, what: str):
        return fmt.unpack(self.take(fmt.size, what))


def decode_trajectory(data: bytes) -> Trajectory:
    r = _Reader(data)
    if len(data) < 6:
        raise CorruptFile("file too short for a header", 0)
    if data[:4] != MAGIC:
        raise CorruptFile(f"bad magic {data[:4]!r}", 0)
    version = struct.unpack_from("<H", data, 4)[0]
    if version != VERSION:
        raise UnsupportedVersion(version, VERSION)
    (_, _, variant_tag, count, n_frames_m1, dt, seed,
     k1, k2, gamma, epsilon, s_beta, s_v, s_z) = r.unpack(_FIXED, "header")
    if variant_tag >= len(VARIANTS):
        raise CorruptFile(f"unknown variant tag {variant_tag}", 6)
    variant = VARIANTS[variant_tag]
    (name_len,) = r.unpack(_U32, "source id length")
    name_at = r.pos
    try:
        source_id = r.take(name_len, "source id").decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptFile("source id is not UTF-8", name_at) from None
    integrator, flags, *rest = r.unpack(_EXT, "header extension")
    mu_beta, start_time = tuple(rest[:6]), rest[6]
    width = _width(variant)
    has_target = r.take(1, "target flag")[0]
    target = None
    if has_target == 1:
        target = np.frombuffer(r.take(8 * count * width, "target"), dtype="<f8").reshape(count, width)
    elif has_target != 0:
        raise CorruptFile(f"bad target flag {has_target}", r.pos - 1)
    crc_at = r.pos
    (head_crc,) = r.unpack(_U32, "header checksum")
    if zlib.crc32(data[:crc_at]) != head_crc:
        raise CorruptFile("header CRC mismatch", crc_at)
    if integrator >= len(INTEGRATORS):
        raise CorruptFile(f"unknown integrator tag {integrator}", crc_at)

    body_start = r.pos
    block = 8 * count * width
    bits = (count * 6 + 7) // 8 if variant == "angular" else 0
    frame = 2 * block + bits
    n_frames = n_frames_m1 + 1
    expected = body_start + n_frames * frame + 4
    if len(data) != expected:
        offset = min(len(data), expected)
        raise CorruptFile(
            f"frame count mismatch: header says {n_frames} frames ({expected} bytes), file has {len(data)} bytes",
            offset,
        )
    body = data[body_start:expected - 4]
    (crc,) = _U32.unpack_from(data, expected - 4)
    if zlib.crc32(body) != crc:
        raise CorruptFile("body CRC mismatch", body_start)

    positions = np.empty((n_frames, count, width))
    velocities = np.empty((n_frames, count, width))
    mask = None
    for s in range(n_frames):
        at = s * frame
        positions[s] = np.frombuffer(body, "<f8", count * width, at).reshape(count, width)
        if bits:
            packed = np.frombuffer(body, np.uint8, bits, at + block)
            m = np.unpackbits(packed, count=count * 6, bitorder="little").astype(bool).reshape(count, 6)
            if mask is None:
                mask = m
            elif not np.array_equal(m, mask):
                raise CorruptFile("validity mask changes between frames", body_start + at + block)
        velocities[s] = np.frombuffer(body, "<f8", count * width, at + block + bits).reshape(count, width)

    try:
        config = SimConfig(
            n_steps=int(round(1.0 / dt)), sigma_beta=s_beta, sigma_v=s_v, sigma_z=s_z, seed=seed,
            variant=variant, integrator=INTEGRATORS[integrator], mu_beta_deg=mu_beta,
            align_target=bool(flags & _FLAG_ALIGN),
        )
        params = PotentialParams(
            k1=k1, k2=k2, gamma=gamma, epsilon=epsilon, target=None if target is None else target.copy(),
            wrap_target=bool(flags & _FLAG_WRAP),
            repulsion_atoms="backbone" if flags & _FLAG_BACKBONE else "ca",
        )
        return Trajectory(positions, velocities, config, params, source_id, mask, start_time)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise CorruptFile(f"header values are invalid: {exc}", 0) from exc


def read_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        return decode_trajectory(fh.read())
