"""Command-line entry point: ``unfoldsim <subcommand> ...``.

Exit codes: 0 success, 1 domain or I/O error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import load_config, resolve_seed
from .dynamics import Trajectory, simulate, simulate_cartesian
from .errors import UnfoldError
from .geometry import (
    _frames_from_points,
    backbone_frames,
    center_chain,
    extract_angles,
    nerf_backbone,
    nerf_reconstruct,
    wrap_angle,
)
from .metrics import (
    energy_profile,
    kabsch_rmsd,
    runtime_benchmark,
    scaling_exponent,
    trajectory_collisions,
    write_benchmark_csv,
)
from .pdbio import angles_csv_text, format_pdb, parse_angles_csv, read_pdb_backbone
from .targets import ca_state_at, r3_velocity_at, so3_targets_for_pair
from .trajio import MAGIC, atomic_write_bytes, read_trajectory, write_trajectory

log = logging.getLogger("unfoldsim")

TRAJ_SUFFIX = ".uftr"


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _simulate_file(pdb_path, out_path, run_config, seed, variant, chain_id):
    coords = read_pdb_backbone(pdb_path, chain_id)
    cfg = replace(run_config.sim_config(), seed=seed, variant=variant)
    params = run_config.potential_params()
    source = os.path.basename(pdb_path)
    if variant == "angular":
        traj = simulate(extract_angles(coords), params, cfg, source_id=source)
    else:
        traj = simulate_cartesian(coords, params, cfg, source_id=source)
    write_trajectory(traj, out_path)
    return out_path


def cmd_simulate(args) -> int:
    run_config = load_config(args.config)
    seed = resolve_seed(run_config, args.seed)
    variant = args.variant or run_config.variant
    if os.path.isdir(args.input):
        names = sorted(n for n in os.listdir(args.input) if n.lower().endswith((".pdb", ".ent")))
        os.makedirs(args.out, exist_ok=True)
        jobs = [
            (os.path.join(args.input, n), os.path.join(args.out, os.path.splitext(n)[0] + TRAJ_SUFFIX))
            for n in names
        ]
        if args.jobs <= 1:
            for pdb, out in jobs:
                _simulate_file(pdb, out, run_config, seed, variant, args.chain)
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(_simulate_file, pdb, out, run_config, seed, variant, args.chain)
                           for pdb, out in jobs]
                for f in futures:
                    f.result()
        log.info("wrote %d trajectories to %s", len(jobs), args.out)
        return 0
    _simulate_file(args.input, args.out, run_config, seed, variant, args.chain)
    return 0


# --------------------------------------------------------------------------
# angles / reconstruct
# --------------------------------------------------------------------------


def cmd_angles(args) -> int:
    chain = extract_angles(read_pdb_backbone(args.pdb, args.chain))
    atomic_write_bytes(args.out, angles_csv_text(chain).encode())
    return 0


def cmd_reconstruct(args) -> int:
    with open(args.angles) as fh:
        chain = parse_angles_csv(fh.read())
    atomic_write_bytes(args.out, format_pdb(nerf_reconstruct(chain)).encode())
    return 0


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


def cmd_metrics(args) -> int:
    traj = read_trajectory(args.traj)
    run_config = load_config(args.config)
    threshold = args.threshold if args.threshold is not None else run_config.collision_threshold
    window = args.window if args.window is not None else run_config.exclusion_window
    if not (args.collisions or args.energy or args.rmsd_against):
        args.collisions = True
    columns = {"step": np.arange(traj.n_states)}
    if args.collisions:
        columns["collisions"] = trajectory_collisions(traj, threshold, window).counts
    if args.energy:
        energy = energy_profile(traj)
        columns["potential"], columns["kinetic"], columns["total"] = energy.T
    if args.rmsd_against:
        ref = read_pdb_backbone(args.rmsd_against).ca
        ca = traj.ca_positions()
        columns["rmsd"] = np.array([kabsch_rmsd(x, ref) for x in ca])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(columns))
        for row in zip(*columns.values()):
            writer.writerow([int(v) if isinstance(v, (np.integer, int)) else repr(float(v)) for v in row])
    return 0


# --------------------------------------------------------------------------
# fm-target
# --------------------------------------------------------------------------


def _frames_of(traj: Trajectory, index: int) -> np.ndarray:
    backbone = nerf_backbone(traj.positions[index])
    return _frames_from_points(backbone[:, 0], backbone[:, 1], backbone[:, 2])


def fm_target(traj: Trajectory, t: float, method: str):
    """CA state, translation target and rotation target at flow time ``t``.

    Rotations run from the state at t = 0 (last stored) to the one at t = 1
    (first stored); translations differentiate the stored CA track.
    """
    vel = r3_velocity_at(traj, t, method)
    x = ca_state_at(traj, t)
    if traj.variant == "angular":
        r1 = _frames_of(traj, 0)
        r0 = _frames_of(traj, traj.n_states - 1)
        pairs = [so3_targets_for_pair(a, b, t) for a, b in zip(r0, r1)]
        rot = np.stack([p[1] for p in pairs])
    else:
        rot = np.zeros_like(vel)
    return x, vel, rot


def cmd_fm_target(args) -> int:
    traj = read_trajectory(args.traj)
    method = {"fd": "finite-diff", "spline": "cubic-spline"}[args.method]
    x, vel, rot = fm_target(traj, args.t, method)
    cfg = replace(traj.config, variant="cartesian")
    params = replace(traj.params, target=None)
    out = Trajectory(x[None], vel[None], cfg, params, traj.source_id, None, start_time=float(args.t))
    write_trajectory(out, args.out)
    csv_path = args.csv or os.path.splitext(args.out)[0] + ".csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["residue", "t", "x", "y", "z", "vx", "vy", "vz", "wx", "wy", "wz"])
        for i in range(x.shape[0]):
            writer.writerow([i, repr(float(args.t))] + [repr(float(v)) for v in (*x[i], *vel[i], *rot[i])])
    return 0


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def _validate_trajectory(path) -> list:
    traj = read_trajectory(path)
    problems = []
    if not (np.all(np.isfinite(traj.positions)) and np.all(np.isfinite(traj.velocities))):
        problems.append("non-finite values in states")
    if traj.variant == "angular":
        z = traj.positions
        if np.any(z <= -np.pi) or np.any(z > np.pi):
            problems.append("angles outside (-pi, pi]")
        if np.any(z[:, ~traj.mask] != 0) or np.any(traj.velocities[:, ~traj.mask] != 0):
            problems.append("masked entries are nonzero")
        if np.any(np.abs(z[:, traj.mask] - wrap_angle(z[:, traj.mask])) > 1e-12):
            problems.append("angles are not canonically wrapped")
    return problems


def _validate_pdb(path) -> list:
    coords = read_pdb_backbone(path)
    problems = []
    chain = extract_angles(coords)
    rebuilt = nerf_reconstruct(chain)
    # bond angles and torsions are preserved, so the mismatch only reflects bond lengths
    rmsd = kabsch_rmsd(rebuilt.atoms[:, :3].reshape(-1, 3), coords.atoms[:, :3].reshape(-1, 3))
    log.info("ideal-geometry rebuild RMSD %.4f A", rmsd)
    centered = center_chain(coords)
    if not np.allclose(centered.ca.mean(axis=0), 0.0, atol=1e-9):
        problems.append("centering failed")
    frames = backbone_frames(coords)
    err = np.abs(np.einsum("kji,kjl->kil", frames, frames) - np.eye(3)).max()
    if err > 1e-9:
        problems.append(f"residue frames are not orthonormal ({err:.2e})")
    return problems


def cmd_validate(args) -> int:
    with open(args.path, "rb") as fh:
        head = fh.read(4)
    problems = _validate_trajectory(args.path) if head == MAGIC else _validate_pdb(args.path)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return 1
    print("ok")
    return 0


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------


def cmd_bench(args) -> int:
    lengths = [int(v) for v in args.lengths.split(",") if v.strip()]
    run_config = load_config(args.config)
    timings = runtime_benchmark(lengths, run_config.potential_params(), run_config.sim_config(), args.repeats)
    write_benchmark_csv(timings, args.out)
    for n in lengths:
        print(f"{n}\t{timings[n]:.4f}s")
    if len(lengths) >= 2:
        print(f"scaling exponent {scaling_exponent(timings):.2f}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unfoldsim", description="Backbone unfolding simulation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and defaulted config keys")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="forward unfolding simulation of a PDB file or directory")
    p.add_argument("input")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("angular", "cartesian"))
    p.add_argument("--seed", type=int)
    p.add_argument("--chain")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("angles", help="dump internal angles of a PDB backbone")
    p.add_argument("pdb")
    p.add_argument("--out", required=True)
    p.add_argument("--chain")
    p.set_defaults(func=cmd_angles)

    p = sub.add_parser("reconstruct", help="rebuild a backbone PDB from an angles CSV")
    p.add_argument("angles")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("metrics", help="per-step trajectory metrics as CSV")
    p.add_argument("traj")
    p.add_argument("--collisions", action="store_true")
    p.add_argument("--energy", action="store_true")
    p.add_argument("--rmsd-against")
    p.add_argument("--threshold", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fm-target", help="flow-matching state and velocity target at flow time t")
    p.add_argument("traj")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--method", choices=("spline", "fd"), default="fd")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_fm_target)

    p = sub.add_parser("validate", help="check a trajectory or PDB file")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="runtime against chain length")
    p.add_argument("--lengths", default="64,128,256")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UnfoldError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
