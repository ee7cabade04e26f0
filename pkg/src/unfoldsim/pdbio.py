"""Fixed-width PDB backbone reading and writing, plus the angles CSV."""

from __future__ import annotations

import csv
import io

import numpy as np

from .errors import EmptyChain, IncompleteResidue, MalformedRecord
from .geometry import ANGLE_NAMES, ATOM_NAMES, AngularChain, BackboneCoords

ANGLES_HEADER = ("residue",) + ANGLE_NAMES


def _coord(line: str, start: int, line_number: int) -> float:
    field = line[start:start + 8]
    try:
        return float(field)
    except ValueError:
        raise MalformedRecord(f"bad coordinate field {field!r} in columns {start + 1}-{start + 8}",
                              line_number) from None


def parse_pdb_backbone(text: str, chain_id: str = None) -> BackboneCoords:
    """Backbone N, CA, C, O of one chain from PDB text.

    Reads ATOM records of the first model only.  Without ``chain_id`` the
    first chain seen is used.  Of alternate locations the blank one and the
    first letter seen are accepted, and a repeated atom keeps its first
    occurrence.  Reading of the chain stops at its TER record.
    """
    residues = {}
    order = []
    chosen = chain_id
    altloc = None
    in_model = False
    done_chain = False
    for line_number, line in enumerate(text.splitlines(), start=1):
        record = line[:6]
        if record.startswith("MODEL"):
            if in_model or order:
                break
            in_model = True
            continue
        if record.startswith("ENDMDL"):
            if order:
                break
            continue
        if record.startswith("TER"):
            if order and (len(line) < 22 or line[21] == chosen or line[21] == " "):
                done_chain = True
            continue
        if record != "ATOM  ":
            continue
        if len(line) < 54:
            raise MalformedRecord(f"ATOM record too short ({len(line)} columns, need 54)", line_number)
        chain = line[21]
        if chosen is None:
            chosen = chain
        if chain != chosen:
            continue
        if done_chain:
            break
        name = line[12:16].strip()
        if name not in ATOM_NAMES:
            continue
        loc = line[16]
        if loc != " ":
            if altloc is None:
                altloc = loc
            elif loc != altloc:
                continue
        seq = line[22:26]
        try:
            int(seq)
        except ValueError:
            raise MalformedRecord(f"bad residue number {seq!r}", line_number) from None
        key = (seq, line[26] if len(line) > 26 else " ")
        xyz = (_coord(line, 30, line_number), _coord(line, 38, line_number), _coord(line, 46, line_number))
        if key not in residues:
            residues[key] = {}
            order.append(key)
        residues[key].setdefault(name, xyz)
    if not order:
        where = f"chain {chain_id!r}" if chain_id else "input"
        raise EmptyChain(f"no ATOM records found for {where}")
    atoms = np.empty((len(order), 4, 3))
    for index, key in enumerate(order):
        found = residues[key]
        missing = [a for a in ATOM_NAMES if a not in found]
        if missing:
            raise IncompleteResidue(f"(resSeq {key[0].strip()}) missing atoms {', '.join(missing)}", index)
        atoms[index] = [found[a] for a in ATOM_NAMES]
    return BackboneCoords(atoms)


def read_pdb_backbone(path, chain_id: str = None) -> BackboneCoords:
    with open(path) as fh:
        return parse_pdb_backbone(fh.read(), chain_id)


def format_pdb(coords: BackboneCoords, chain_id: str = "A", res_name: str = "GLY") -> str:
    """Minimal PDB text: backbone ATOM records closed by TER and END."""
    lines = []
    serial = 1
    for i, residue in enumerate(coords.atoms):
        for name, (x, y, z) in zip(ATOM_NAMES, residue):
            lines.append(
                f"ATOM  {serial:5d} {name:^4s} {res_name:>3s} {chain_id}{i + 1:4d}    "
                f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}          {name[0]:>2s}"
            )
            serial += 1
    lines.append(f"TER   {serial:5d}      {res_name:>3s} {chain_id}{coords.n_residues:4d}")
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_angles_csv(chain: AngularChain, fh) -> None:
    """One row per residue, radians at 17 significant digits; masked entries are 0."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ANGLES_HEADER)
    for i, row in enumerate(chain.angles):
        writer.writerow([i] + [f"{v:.17g}" for v in row])


def angles_csv_text(chain: AngularChain) -> str:
    buf = io.StringIO()
    write_angles_csv(chain, buf)
    return buf.getvalue()


def parse_angles_csv(text: str) -> AngularChain:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(h.strip() for h in rows[0]) != ANGLES_HEADER:
        raise MalformedRecord(f"angles CSV header must be {','.join(ANGLES_HEADER)}", 1)
    values = []
    for line_number, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 7:
            raise MalformedRecord(f"expected 7 fields, got {len(row)}", line_number)
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError:
            raise MalformedRecord("non-numeric angle", line_number) from None
    if not values:
        raise EmptyChain("angles CSV has no residues")
    return AngularChain(np.array(values))
