"""Fixed-column PDB reader.

Only the first MODEL is read. Waters and non-polymer HETATM groups are
dropped; ligands enter the pipeline through MOL files instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyStructure, MalformedRecord
from ..tables import ELEMENT_LOOKUP, MODIFIED_RESIDUES, THREE_TO_ONE, WATER_NAMES

log = logging.getLogger(__name__)


@dataclass
class Atom:
    name: str
    element: str
    xyz: np.ndarray
    is_heavy: bool


@dataclass
class Residue:
    name: str
    seq_number: int
    insertion_code: str
    atoms: list[Atom]

    def atom(self, name: str) -> Atom | None:
        for a in self.atoms:
            if a.name == name:
                return a
        return None

    @property
    def is_complete(self) -> bool:
        return self.atom("CA") is not None


@dataclass
class Chain:
    chain_id: str
    residues: list[Residue]

    @property
    def sequence(self) -> str:
        return "".join(THREE_TO_ONE.get(r.name, "X") for r in self.residues)


@dataclass
class ProteinStructure:
    chains: list[Chain]
    name: str = ""
    _flat: list[Residue] | None = field(default=None, repr=False, compare=False)

    @property
    def residues(self) -> list[Residue]:
        """All residues over all chains, in file order. Residue ids index this list."""
        if self._flat is None:
            self._flat = [r for c in self.chains for r in c.residues]
        return self._flat

    @property
    def sequences(self) -> dict[str, str]:
        return {c.chain_id: c.sequence for c in self.chains}

    def atom_table(self):
        """Flattened atom arrays: coords (n,3), residue index, element, name, heavy mask."""
        coords, res_idx, elements, names = [], [], [], []
        for ri, res in enumerate(self.residues):
            for a in res.atoms:
                coords.append(a.xyz)
                res_idx.append(ri)
                elements.append(a.element)
                names.append(a.name)
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
        elements = np.asarray(elements, dtype=object)
        heavy = np.array([e != "H" for e in elements], dtype=bool)
        return coords, np.asarray(res_idx, dtype=np.int64), elements, np.asarray(names, dtype=object), heavy


def _element(line: str, atom_name: str) -> str:
    sym = line[76:78].strip() if len(line) >= 78 else ""
    if not sym:
        # polymer atoms: element is the first letter of the name
        sym = next((ch for ch in atom_name if ch.isalpha()), "")
    return ELEMENT_LOOKUP.get(sym.upper(), sym.capitalize() or "X")


def parse_pdb(data: bytes | str, name: str = "") -> ProteinStructure:
    """Parse PDB text into chains of residues.

    Alternate locations keep the highest-occupancy conformer per atom; equal
    occupancies resolve to altloc ``A`` (else the first seen).
    """
    text = data.decode("latin-1") if isinstance(data, (bytes, bytearray)) else data
    # (chain, resseq, icode) -> [resname, {atom_name: (occ, altloc_rank, Atom)}]
    residues: dict[tuple, list] = {}
    chain_order: list[str] = []
    seen_model = False
    for lineno, line in enumerate(text.splitlines(), 1):
        rec = line[:6]
        if rec.startswith("MODEL"):
            if seen_model:
                break
            seen_model = True
            continue
        if rec.startswith("ENDMDL"):
            break
        if rec != "ATOM  " and rec != "HETATM":
            continue
        if len(line) < 54:
            raise MalformedRecord(f"line {lineno}: record shorter than coordinate columns")
        resname = line[17:20].strip()
        if rec == "HETATM":
            if resname in WATER_NAMES or resname not in MODIFIED_RESIDUES:
                continue
            resname = MODIFIED_RESIDUES[resname]
        try:
            xyz = np.array([float(line[30:38]), float(line[38:46]), float(line[46:54])])
            resseq = int(line[22:26])
        except ValueError as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from None
        if not np.all(np.isfinite(xyz)):
            raise MalformedRecord(f"line {lineno}: non-finite coordinate")
        try:
            occ = float(line[54:60]) if line[54:60].strip() else 1.0
        except ValueError:
            occ = 1.0
        atom_name = line[12:16].strip()
        altloc = line[16]
        chain_id = line[21]
        icode = line[26].strip() if len(line) > 26 else ""
        element = _element(line, line[12:16])
        atom = Atom(atom_name, element, xyz, element != "H")

        key = (chain_id, resseq, icode)
        if key not in residues:
            residues[key] = [resname, {}]
            if chain_id not in chain_order:
                chain_order.append(chain_id)
        slot = residues[key][1]
        rank = 0 if altloc in (" ", "A") else 1
        prev = slot.get(atom_name)
        if prev is None or occ > prev[0] or (occ == prev[0] and rank < prev[1]):
            slot[atom_name] = (occ, rank, atom)

    if not residues:
        raise EmptyStructure("no ATOM records")

    chains = []
    for cid in chain_order:
        keys = sorted((k for k in residues if k[0] == cid), key=lambda k: (k[1], k[2]))
        res_list = []
        for k in keys:
            resname, slot = residues[k]
            res = Residue(resname, k[1], k[2], [v[2] for v in slot.values()])
            if not res.is_complete:
                log.warning("residue %s%d%s in chain %s has no CA; flagged incomplete", resname, k[1], k[2], cid)
            res_list.append(res)
        chains.append(Chain(cid, res_list))
    return ProteinStructure(chains, name=name)


def write_pdb(p: ProteinStructure) -> str:
    """Minimal ATOM writer; used for synthetic fixtures."""
    lines = []
    serial = 1
    for chain in p.chains:
        for res in chain.residues:
            for a in res.atoms:
                nm = a.name if len(a.name) == 4 else f" {a.name:<3s}"
                lines.append(
                    f"ATOM  {serial:5d} {nm:4s} {res.name:>3s} {chain.chain_id:1s}{res.seq_number:4d}{res.insertion_code:1s}   "
                    f"{a.xyz[0]:8.3f}{a.xyz[1]:8.3f}{a.xyz[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          {a.element.upper():>2s}"
                )
                serial += 1
        lines.append("TER")
    lines.append("END")
    return "\n".join(lines) + "\n"
