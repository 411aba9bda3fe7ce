"""MOL V2000 connection-table reader."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadCountsLine, DuplicateBond, IndexOutOfRange, MalformedRecord, UnknownElement
from ..tables import ELEMENT_LOOKUP

# V2000 atom-block charge codes
_CHARGE_CODE = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}


@dataclass(eq=False)
class LigandRaw:
    elements: list[str]
    charges: np.ndarray  # (n,) int
    bonds: np.ndarray  # (m, 3) int: i, j (0-based), order in {1,2,3,4}
    coords: np.ndarray | None = None
    name: str = ""

    @property
    def n_atoms(self) -> int:
        return len(self.elements)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)


def _int(field: str, what: str) -> int:
    try:
        return int(field)
    except ValueError:
        raise MalformedRecord(f"bad {what}: {field!r}") from None


def parse_mol(data: bytes | str) -> LigandRaw:
    """Parse the first molecule of a MOL/SDF V2000 block.

    Aromatic bonds keep order 4. ``M  CHG`` property lines override the
    atom-block charge codes.
    """
    text = data.decode("latin-1") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if len(lines) < 4:
        raise BadCountsLine("file too short for a MOL header")
    counts = lines[3]
    if "V2000" not in counts:
        raise BadCountsLine(f"counts line lacks V2000 tag: {counts!r}")
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError:
        parts = counts.split()
        try:
            n_atoms, n_bonds = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise BadCountsLine(f"unreadable counts line: {counts!r}") from None
    if n_atoms < 0 or n_bonds < 0:
        raise BadCountsLine("negative counts")
    if len(lines) < 4 + n_atoms + n_bonds:
        raise BadCountsLine(f"counts line promises {n_atoms} atoms and {n_bonds} bonds but block is truncated")

    elements, charges, coords = [], [], []
    for i in range(n_atoms):
        line = lines[4 + i]
        if len(line) >= 34:
            xyz, sym = (line[0:10], line[10:20], line[20:30]), line[31:34].strip()
            code = line[36:39].strip() if len(line) >= 39 else "0"
        else:
            parts = line.split()
            if len(parts) < 4:
                raise MalformedRecord(f"atom {i + 1}: too few fields")
            xyz, sym, code = parts[:3], parts[3], parts[5] if len(parts) > 5 else "0"
        try:
            coords.append([float(v) for v in xyz])
        except ValueError:
            raise MalformedRecord(f"atom {i + 1}: bad coordinates") from None
        canon = ELEMENT_LOOKUP.get(sym.upper())
        if canon is None:
            raise UnknownElement(f"atom {i + 1}: unknown element symbol {sym!r}")
        elements.append(canon)
        charges.append(_CHARGE_CODE.get(_int(code or "0", "charge code"), 0))

    bonds = []
    seen = set()
    for k in range(n_bonds):
        line = lines[4 + n_atoms + k]
        if len(line) >= 9:
            a, b, t = line[0:3], line[3:6], line[6:9]
        else:
            parts = line.split()
            if len(parts) < 3:
                raise MalformedRecord(f"bond {k + 1}: too few fields")
            a, b, t = parts[:3]
        i, j, order = _int(a, "bond atom") - 1, _int(b, "bond atom") - 1, _int(t, "bond type")
        if not (0 <= i < n_atoms and 0 <= j < n_atoms) or i == j:
            raise IndexOutOfRange(f"bond {k + 1}: endpoints ({i + 1}, {j + 1}) out of range")
        if order not in (1, 2, 3, 4):
            raise MalformedRecord(f"bond {k + 1}: unsupported bond type {order}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateBond(f"bond {k + 1}: duplicate bond {key}")
        seen.add(key)
        bonds.append((i, j, order))

    charges = np.array(charges, dtype=np.int64)
    for line in lines[4 + n_atoms + n_bonds:]:
        if line.startswith("M  END"):
            break
        if line.startswith("M  CHG"):
            parts = line.split()[3:]
            for idx, chg in zip(parts[0::2], parts[1::2]):
                atom = _int(idx, "M  CHG atom") - 1
                if not 0 <= atom < n_atoms:
                    raise IndexOutOfRange(f"M  CHG references atom {atom + 1}")
                charges[atom] = _int(chg, "M  CHG charge")

    return LigandRaw(
        elements=elements,
        charges=charges,
        bonds=np.array(bonds, dtype=np.int64).reshape(-1, 3),
        coords=np.array(coords, dtype=np.float64).reshape(-1, 3),
        name=lines[0].strip(),
    )


def write_mol(raw: LigandRaw) -> str:
    """V2000 writer for fixtures; charges go into ``M  CHG`` lines."""
    coords = raw.coords if raw.coords is not None else np.zeros((raw.n_atoms, 3))
    lines = [raw.name, "  protgraph", "", f"{raw.n_atoms:3d}{raw.n_bonds:3d}  0  0  0  0  0  0  0  0999 V2000"]
    for (x, y, z), sym in zip(coords, raw.elements):
        lines.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {sym:<3s} 0  0  0  0  0  0  0  0  0  0  0  0")
    for i, j, order in raw.bonds:
        lines.append(f"{i + 1:3d}{j + 1:3d}{order:3d}  0  0  0  0")
    charged = [(a + 1, int(c)) for a, c in enumerate(raw.charges) if c]
    for start in range(0, len(charged), 8):
        chunk = charged[start:start + 8]
        lines.append(f"M  CHG{len(chunk):3d}" + "".join(f"{a:4d}{c:4d}" for a, c in chunk))
    lines.append("M  END")
    return "\n".join(lines) + "\n"
