"""Small synthetic complexes for tests, demos and sanity training runs."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .encoder import featurize_ligand
from .graphs import MultiScaleGraph
from .io.mesh import TriMesh, vertex_normals, write_off
from .io.mol import LigandRaw, write_mol
from .io.pdb import Atom, Chain, ProteinStructure, Residue, write_pdb
from .multiscale import build_multiscale
from .pipeline import attach_superpixels
from .structure import build_structure_graph
from .surface import build_surface_graph

AMINO_ACIDS = ("ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
               "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL")

# side-chain tip atom per residue (name, element); others get a CG carbon
_TIP = {"SER": ("OG", "O"), "THR": ("OG1", "O"), "LYS": ("NZ", "N"), "ARG": ("NE", "N"),
        "ASP": ("OD1", "O"), "GLU": ("OE1", "O"), "ASN": ("ND2", "N"), "GLN": ("NE2", "N"),
        "HIS": ("ND1", "N"), "TRP": ("NE1", "N"), "TYR": ("OH", "O"), "CYS": ("SG", "S"),
        "MET": ("SD", "S")}

LIGANDS = {
    "methane": (["C"], []),
    "methylamine": (["C", "N"], [(0, 1, 1)]),
    "ethanol": (["C", "C", "O"], [(0, 1, 1), (1, 2, 1)]),
    "acetic_acid": (["C", "C", "O", "O"], [(0, 1, 1), (1, 2, 2), (1, 3, 1)]),
    "acetamide": (["C", "C", "O", "N"], [(0, 1, 1), (1, 2, 2), (1, 3, 1)]),
    "benzene": (["C"] * 6, [(i, (i + 1) % 6, 4) for i in range(6)]),
    "phenol": (["C"] * 6 + ["O"], [(i, (i + 1) % 6, 4) for i in range(6)] + [(0, 6, 1)]),
    "pyridine": (["N"] + ["C"] * 5, [(i, (i + 1) % 6, 4) for i in range(6)]),
}


def icosphere(subdivisions: int = 0, radius=1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Outward-oriented icosphere: 12 vertices at level 0, 42 at level 1, ...

    ``radius`` may be a 3-vector to stretch the sphere into an ellipsoid.
    """
    t = (1 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    unit = np.array(verts)
    faces = np.array(faces, dtype=np.int64)
    v = unit * np.asarray(radius, dtype=np.float64) + np.asarray(center, dtype=np.float64)
    return TriMesh(v, faces, vertex_normals(v, faces))


def toy_protein(residues, rng: np.random.Generator | None = None, jitter: float = 0.0,
                chain_id: str = "A") -> ProteinStructure:
    """Straight backbone along x with peptide-bonded neighbours (C-N 1.3 A)."""
    out = []
    for i, name in enumerate(residues):
        ca = np.array([3.8 * i, 0.0, 0.0])
        if rng is not None and jitter > 0:
            ca = ca + rng.normal(scale=jitter, size=3)
        c = ca + [1.25, 0.0, 0.0]
        atoms = [
            Atom("N", "N", ca + [-1.25, 0.0, 0.0], True),
            Atom("CA", "C", ca, True),
            Atom("C", "C", c, True),
            Atom("O", "O", c + [0.0, 1.23, 0.0], True),
        ]
        if name != "GLY":
            cb = ca + [0.0, -0.9, 1.2]
            atoms.append(Atom("CB", "C", cb, True))
            if name != "ALA":
                tip, elem = _TIP.get(name, ("CG", "C"))
                atoms.append(Atom(tip, elem, cb + [0.0, -0.5, 1.4], True))
        out.append(Residue(name, i + 1, "", atoms))
    return ProteinStructure([Chain(chain_id, out)], name="toy")


def enclosing_mesh(p: ProteinStructure, subdivisions: int = 0, margin: float = 4.0) -> TriMesh:
    coords = p.atom_table()[0]
    lo, hi = coords.min(0), coords.max(0)
    return icosphere(subdivisions, (hi - lo) / 2 + margin, (hi + lo) / 2)


def toy_ligand(name: str) -> LigandRaw:
    elements, bonds = LIGANDS[name]
    coords = np.array([[1.4 * np.cos(a), 1.4 * np.sin(a), 0.0]
                       for a in np.linspace(0, 2 * np.pi, len(elements), endpoint=False)])
    return LigandRaw(list(elements), np.zeros(len(elements), dtype=np.int64),
                     np.array(bonds, dtype=np.int64).reshape(-1, 3), coords, name)


def toy_complex(seed: int, n_residues: int = 5, subdivisions: int = 0):
    """(protein, mesh, ligand, target) drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    residues = [AMINO_ACIDS[i] for i in rng.integers(0, len(AMINO_ACIDS), n_residues)]
    protein = toy_protein(residues, rng, jitter=0.3)
    mesh = enclosing_mesh(protein, subdivisions)
    names = sorted(LIGANDS)
    ligand = toy_ligand(names[int(rng.integers(0, len(names)))])
    target = float(np.round(rng.uniform(4.0, 10.0), 3))
    return protein, mesh, ligand, target


def toy_graph(seed: int, n_residues: int = 5, subdivisions: int = 0, mode: str = "full", k: int = 4,
              cutoff: float = 10.0) -> tuple[MultiScaleGraph, float]:
    protein, mesh, ligand, target = toy_complex(seed, n_residues, subdivisions)
    g = build_multiscale(f"toy{seed}", build_structure_graph(protein, cutoff), build_surface_graph(mesh, protein),
                         ligand=featurize_ligand(ligand))
    if mode != "full":
        g = attach_superpixels(g, mode, k)
    return g, target


def write_toy_dataset(directory, n: int = 8, seed: int = 0, n_residues: int = 5, subdivisions: int = 1,
                      splits=None) -> Path:
    """Write ``n`` complexes (PDB, OFF, MOL) and an index CSV; returns the index path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if splits is None:
        splits = ["train"] * n
    rows = []
    for i in range(n):
        protein, mesh, ligand, target = toy_complex(seed * 1000 + i, n_residues, subdivisions)
        cid = f"toy{i:03d}"
        (directory / f"{cid}.pdb").write_text(write_pdb(protein))
        (directory / f"{cid}.off").write_text(write_off(mesh))
        (directory / f"{cid}.mol").write_text(write_mol(ligand))
        rows.append([cid, f"{cid}.pdb", f"{cid}.off", f"{cid}.mol", repr(target), splits[i]])
    index = directory / "index.csv"
    with open(index, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "pdb", "mesh", "mol", "target", "split"])
        w.writerows(rows)
    return index
