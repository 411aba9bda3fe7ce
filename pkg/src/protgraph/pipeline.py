"""File-level glue: PDB + mesh (+ MOL) on disk to a multi-scale graph.

Optional sidecars sit next to the inputs:
``<mesh>.atoms`` (vertex -> atom index), ``<mesh>.charge`` (vertex ->
electrostatic potential) and ``<pdb>.ss`` (residue index -> secondary
structure label).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import featurize_ligand
from .errors import MalformedRecord
from .graphs import MultiScaleGraph
from .io.mesh import TriMesh, parse_index_sidecar, parse_mesh
from .io.mol import parse_mol
from .io.pdb import ProteinStructure, parse_pdb
from .multiscale import build_multiscale
from .structure import build_structure_graph
from .superpixel import build_superpixel_graph, segment_ers
from .surface import build_surface_graph, decimate_mesh


@dataclass
class PipelineConfig:
    cutoff: float = 10.0
    mode: str = "full"
    k: int = 20
    lam: float = 0.5
    similarity: str = "product"
    fanout: bool = False
    target_faces: int | None = None  # decimate the mesh when set


def _sidecar(path: Path, suffix: str) -> Path | None:
    p = path.with_name(path.name + suffix)
    return p if p.exists() else None


def load_protein(path) -> ProteinStructure:
    path = Path(path)
    return parse_pdb(path.read_bytes(), name=path.stem)


def load_secondary_structure(path) -> dict[int, str] | None:
    side = _sidecar(Path(path), ".ss")
    if side is None:
        return None
    out = {}
    for lineno, line in enumerate(side.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        try:
            out[int(parts[0])] = parts[1]
        except (ValueError, IndexError):
            raise MalformedRecord(f"{side}:{lineno}: expected 'index label'") from None
    return out


def load_mesh(path) -> tuple[TriMesh, np.ndarray | None]:
    """Mesh plus the optional per-vertex electrostatics column."""
    path = Path(path)
    mesh = parse_mesh(path.read_bytes())
    atoms = _sidecar(path, ".atoms")
    if atoms is not None:
        mesh.atom_map = parse_index_sidecar(atoms.read_bytes(), mesh.n_vertices)
    charge = _sidecar(path, ".charge")
    elec = None
    if charge is not None:
        elec = parse_index_sidecar(charge.read_bytes(), mesh.n_vertices, dtype=np.float64, fill=0.0)
    return mesh, elec


def attach_superpixels(g: MultiScaleGraph, mode: str, k: int, lam: float = 0.5, similarity: str = "product",
                       fanout: bool = False) -> MultiScaleGraph:
    """Segment the surface layer and rebuild the graph in superpixel or summary mode."""
    seg = segment_ers(g.surface, k, lam, similarity)
    sp = build_superpixel_graph(seg, g.surface)
    return build_multiscale(g.protein_id, g.structure, g.surface, mode, sp, g.ligand, fanout)


def build_complex(pdb_path, mesh_path, mol_path=None, cfg: PipelineConfig | None = None,
                  protein_id: str | None = None) -> MultiScaleGraph:
    cfg = cfg or PipelineConfig()
    protein = load_protein(pdb_path)
    mesh, elec = load_mesh(mesh_path)
    if cfg.target_faces is not None and cfg.target_faces < mesh.n_faces:
        mesh = decimate_mesh(mesh, cfg.target_faces)
        elec = None  # vertex indices no longer line up with the sidecar
    structure = build_structure_graph(protein, cfg.cutoff, load_secondary_structure(pdb_path))
    surface = build_surface_graph(mesh, protein, elec)
    ligand = featurize_ligand(parse_mol(Path(mol_path).read_bytes())) if mol_path else None
    g = build_multiscale(protein_id or protein.name, structure, surface, "full", ligand=ligand)
    if cfg.mode != "full":
        g = attach_superpixels(g, cfg.mode, cfg.k, cfg.lam, cfg.similarity, cfg.fanout)
    return g
