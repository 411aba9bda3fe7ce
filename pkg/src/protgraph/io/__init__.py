"""Readers and writers for PDB, OFF, MOL, dataset indices and graph JSON."""

from .dataset import DatasetIndex, Record, load_dataset_index
from .mesh import TriMesh, parse_index_sidecar, parse_mesh, write_off
from .mol import LigandRaw, parse_mol, write_mol
from .pdb import Atom, Chain, ProteinStructure, Residue, parse_pdb, write_pdb
from .serialize import SCHEMA_VERSION, read_graph, write_graph

__all__ = [
    "Atom", "Chain", "DatasetIndex", "LigandRaw", "ProteinStructure", "Record", "Residue", "SCHEMA_VERSION",
    "TriMesh", "load_dataset_index", "parse_index_sidecar", "parse_mesh", "parse_mol", "parse_pdb",
    "read_graph", "write_graph", "write_mol", "write_off", "write_pdb",
]
