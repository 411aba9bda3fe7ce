"""Residue-level structure graph: node features, contact edges, SASA, secondary structure."""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import cKDTree

from .errors import UnknownVdwRadius
from .graphs import StructureGraph
from .io.pdb import ProteinStructure, Residue
from .tables import KYTE_DOOLITTLE, RESIDUE_INDEX, RESIDUES, SECONDARY_STRUCTURE, SS_INDEX, VDW_RADII

log = logging.getLogger(__name__)

NODE_DIM = len(RESIDUES) + len(SECONDARY_STRUCTURE) + 2  # 33
EDGE_DIM = 2  # Calpha distance, side-chain direction angle

HELIX_PHI = (-100.0, -30.0)
HELIX_PSI = (-80.0, -5.0)
STRAND_PHI = (-180.0, -90.0)
STRAND_PSI = (90.0, 180.0)
MIN_HELIX_RUN = 4
MIN_STRAND_RUN = 3
PEPTIDE_BOND_MAX = 2.0  # Angstrom; longer C-N gaps are chain breaks


def residue_hydropathy(code: str) -> float:
    """Kyte-Doolittle hydropathy scaled into [-1, 1]."""
    value = KYTE_DOOLITTLE.get(code.upper())
    if value is None:
        log.warning("no hydropathy value for residue %r; using 0.0", code)
        return 0.0
    return value / 4.5


def dihedral(p0, p1, p2, p3) -> float:
    """Signed torsion angle in degrees."""
    b0 = p0 - p1
    b1 = p2 - p1
    b2 = p3 - p2
    b1 = b1 / np.linalg.norm(b1)
    v = b0 - np.dot(b0, b1) * b1
    w = b2 - np.dot(b2, b1) * b1
    x = np.dot(v, w)
    y = np.dot(np.cross(b1, v), w)
    return float(np.degrees(np.arctan2(y, x)))


def _linked(prev: Residue, cur: Residue) -> bool:
    c, n = prev.atom("C"), cur.atom("N")
    return c is not None and n is not None and np.linalg.norm(c.xyz - n.xyz) <= PEPTIDE_BOND_MAX


def backbone_dihedrals(p: ProteinStructure) -> list[tuple[float | None, float | None]]:
    """(phi, psi) per residue in ``p.residues`` order; None where undefined."""
    out = []
    for chain in p.chains:
        res = chain.residues
        for i, r in enumerate(res):
            n, ca, c = r.atom("N"), r.atom("CA"), r.atom("C")
            phi = psi = None
            if n is not None and ca is not None and c is not None:
                if i > 0 and _linked(res[i - 1], r):
                    phi = dihedral(res[i - 1].atom("C").xyz, n.xyz, ca.xyz, c.xyz)
                if i + 1 < len(res) and _linked(r, res[i + 1]):
                    psi = dihedral(n.xyz, ca.xyz, c.xyz, res[i + 1].atom("N").xyz)
            out.append((phi, psi))
    return out


def _mark_runs(flags: list[bool], min_run: int) -> list[bool]:
    out = [False] * len(flags)
    i = 0
    while i < len(flags):
        if not flags[i]:
            i += 1
            continue
        j = i
        while j < len(flags) and flags[j]:
            j += 1
        if j - i >= min_run:
            out[i:j] = [True] * (j - i)
        i = j
    return out


def assign_secondary_structure(p: ProteinStructure, override: dict[int, str] | None = None) -> list[str]:
    """Dihedral-window secondary structure labels.

    Emits only H, E, C and ``unk``; the other DSSP classes keep their one-hot
    slots but can only arrive through ``override`` (residue index -> label).
    """
    angles = backbone_dihedrals(p)
    labels: list[str] = []
    offset = 0
    for chain in p.chains:
        chunk = angles[offset:offset + len(chain.residues)]
        defined = [phi is not None and psi is not None for phi, psi in chunk]
        helix = _mark_runs([
            d and HELIX_PHI[0] <= phi <= HELIX_PHI[1] and HELIX_PSI[0] <= psi <= HELIX_PSI[1]
            for d, (phi, psi) in zip(defined, chunk)
        ], MIN_HELIX_RUN)
        strand = _mark_runs([
            d and STRAND_PHI[0] <= phi <= STRAND_PHI[1] and STRAND_PSI[0] <= psi <= STRAND_PSI[1]
            for d, (phi, psi) in zip(defined, chunk)
        ], MIN_STRAND_RUN)
        for d, h, e in zip(defined, helix, strand):
            labels.append("unk" if not d else "H" if h else "E" if e else "C")
        offset += len(chain.residues)
    if override:
        for idx, lab in override.items():
            if lab not in SS_INDEX:
                raise ValueError(f"unknown secondary structure label {lab!r}")
            labels[idx] = lab
    return labels


def golden_spiral(n: int) -> np.ndarray:
    """n quasi-uniform unit vectors on the sphere (deterministic)."""
    i = np.arange(n) + 0.5
    y = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - y * y)
    theta = np.pi * (3.0 - np.sqrt(5.0)) * np.arange(n)
    return np.column_stack([r * np.cos(theta), y, r * np.sin(theta)])


def vdw_radius(element: str) -> float:
    try:
        return VDW_RADII[element.upper()]
    except KeyError:
        raise UnknownVdwRadius(f"no van der Waals radius for element {element!r}") from None


def shrake_rupley(coords: np.ndarray, radii: np.ndarray, probe: float = 1.4, n_points: int = 92) -> np.ndarray:
    """Per-atom solvent accessible area (A^2)."""
    if probe < 0:
        raise ValueError("probe radius must be >= 0")
    if n_points < 32:
        raise ValueError("n_points must be >= 32")
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    expanded = np.asarray(radii, dtype=np.float64) + probe
    if len(coords) == 0:
        return np.zeros(0)
    sphere = golden_spiral(n_points)
    tree = cKDTree(coords)
    area = np.empty(len(coords))
    for i, (c, r) in enumerate(zip(coords, expanded)):
        nbrs = [j for j in tree.query_ball_point(c, r + expanded.max()) if j != i]
        pts = c + r * sphere
        exposed = np.ones(n_points, dtype=bool)
        if nbrs:
            nb = np.asarray(nbrs)
            d2 = ((pts[:, None, :] - coords[nb][None, :, :]) ** 2).sum(-1)
            exposed = ~(d2 < expanded[nb][None, :] ** 2).any(axis=1)
        area[i] = 4.0 * np.pi * r * r * exposed.sum() / n_points
    return area


def compute_sasa(p: ProteinStructure, probe: float = 1.4, n_points: int = 92) -> np.ndarray:
    """Per-residue SASA: heavy-atom Shrake-Rupley areas summed per residue."""
    coords, res_idx, elements, _, heavy = p.atom_table()
    radii = np.array([vdw_radius(e) for e in elements[heavy]])
    atom_area = shrake_rupley(coords[heavy], radii, probe, n_points)
    out = np.zeros(len(p.residues))
    np.add.at(out, res_idx[heavy], atom_area)
    return out


def side_chain_direction(res: Residue) -> np.ndarray:
    """Unit Calpha->Cbeta vector; Calpha->N when there is no Cbeta (glycine)."""
    ca = res.atom("CA").xyz
    other = res.atom("CB") or res.atom("N")
    if other is None:
        return np.zeros(3)
    v = other.xyz - ca
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def structure_node_features(res: Residue, ss_label: str, sasa: float) -> np.ndarray:
    f = np.zeros(NODE_DIM)
    f[RESIDUE_INDEX.get(res.name, RESIDUE_INDEX["UNK"])] = 1.0
    f[len(RESIDUES) + SS_INDEX[ss_label]] = 1.0
    f[-2] = sasa
    f[-1] = residue_hydropathy(res.name)
    return f


def build_structure_graph(
    p: ProteinStructure,
    cutoff: float = 10.0,
    ss_override: dict[int, str] | None = None,
    probe: float = 1.4,
    n_points: int = 92,
) -> StructureGraph:
    """Residue graph with an edge wherever two Calpha atoms lie within ``cutoff``.

    Residues lacking a Calpha are excluded (with a warning). ``residue_ids``
    index ``p.residues``.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    ss = assign_secondary_structure(p, ss_override)
    sasa = compute_sasa(p, probe, n_points)
    keep = []
    for i, r in enumerate(p.residues):
        if r.is_complete:
            keep.append(i)
        else:
            log.warning("excluding residue %s%d without CA from the structure graph", r.name, r.seq_number)
    residues = [p.residues[i] for i in keep]
    feats = np.array([structure_node_features(r, ss[i], sasa[i]) for i, r in zip(keep, residues)]).reshape(-1, NODE_DIM)
    ca = np.array([r.atom("CA").xyz for r in residues]).reshape(-1, 3)
    direction = np.array([side_chain_direction(r) for r in residues]).reshape(-1, 3)

    edges, efeats = contact_edges(ca, direction, cutoff)
    return StructureGraph(feats, edges, efeats, np.asarray(keep, dtype=np.int64), cutoff=float(cutoff))


def contact_edges(ca: np.ndarray, direction: np.ndarray, cutoff: float):
    if len(ca) < 2:
        return np.zeros((0, 2), dtype=np.int64), np.zeros((0, EDGE_DIM))
    pairs = cKDTree(ca).query_pairs(cutoff * (1 + 1e-9) + 1e-9, output_type="ndarray")
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    dist = np.linalg.norm(ca[pairs[:, 0]] - ca[pairs[:, 1]], axis=1)
    ok = dist <= cutoff
    pairs, dist = pairs[ok], dist[ok]
    u, v = direction[pairs[:, 0]], direction[pairs[:, 1]]
    # atan2 form stays accurate for nearly parallel directions, where arccos does not
    angle = np.arctan2(np.linalg.norm(np.cross(u, v), axis=1), (u * v).sum(1))
    return pairs.astype(np.int64), np.column_stack([dist, angle])
