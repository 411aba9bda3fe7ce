"""Surface layer: per-vertex geometry/chemistry and triangulation edge features."""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyStructure, ZeroAreaFace
from .graphs import SurfaceGraph
from .io.mesh import TriMesh, face_normals, mesh_edges, vertex_normals
from .io.pdb import ProteinStructure
from .structure import residue_hydropathy
from .tables import DONOR_ATOMS, RESIDUE_CHARGE

log = logging.getLogger(__name__)

NODE_DIM = 4  # shape index, hydropathy, charge, donor
EDGE_DIM = 9
FLAT_CURVATURE = 1e-8
TIE_TOL = 1e-9


def _tangent_frame(n: np.ndarray):
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def vertex_neighbors(n_vertices: int, edges: np.ndarray) -> list[np.ndarray]:
    nbrs: list[list[int]] = [[] for _ in range(n_vertices)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    return [np.asarray(sorted(x), dtype=np.int64) for x in nbrs]


def principal_curvatures(center, normal, ring):
    """Quadric fit z = a x^2 + b xy + c y^2 over the one-ring in the tangent frame.

    Curvature is positive where the surface bends toward the normal. Returns
    ``(k1, k2, ok)`` with k1 >= k2; ``ok`` is False for rank-deficient fits.
    """
    if len(ring) < 3:
        return 0.0, 0.0, False
    e1, e2 = _tangent_frame(normal)
    d = ring - center
    x, y, z = d @ e1, d @ e2, d @ normal
    A = np.column_stack([x * x, x * y, y * y])
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        return 0.0, 0.0, False
    (a, b, c), *_ = np.linalg.lstsq(A, z, rcond=None)
    k2, k1 = np.linalg.eigvalsh(np.array([[2 * a, b], [b, 2 * c]]))
    return float(k1), float(k2), True


def shape_index_from_curvatures(k1: float, k2: float) -> float:
    if abs(k1) < FLAT_CURVATURE and abs(k2) < FLAT_CURVATURE:
        return 0.0
    # arctan2 covers the umbilic limit k1 == k2 -> sign(k)
    return float(2.0 / np.pi * np.arctan2(k1 + k2, k1 - k2))


def compute_shape_index(m: TriMesh):
    """Per-vertex shape index in [-1, 1] and a mask of degenerate neighborhoods.

    With outward normals a convex cap scores -1, a cup +1, a saddle 0.
    Degenerate fits (fewer than three ring vertices, rank deficiency) give 0.
    """
    nbrs = vertex_neighbors(m.n_vertices, m.edges())
    si = np.zeros(m.n_vertices)
    degenerate = np.zeros(m.n_vertices, dtype=bool)
    for v in range(m.n_vertices):
        k1, k2, ok = principal_curvatures(m.vertices[v], m.normals[v], m.vertices[nbrs[v]])
        if not ok:
            degenerate[v] = True
            continue
        si[v] = shape_index_from_curvatures(k1, k2)
    return si, degenerate


def _angle(u, v):
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    cos = (u * v).sum(-1) / (nu * nv)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def compute_mesh_edge_features(m: TriMesh):
    """Nine features per unique mesh edge.

    Columns: dihedral angle, the two inner angles opposite the edge, the two
    edge-length / face-height ratios, endpoint distance, vertex-normal angle,
    and the two edge-length / mean-face-edge ratios. Per-face pairs are sorted
    ascending so the features do not depend on face order. Boundary edges
    reuse their single face for both slots.
    """
    edges, edge_faces = mesh_edges(m.faces)
    V = m.vertices
    fn = face_normals(V, m.faces)
    area2 = np.linalg.norm(fn, axis=1)
    if len(area2) and area2.min() < 1e-12:
        raise ZeroAreaFace(f"face {int(area2.argmin())} has zero area")
    unit_fn = fn / area2[:, None] if len(fn) else fn

    first = np.array([fs[0] for fs in edge_faces], dtype=np.int64)
    second = np.array([fs[1] if len(fs) > 1 else fs[0] for fs in edge_faces], dtype=np.int64)
    a, b = edges[:, 0], edges[:, 1]
    pa, pb = V[a], V[b]
    length = np.linalg.norm(pb - pa, axis=1)

    def per_face(f):
        tri = m.faces[f]
        # vertex of the face not on the edge
        opp = np.where((tri[:, 0] != a) & (tri[:, 0] != b), tri[:, 0],
                       np.where((tri[:, 1] != a) & (tri[:, 1] != b), tri[:, 1], tri[:, 2]))
        po = V[opp]
        inner = _angle(pa - po, pb - po)
        height = area2[f] / length
        tv = V[tri]
        perimeter = (np.linalg.norm(tv[:, 1] - tv[:, 0], axis=1) + np.linalg.norm(tv[:, 2] - tv[:, 1], axis=1)
                     + np.linalg.norm(tv[:, 0] - tv[:, 2], axis=1))
        return inner, length / height, length / (perimeter / 3.0)

    in1, r1, q1 = per_face(first)
    in2, r2, q2 = per_face(second)
    cos = np.clip((unit_fn[first] * unit_fn[second]).sum(1), -1.0, 1.0)
    dihedral = np.pi - np.arccos(cos)
    normal_angle = _angle(m.normals[a], m.normals[b])
    feats = np.column_stack([
        dihedral,
        np.minimum(in1, in2), np.maximum(in1, in2),
        np.minimum(r1, r2), np.maximum(r1, r2),
        length, normal_angle,
        np.minimum(q1, q2), np.maximum(q1, q2),
    ])
    return edges, feats


def _nearest_atoms(points: np.ndarray, coords: np.ndarray, owner: np.ndarray) -> np.ndarray:
    """Index (into ``coords``) of the nearest atom; ties go to the lowest ``owner``."""
    tree = cKDTree(coords)
    k = min(8, len(coords))
    dist, idx = tree.query(points, k=k)
    dist = dist.reshape(len(points), k)
    idx = idx.reshape(len(points), k)
    out = idx[:, 0].copy()
    for i in range(len(points)):
        tied = idx[i][dist[i] <= dist[i, 0] + TIE_TOL]
        if len(tied) > 1:
            out[i] = tied[np.lexsort((tied, owner[tied]))[0]]
    return out


def assign_residue_ids(m: TriMesh, p: ProteinStructure):
    """Residue id (index into ``p.residues``) and source atom per vertex.

    A vertex->atom map on the mesh wins; otherwise the nearest heavy atom of
    a residue that has a Calpha decides, ties going to the lower residue id.
    Returns ``(residue_ids, atom_indices)``; atom indices refer to
    ``p.atom_table()`` order.
    """
    coords, res_idx, _, _, heavy = p.atom_table()
    if len(coords) == 0:
        raise EmptyStructure("protein has no atoms")
    complete = np.array([r.is_complete for r in p.residues])
    pool = np.flatnonzero(heavy & complete[res_idx])
    if len(pool) == 0:
        pool = np.arange(len(coords))
    atoms = pool[_nearest_atoms(m.vertices, coords[pool], res_idx[pool])]
    if m.atom_map is not None:
        mapped = (m.atom_map >= 0) & (m.atom_map < len(coords))
        atoms = np.where(mapped, m.atom_map, atoms)
    return res_idx[atoms].astype(np.int64), atoms.astype(np.int64)


def is_donor(residue_name: str, atom_name: str) -> bool:
    """Side-chain donors only; the backbone amide is shared by every residue and carries no signal."""
    return atom_name in DONOR_ATOMS.get(residue_name, ())


def map_chemical_features(m: TriMesh, p: ProteinStructure, ids: np.ndarray, atoms: np.ndarray,
                          electrostatics: np.ndarray | None = None) -> np.ndarray:
    """(hydropathy, charge, donor) per vertex.

    ``electrostatics``, when given, replaces the residue-charge column.
    """
    _, _, elements, names, _ = p.atom_table()
    hyd_cache: dict[str, float] = {}
    out = np.zeros((m.n_vertices, 3))
    for v, (rid, atom) in enumerate(zip(ids, atoms)):
        res = p.residues[rid]
        if res.name not in hyd_cache:
            hyd_cache[res.name] = residue_hydropathy(res.name)
        out[v, 0] = hyd_cache[res.name]
        out[v, 1] = RESIDUE_CHARGE.get(res.name, 0.0)
        out[v, 2] = 1.0 if elements[atom] in ("N", "O") and is_donor(res.name, names[atom]) else 0.0
    if electrostatics is not None:
        electrostatics = np.asarray(electrostatics, dtype=np.float64)
        if electrostatics.shape != (m.n_vertices,):
            raise ValueError("electrostatics sidecar length differs from vertex count")
        out[:, 1] = electrostatics
    return out


def cluster_vertices(m: TriMesh, cell: float, origin=(0.0, 0.0, 0.0)) -> TriMesh:
    """Vertex-clustering simplification on a fixed grid anchored at ``origin``."""
    keys = np.floor((m.vertices - np.asarray(origin)) / cell).astype(np.int64)
    _, cluster = np.unique(keys, axis=0, return_inverse=True)
    cluster = cluster.reshape(-1)
    n_clusters = int(cluster.max()) + 1
    faces = cluster[m.faces]
    keep = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[keep]
    if len(faces):
        _, first = np.unique(np.sort(faces, axis=1), axis=0, return_index=True)
        faces = faces[np.sort(first)]
    used = np.unique(faces)
    remap = np.full(n_clusters, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))

    counts = np.bincount(cluster, minlength=n_clusters).astype(np.float64)
    sums = np.zeros((n_clusters, 3))
    nsum = np.zeros((n_clusters, 3))
    np.add.at(sums, cluster, m.vertices)
    np.add.at(nsum, cluster, m.normals)
    verts = sums / counts[:, None]
    norm = np.linalg.norm(nsum, axis=1)
    normals = nsum / np.where(norm > 1e-12, norm, 1.0)[:, None]
    # singleton clusters copy their vertex verbatim, which keeps re-clustering idempotent
    first = np.empty(n_clusters, dtype=np.int64)
    first[cluster[::-1]] = np.arange(len(cluster))[::-1]
    single = counts == 1
    verts[single] = m.vertices[first[single]]
    normals[single] = m.normals[first[single]]

    atom_map = None
    if m.atom_map is not None:
        atom_map = np.full(n_clusters, -1, dtype=np.int64)
        for c in used:
            members = m.atom_map[cluster == c]
            members = members[members >= 0]
            if len(members):
                vals, cnt = np.unique(members, return_counts=True)
                atom_map[c] = vals[np.argmax(cnt)]  # np.unique sorts: ties -> lowest atom
        atom_map = atom_map[used]

    verts, normals = verts[used], normals[used]
    faces = remap[faces]
    bad = np.linalg.norm(normals, axis=1) < 1e-12
    if bad.any():
        normals[bad] = vertex_normals(verts, faces)[bad]
    return TriMesh(verts, faces, normals, atom_map, {"cell_size": float(cell)})


def decimate_mesh(m: TriMesh, target_faces: int, max_iter: int = 60) -> TriMesh:
    """Reduce ``m`` to roughly ``target_faces`` faces (within +-20%).

    The grid cell size is bisected until the face count lands in
    [0.8, 1.2] * target. When that band cannot be hit the closest result is
    returned with ``flags["decimation_reached"] = False``.
    """
    if target_faces < 4:
        raise ValueError("target_faces must be >= 4")
    if target_faces >= m.n_faces:
        out = TriMesh(m.vertices.copy(), m.faces.copy(), m.normals.copy(),
                      None if m.atom_map is None else m.atom_map.copy(), dict(m.flags))
        out.flags["decimation_reached"] = True
        return out
    lo_band, hi_band = 0.8 * target_faces, 1.2 * target_faces
    edges = m.edges()
    lo = float(np.linalg.norm(m.vertices[edges[:, 0]] - m.vertices[edges[:, 1]], axis=1).min()) / 4.0
    hi = float(np.linalg.norm(m.vertices.max(0) - m.vertices.min(0))) + 1.0
    best, best_gap = None, np.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        cand = cluster_vertices(m, mid)
        gap = abs(cand.n_faces - target_faces)
        if gap < best_gap:
            best, best_gap = cand, gap
        if cand.n_faces > hi_band:
            lo = mid
        elif cand.n_faces < lo_band:
            hi = mid
        else:
            cand.flags["decimation_reached"] = True
            return cand
    log.warning("decimation could not reach %d +- 20%% faces; best %d", target_faces, best.n_faces)
    best.flags["decimation_reached"] = False
    return best


def build_surface_graph(m: TriMesh, p: ProteinStructure, electrostatics: np.ndarray | None = None) -> SurfaceGraph:
    """Surface graph: one node per mesh vertex, one edge per triangulation edge."""
    si, degenerate = compute_shape_index(m)
    if degenerate.any():
        log.info("%d vertices with degenerate curvature neighborhoods", int(degenerate.sum()))
    ids, atoms = assign_residue_ids(m, p)
    chem = map_chemical_features(m, p, ids, atoms, electrostatics)
    edges, efeats = compute_mesh_edge_features(m)
    feats = np.column_stack([si, chem])
    return SurfaceGraph(feats, edges.astype(np.int64), efeats, ids)
