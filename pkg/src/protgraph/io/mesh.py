"""Triangle meshes: OFF reader/writer, optional sidecars, edge topology."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyStructure, IndexOutOfRange, MalformedRecord, NonTriangleFace, ProtGraphError

log = logging.getLogger(__name__)


@dataclass(eq=False)
class TriMesh:
    vertices: np.ndarray  # (n, 3) float64, Angstrom
    faces: np.ndarray  # (f, 3) int64
    normals: np.ndarray  # (n, 3) unit
    atom_map: np.ndarray | None = None  # (n,) atom index per vertex, -1 if unknown
    flags: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> np.ndarray:
        return mesh_edges(self.faces)[0]


def face_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unnormalized face normals (length = 2 * area)."""
    v = vertices[faces]
    return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; isolated vertices get +z."""
    fn = face_normals(vertices, faces)
    vn = np.zeros_like(vertices, dtype=np.float64)
    for k in range(3):
        np.add.at(vn, faces[:, k], fn)
    norm = np.linalg.norm(vn, axis=1)
    bad = norm < 1e-12
    vn[bad] = (0.0, 0.0, 1.0)
    norm[bad] = 1.0
    return vn / norm[:, None]


def mesh_edges(faces: np.ndarray):
    """Unique undirected edges and, per edge, the incident face indices.

    Returns ``(edges, edge_faces)`` where ``edges`` is (m, 2) with a < b in
    lexicographic order and ``edge_faces`` is a list of face-index lists.
    """
    faces = np.asarray(faces, dtype=np.int64)
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64), []
    half = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    face_of = np.tile(np.arange(len(faces)), 3)
    half.sort(axis=1)
    edges, inverse = np.unique(half, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(edges) + 1))
    edge_faces = [face_of[order[bounds[i]:bounds[i + 1]]].tolist() for i in range(len(edges))]
    return edges, edge_faces


def _data_lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def parse_mesh(data: bytes | str, atom_map: np.ndarray | None = None) -> TriMesh:
    """Read an OFF (or NOFF, with per-vertex normals) triangle mesh.

    Edges shared by more than two faces are recorded in
    ``mesh.flags["nonmanifold_edges"]`` and their vertices in
    ``mesh.flags["nonmanifold_vertices"]``; the mesh is still returned.
    """
    text = data.decode("utf-8", "replace") if isinstance(data, (bytes, bytearray)) else data
    lines = _data_lines(text)
    try:
        header = next(lines)
    except StopIteration:
        raise EmptyStructure("empty mesh file") from None
    tokens = header.split()
    has_normals = tokens[0] == "NOFF"
    if tokens[0] not in ("OFF", "NOFF"):
        raise MalformedRecord(f"expected OFF header, got {tokens[0]!r}")
    rest = tokens[1:]
    try:
        if not rest:
            rest = next(lines).split()
        n_v, n_f = int(rest[0]), int(rest[1])
    except (StopIteration, IndexError, ValueError):
        raise MalformedRecord("bad OFF counts line") from None
    if n_v <= 0:
        raise EmptyStructure("mesh has no vertices")
    width = 6 if has_normals else 3
    verts = np.empty((n_v, 3))
    normals = np.empty((n_v, 3)) if has_normals else None
    faces = np.empty((n_f, 3), dtype=np.int64)
    try:
        for i in range(n_v):
            vals = [float(x) for x in next(lines).split()[:width]]
            if len(vals) < width:
                raise MalformedRecord(f"vertex {i}: expected {width} values")
            verts[i] = vals[:3]
            if has_normals:
                normals[i] = vals[3:6]
        for i in range(n_f):
            parts = next(lines).split()
            n = int(parts[0])
            if n != 3:
                raise NonTriangleFace(f"face {i} has {n} vertices")
            if len(parts) < 4:
                raise MalformedRecord(f"face {i}: missing indices")
            faces[i] = [int(x) for x in parts[1:4]]
    except StopIteration:
        raise MalformedRecord("mesh file truncated") from None
    except ProtGraphError:
        raise
    except (ValueError, IndexError) as exc:
        raise MalformedRecord(str(exc)) from None
    if not np.all(np.isfinite(verts)):
        raise MalformedRecord("non-finite vertex coordinate")
    if n_f and (faces.min() < 0 or faces.max() >= n_v):
        raise IndexOutOfRange("face references a vertex outside [0, V)")

    if has_normals:
        norm = np.linalg.norm(normals, axis=1)
        bad = norm < 1e-12
        computed = vertex_normals(verts, faces)
        normals[bad] = computed[bad]
        norm[bad] = 1.0
        normals = normals / norm[:, None]
    else:
        normals = vertex_normals(verts, faces)

    mesh = TriMesh(verts, faces, normals)
    if atom_map is not None:
        atom_map = np.asarray(atom_map, dtype=np.int64)
        if atom_map.shape != (n_v,):
            raise IndexOutOfRange("atom map length differs from vertex count")
        mesh.atom_map = atom_map
    edges, edge_faces = mesh_edges(faces)
    bad_edges = [tuple(map(int, e)) for e, fs in zip(edges, edge_faces) if len(fs) > 2]
    if bad_edges:
        log.warning("%d non-manifold edges", len(bad_edges))
        mesh.flags["nonmanifold_edges"] = bad_edges
        mesh.flags["nonmanifold_vertices"] = sorted({v for e in bad_edges for v in e})
    return mesh


def parse_index_sidecar(data: bytes | str, n: int, dtype=np.int64, fill=-1) -> np.ndarray:
    """Read ``index<TAB>value`` lines into a dense array of length ``n``."""
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    out = np.full(n, fill, dtype=dtype)
    for lineno, line in enumerate(_data_lines(text), 1):
        parts = line.split()
        if len(parts) < 2:
            raise MalformedRecord(f"sidecar line {lineno}: expected two columns")
        try:
            idx = int(parts[0])
            val = float(parts[1]) if np.issubdtype(dtype, np.floating) else int(parts[1])
        except ValueError as exc:
            raise MalformedRecord(f"sidecar line {lineno}: {exc}") from None
        if not 0 <= idx < n:
            raise IndexOutOfRange(f"sidecar line {lineno}: index {idx} outside [0, {n})")
        out[idx] = val
    return out


def write_off(mesh: TriMesh, with_normals: bool = False) -> str:
    head = "NOFF" if with_normals else "OFF"
    out = [head, f"{mesh.n_vertices} {mesh.n_faces} 0"]
    for i, v in enumerate(mesh.vertices):
        row = [repr(float(x)) for x in v]
        if with_normals:
            row += [repr(float(x)) for x in mesh.normals[i]]
        out.append(" ".join(row))
    for f in mesh.faces:
        out.append(f"3 {f[0]} {f[1]} {f[2]}")
    return "\n".join(out) + "\n"
