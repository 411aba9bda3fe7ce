"""Versioned JSON encoding of multi-scale graphs with a content checksum.

Floats are written with ``repr`` precision, so a round trip reproduces every
array bit for bit.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from ..errors import ChecksumMismatch, EmptyStructure, InvalidGraph, MalformedRecord, SchemaVersionMismatch
from ..graphs import LigandGraph, MultiScaleGraph, StructureGraph, SuperpixelGraph, SurfaceGraph

SCHEMA_VERSION = 1


def _rows(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _layer_json(layer, extra: dict | None = None) -> dict:
    out = dict(extra or {})
    out["width"] = {"node": int(layer.node_features.shape[1]), "edge": int(layer.edge_features.shape[1])}
    out["nodes"] = [{"rid": int(r), "features": f} for r, f in zip(layer.residue_ids, _rows(layer.node_features))]
    out["edges"] = [{"a": int(a), "b": int(b), "features": f}
                    for (a, b), f in zip(layer.edges.tolist(), _rows(layer.edge_features))]
    return out


def _layer_arrays(block: dict):
    widths = block["width"]
    nodes, edges = block["nodes"], block["edges"]
    feats = np.array([n["features"] for n in nodes], dtype=np.float64).reshape(-1, widths["node"])
    rids = np.array([n["rid"] for n in nodes], dtype=np.int64)
    e = np.array([[x["a"], x["b"]] for x in edges], dtype=np.int64).reshape(-1, 2)
    ef = np.array([x["features"] for x in edges], dtype=np.float64).reshape(-1, widths["edge"])
    return feats, e, ef, rids


def _checksum(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def graph_to_json(g: MultiScaleGraph) -> dict:
    if g.structure.n_nodes == 0:
        raise EmptyStructure("refusing to serialize a protein without residues")
    from ..multiscale import validate

    problems = validate(g)
    if problems:
        raise InvalidGraph("; ".join(problems))
    payload = {
        "version": SCHEMA_VERSION,
        "protein_id": g.protein_id,
        "mode": g.mode,
        "fanout": bool(g.fanout),
        "structure": _layer_json(g.structure, {"cutoff": float(g.structure.cutoff)}),
        "surface": _layer_json(g.surface),
        "cross_edges": np.asarray(g.cross_edges, dtype=np.int64).tolist(),
    }
    if g.superpixels is not None:
        sp = g.superpixels
        payload["superpixels"] = {
            "labels": np.asarray(sp.labels, dtype=np.int64).tolist(),
            "nodes": [{"rid": int(r), "members": list(map(int, m)), "features": f}
                      for r, m, f in zip(sp.residue_ids, sp.member_residues, _rows(sp.node_features))],
            "edges": [{"a": int(a), "b": int(b), "weight": float(w)}
                      for (a, b), w in zip(sp.edges.tolist(), sp.weights.tolist())],
        }
    if g.ligand is not None:
        lg = g.ligand
        payload["ligand"] = {
            "width": {"node": int(lg.node_features.shape[1]), "edge": int(lg.edge_features.shape[1])},
            "nodes": [{"features": f} for f in _rows(lg.node_features)],
            "edges": [{"a": int(a), "b": int(b), "features": f}
                      for (a, b), f in zip(lg.edges.tolist(), _rows(lg.edge_features))],
            "flags": lg.flags,
        }
    payload["checksum"] = _checksum(payload)
    return payload


def write_graph(g: MultiScaleGraph) -> bytes:
    """Validated graph to schema-v1 JSON bytes."""
    return json.dumps(graph_to_json(g), separators=(",", ":"), allow_nan=False).encode()


def read_graph(data: bytes | str) -> MultiScaleGraph:
    try:
        payload = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedRecord(f"graph file is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise MalformedRecord("graph file must hold a JSON object")
    if payload.get("version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"expected schema version {SCHEMA_VERSION}, found {payload.get('version')!r}")
    stored = payload.pop("checksum", None)
    if stored != _checksum(payload):
        raise ChecksumMismatch("graph checksum does not match its content")
    try:
        sf, se, sef, srid = _layer_arrays(payload["structure"])
        structure = StructureGraph(sf, se, sef, srid, cutoff=float(payload["structure"]["cutoff"]))
        uf, ue, uef, urid = _layer_arrays(payload["surface"])
        surface = SurfaceGraph(uf, ue, uef, urid)
        superpixels = None
        if "superpixels" in payload:
            sp = payload["superpixels"]
            nodes = sp["nodes"]
            superpixels = SuperpixelGraph(
                labels=np.array(sp["labels"], dtype=np.int64),
                node_features=np.array([n["features"] for n in nodes], dtype=np.float64).reshape(len(nodes), -1),
                edges=np.array([[e["a"], e["b"]] for e in sp["edges"]], dtype=np.int64).reshape(-1, 2),
                weights=np.array([e["weight"] for e in sp["edges"]], dtype=np.float64),
                residue_ids=np.array([n["rid"] for n in nodes], dtype=np.int64),
                member_residues=[list(n["members"]) for n in nodes],
            )
        ligand = None
        if "ligand" in payload:
            lj = payload["ligand"]
            w = lj["width"]
            ligand = LigandGraph(
                np.array([n["features"] for n in lj["nodes"]], dtype=np.float64).reshape(-1, w["node"]),
                np.array([[e["a"], e["b"]] for e in lj["edges"]], dtype=np.int64).reshape(-1, 2),
                np.array([e["features"] for e in lj["edges"]], dtype=np.float64).reshape(-1, w["edge"]),
                dict(lj.get("flags", {})),
            )
        return MultiScaleGraph(
            protein_id=payload["protein_id"],
            structure=structure,
            surface=surface,
            cross_edges=np.array(payload["cross_edges"], dtype=np.int64).reshape(-1, 2),
            mode=payload["mode"],
            superpixels=superpixels,
            ligand=ligand,
            fanout=bool(payload.get("fanout", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"graph file does not follow the schema: {exc}") from None
