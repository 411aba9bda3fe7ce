"""Assemble the multi-scale protein graph and check its invariants."""

from __future__ import annotations

import logging

import numpy as np

from .errors import EmptyLayer
from .graphs import MODES, LayerGraph, LigandGraph, MultiScaleGraph, StructureGraph, SuperpixelGraph, SurfaceGraph

log = logging.getLogger(__name__)

SUMMARY_WIDTH = 16


def build_multiscale_with_report(
    protein_id: str,
    structure: StructureGraph,
    surface: SurfaceGraph,
    mode: str = "full",
    superpixels: SuperpixelGraph | None = None,
    ligand: LigandGraph | None = None,
    fanout: bool = False,
) -> tuple[MultiScaleGraph, list[int]]:
    """Like :func:`build_multiscale` but also returns the surface-layer nodes
    whose residue id has no structure node (those get no cross edge)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if structure.n_nodes == 0:
        raise EmptyLayer("structure layer has no nodes")
    if surface.n_nodes == 0:
        raise EmptyLayer("surface layer has no nodes")
    if mode != "full" and superpixels is None:
        raise ValueError(f"mode {mode!r} needs a superpixel graph")
    if mode != "full" and superpixels.k == 0:
        raise EmptyLayer("superpixel layer has no nodes")

    node_of = {int(r): i for i, r in enumerate(structure.residue_ids)}
    cross, dropped = [], []
    if mode == "full":
        targets = [[int(r)] for r in surface.residue_ids]
    elif fanout:
        targets = [list(m) for m in superpixels.member_residues]
    else:
        targets = [[int(r)] for r in superpixels.residue_ids]
    for s, rids in enumerate(targets):
        hits = [node_of[r] for r in rids if r in node_of]
        if not hits:
            dropped.append(s)
        cross.extend((s, b) for b in hits)
    if dropped:
        log.warning("%s: %d surface-layer nodes have no matching residue and were left unlinked",
                    protein_id, len(dropped))
    g = MultiScaleGraph(
        protein_id=protein_id,
        structure=structure,
        surface=surface,
        cross_edges=np.asarray(cross, dtype=np.int64).reshape(-1, 2),
        mode=mode,
        superpixels=superpixels,
        ligand=ligand,
        fanout=bool(fanout and mode != "full"),
    )
    return g, dropped


def build_multiscale(protein_id: str, structure: StructureGraph, surface: SurfaceGraph, mode: str = "full",
                     superpixels: SuperpixelGraph | None = None, ligand: LigandGraph | None = None,
                     fanout: bool = False) -> MultiScaleGraph:
    """Link each surface-layer node to the structure node with the same residue id.

    ``full``: one edge per surface vertex. ``superpixel``/``summary``: one
    edge per superpixel to its majority residue, or to every member residue
    when ``fanout`` is set.
    """
    return build_multiscale_with_report(protein_id, structure, surface, mode, superpixels, ligand, fanout)[0]


def fan_in(g: MultiScaleGraph) -> np.ndarray:
    """Number of surface-layer nodes linked to each structure node."""
    return np.bincount(g.cross_edges[:, 1], minlength=g.structure.n_nodes)


def _check_edges(name: str, n: int, edges, violations: list[str]) -> bool:
    edges = np.asarray(edges)
    if edges.ndim != 2 or (edges.size and edges.shape[1] != 2):
        violations.append(f"{name}: edge array has shape {edges.shape}")
        return False
    if len(edges) == 0:
        return True
    if edges.min() < 0 or edges.max() >= n:
        violations.append(f"{name}: edge endpoint out of range [0, {n})")
    if np.any(edges[:, 0] >= edges[:, 1]):
        violations.append(f"{name}: edges must be stored once with a < b")
    if len(np.unique(edges, axis=0)) != len(edges):
        violations.append(f"{name}: duplicate edges")
    return True


def _check_layer(name: str, layer: LayerGraph, violations: list[str]) -> None:
    nf = np.asarray(layer.node_features)
    if nf.ndim != 2:
        violations.append(f"{name}: node features are not a 2-D array")
        return
    if not np.all(np.isfinite(nf)):
        violations.append(f"{name}: non-finite node features")
    ef = np.asarray(layer.edge_features)
    if ef.ndim != 2 or len(ef) != len(layer.edges):
        violations.append(f"{name}: edge feature rows do not match edge count")
    elif not np.all(np.isfinite(ef)):
        violations.append(f"{name}: non-finite edge features")
    if len(layer.residue_ids) != layer.n_nodes:
        violations.append(f"{name}: residue id count differs from node count")
    _check_edges(name, layer.n_nodes, layer.edges, violations)


def validate(g: MultiScaleGraph, k: int | None = None) -> list[str]:
    """All violated invariants as human-readable strings; empty means valid."""
    v: list[str] = []
    if g.mode not in MODES:
        v.append(f"unknown mode {g.mode!r}")
        return v
    st, su = g.structure, g.surface
    _check_layer("structure", st, v)
    _check_layer("surface", su, v)
    if st.n_nodes == 0:
        v.append("structure: no nodes")
    if su.n_nodes == 0:
        v.append("surface: no nodes")
    if st.n_edges and np.asarray(st.edge_features).ndim == 2 and st.edge_features.shape[1] >= 1:
        if np.any(st.edge_features[:, 0] > st.cutoff + 1e-9):
            v.append(f"structure: edge longer than cutoff {st.cutoff}")
    if su.n_nodes and np.asarray(su.node_features).ndim == 2:
        si = su.node_features[:, 0]
        if np.any(np.abs(si) > 1 + 1e-12):
            v.append("surface: shape index outside [-1, 1]")

    if len(st.residue_ids) != st.n_nodes or len(su.residue_ids) != su.n_nodes:
        return v  # cross edges cannot be checked against misaligned ids
    if g.mode == "full":
        source_ids = [[int(r)] for r in su.residue_ids]
        n_source = su.n_nodes
    else:
        sp = g.superpixels
        if sp is None:
            v.append(f"mode {g.mode!r} without superpixels")
            return v
        labels = np.asarray(sp.labels)
        n_source = sp.k
        if len(labels) != su.n_nodes:
            v.append("superpixels: label count differs from surface node count")
        elif len(labels) and (labels.min() < 0 or labels.max() >= sp.k
                              or len(np.unique(labels)) != sp.k):
            v.append("superpixels: labels do not partition the surface into k parts")
        if k is not None and sp.k != k:
            v.append(f"superpixels: {sp.k} nodes, expected {k}")
        nf = np.asarray(sp.node_features)
        if nf.ndim != 2 or nf.shape[1] != SUMMARY_WIDTH:
            v.append(f"superpixels: summaries must have width {SUMMARY_WIDTH}")
        elif not np.all(np.isfinite(nf)):
            v.append("superpixels: non-finite summaries")
        if _check_edges("superpixels", sp.k, sp.edges, v):
            if len(sp.weights) != len(sp.edges) or not np.all(np.isfinite(sp.weights)):
                v.append("superpixels: weights missing or non-finite")
        if len(sp.residue_ids) != sp.k:
            v.append("superpixels: residue id count differs from k")
        source_ids = ([list(m) for m in sp.member_residues] if g.fanout
                      else [[int(r)] for r in sp.residue_ids])
        if len(source_ids) != sp.k:
            v.append("superpixels: member residue lists missing")
            return v

    cross = np.asarray(g.cross_edges)
    if cross.ndim != 2 or (cross.size and cross.shape[1] != 2):
        v.append(f"cross edges: bad shape {cross.shape}")
        return v
    if len(cross):
        if cross[:, 0].min() < 0 or cross[:, 0].max() >= n_source or cross[:, 1].min() < 0 \
                or cross[:, 1].max() >= st.n_nodes:
            v.append("cross edges: endpoint out of range")
            return v
    bad = sum(int(st.residue_ids[b]) not in source_ids[s] for s, b in cross)
    if bad:
        v.append(f"cross edges: {bad} with mismatched residue ids")
    counts = np.bincount(cross[:, 0], minlength=n_source) if len(cross) else np.zeros(n_source, dtype=np.int64)
    if g.fanout:
        if np.any(counts == 0):
            v.append("cross edges: surface-layer node without a cross edge")
        if len(np.unique(cross, axis=0)) != len(cross):
            v.append("cross edges: duplicates")
    elif np.any(counts != 1):
        v.append("cross edges: every surface-layer node needs exactly one cross edge")

    if g.ligand is not None:
        lg = g.ligand
        nf = np.asarray(lg.node_features)
        if nf.ndim != 2 or not np.all(np.isfinite(nf)):
            v.append("ligand: bad node features")
        _check_edges("ligand", lg.n_nodes, lg.edges, v)
        if len(lg.edge_features) != len(lg.edges):
            v.append("ligand: edge feature rows do not match edge count")
    return v
