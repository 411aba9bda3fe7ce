import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from protgraph.io.pdb import Atom, Chain, ProteinStructure, Residue
from protgraph.structure import (
    NODE_DIM,
    assign_secondary_structure,
    backbone_dihedrals,
    build_structure_graph,
    compute_sasa,
    residue_hydropathy,
    shrake_rupley,
)
from protgraph.synthetic import AMINO_ACIDS, toy_protein
from protgraph.tables import RESIDUES

from conftest import backbone


def transformed(p: ProteinStructure, rot: np.ndarray, shift: np.ndarray) -> ProteinStructure:
    chains = []
    for ch in p.chains:
        res = [Residue(r.name, r.seq_number, r.insertion_code,
                       [Atom(a.name, a.element, rot @ a.xyz + shift, a.is_heavy) for a in r.atoms])
               for r in ch.residues]
        chains.append(Chain(ch.chain_id, res))
    return ProteinStructure(chains, name=p.name)


def test_dihedrals_recover_construction_angles():
    p = backbone([-60.0] * 5, [-45.0] * 5)
    angles = backbone_dihedrals(p)
    assert angles[0][0] is None and angles[-1][1] is None
    for phi, psi in angles[1:-1]:
        assert phi == pytest.approx(-60.0, abs=1e-6)
        assert psi == pytest.approx(-45.0, abs=1e-6)


def test_helix_backbone_labels():
    p = backbone([-57.0] * 8, [-47.0] * 8)
    assert assign_secondary_structure(p) == ["unk"] + ["H"] * 6 + ["unk"]


def test_strand_backbone_labels():
    p = backbone([-120.0] * 6, [130.0] * 6)
    assert assign_secondary_structure(p) == ["unk"] + ["E"] * 4 + ["unk"]


def test_short_helical_run_is_coil():
    phis = [-57.0] * 4 + [-120.0] * 4
    psis = [-47.0] * 3 + [130.0] * 5
    labels = assign_secondary_structure(backbone(phis, psis))
    assert "H" not in labels


def test_override_wins():
    p = backbone([-57.0] * 8, [-47.0] * 8)
    labels = assign_secondary_structure(p, {3: "G"})
    assert labels[3] == "G"
    with pytest.raises(ValueError):
        assign_secondary_structure(p, {3: "Q"})


def test_isolated_atom_sasa_is_full_sphere():
    for r, probe in [(1.7, 1.4), (1.52, 1.4), (1.8, 0.0)]:
        area = shrake_rupley(np.zeros((1, 3)), np.array([r]), probe)
        assert area[0] == pytest.approx(4 * np.pi * (r + probe) ** 2, rel=1e-12)


def test_sasa_of_touching_pair_is_symmetric_and_reduced():
    coords = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    area = shrake_rupley(coords, np.array([1.7, 1.7]), 1.4, n_points=500)
    full = 4 * np.pi * 3.1 ** 2
    assert area[0] == pytest.approx(area[1], rel=0.02)
    # analytic: a cap of height r - d/2 is hidden
    exact = full * (1 - (3.1 - 1.5) / (2 * 3.1))
    assert area[0] == pytest.approx(exact, rel=0.02)


def test_sasa_argument_checks():
    with pytest.raises(ValueError):
        shrake_rupley(np.zeros((1, 3)), np.ones(1), probe=-1)
    with pytest.raises(ValueError):
        shrake_rupley(np.zeros((1, 3)), np.ones(1), n_points=10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-6, 6)] * 3), min_size=1, max_size=8), st.tuples(*[st.floats(-6, 6)] * 3))
def test_adding_an_atom_never_increases_exposure(points, extra):
    coords = np.array(points, dtype=np.float64)
    radii = np.full(len(coords), 1.7)
    before = shrake_rupley(coords, radii)
    after = shrake_rupley(np.vstack([coords, extra]), np.append(radii, 1.7))[:-1]
    assert np.all(after <= before + 1e-9)
    assert np.all(before >= 0)
    assert np.all(before <= 4 * np.pi * 3.1 ** 2 + 1e-9)


def test_structure_graph_features():
    p = toy_protein(["ALA", "GLY", "LYS", "SER"])
    g = build_structure_graph(p)
    assert g.node_features.shape == (4, NODE_DIM)
    onehot = g.node_features[:, :len(RESIDUES)]
    assert np.all(onehot.sum(1) == 1)
    assert np.argmax(onehot[2]) == RESIDUES.index("LYS")
    assert np.allclose(g.node_features[:, -1], [0.4, -0.4 / 4.5, -3.9 / 4.5, -0.8 / 4.5])
    assert np.allclose(g.node_features[:, -2], compute_sasa(p))


def test_edges_match_brute_force():
    rng = np.random.default_rng(3)
    names = [AMINO_ACIDS[i] for i in rng.integers(0, 20, 12)]
    p = toy_protein(names, rng, jitter=2.0)
    for cutoff in (4.0, 7.5, 10.0):
        g = build_structure_graph(p, cutoff)
        ca = np.array([r.atom("CA").xyz for r in p.residues])
        expected = [(i, j) for i, j in itertools.combinations(range(len(ca)), 2)
                    if np.linalg.norm(ca[i] - ca[j]) <= cutoff]
        assert [tuple(e) for e in g.edges] == expected
        assert np.allclose(g.edge_features[:, 0], [np.linalg.norm(ca[i] - ca[j]) for i, j in expected])
        assert np.all(g.edge_features[:, 1] >= 0) and np.all(g.edge_features[:, 1] <= np.pi)


def test_edge_at_exact_cutoff_is_kept():
    p = toy_protein(["ALA", "ALA"])
    g = build_structure_graph(p, cutoff=3.8)
    assert g.n_edges == 1


def test_residue_without_ca_is_excluded():
    p = toy_protein(["ALA", "GLY", "SER"])
    r = p.chains[0].residues[1]
    r.atoms = [a for a in r.atoms if a.name != "CA"]
    g = build_structure_graph(p)
    assert g.residue_ids.tolist() == [0, 2]


def test_invalid_cutoff():
    with pytest.raises(ValueError):
        build_structure_graph(toy_protein(["ALA"]), cutoff=0)


def test_hydropathy_scale():
    assert residue_hydropathy("ILE") == 1.0
    assert residue_hydropathy("ARG") == -1.0
    assert residue_hydropathy("ALA") == pytest.approx(0.4)
    assert residue_hydropathy("XYZ") == 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_rigid_motion_invariance(seed):
    rng = np.random.default_rng(seed)
    names = [AMINO_ACIDS[i] for i in rng.integers(0, 20, 6)]
    p = toy_protein(names, rng, jitter=1.0)
    rot = Rotation.random(random_state=seed).as_matrix()
    shift = rng.normal(scale=20, size=3)
    g = build_structure_graph(p)
    h = build_structure_graph(transformed(p, rot, shift))
    assert np.array_equal(g.edges, h.edges)
    assert np.allclose(g.edge_features, h.edge_features, atol=1e-9)
    assert np.allclose(g.node_features[:, :-2], h.node_features[:, :-2])
    # SASA sampling points are fixed in the lab frame, so rotation moves the estimate slightly
    assert np.allclose(g.node_features[:, -2], h.node_features[:, -2], rtol=0.1, atol=3.0)
    t = build_structure_graph(transformed(p, np.eye(3), shift))
    assert np.allclose(g.node_features, t.node_features, atol=1e-8)
