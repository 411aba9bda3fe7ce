import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protgraph.errors import DimensionMismatch, DisconnectedInput, EmptySample, ZeroTotalWeight
from protgraph.graphs import SurfaceGraph
from protgraph.superpixel import (
    EPS_FLOOR,
    ERSState,
    WeightedSurface,
    build_superpixel_graph,
    edge_similarity,
    entropy_rate,
    gaussian_similarity,
    objective,
    objective_gain,
    segment_ers,
    segment_weighted,
    stationary_distribution,
    wasserstein_1d,
    weighted_surface,
)

from oracles import (
    best_two_partition,
    components,
    full_objective,
    naive_greedy,
    random_connected_graph,
    transition_entropy,
    w1_lcm,
    w1_lp,
)


def surface(features, edges, residue_ids=None):
    features = np.asarray(features, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rids = np.zeros(len(features), dtype=np.int64) if residue_ids is None else np.asarray(residue_ids)
    return SurfaceGraph(features, edges, np.zeros((len(edges), 9)), rids)


def random_instance(seed, n_max=20):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    edges = random_connected_graph(rng, n, extra=rng.uniform(0.05, 0.4))
    feats = rng.uniform(-1, 1, size=(n, 4))
    return rng, n, edges, feats


# ----- similarity and stationary distribution -----

def test_similarity_examples():
    assert edge_similarity(np.zeros(4), np.ones(4)) == EPS_FLOOR
    assert edge_similarity(np.ones(4), np.ones(4)) == 4 + EPS_FLOOR
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert edge_similarity(a, b) == pytest.approx(sum(abs(x * y) for x, y in zip(a, b)) + EPS_FLOOR, abs=1e-12)
    with pytest.raises(DimensionMismatch):
        edge_similarity(np.ones(3), np.ones(4))


def test_gaussian_similarity():
    assert gaussian_similarity(np.ones(4), np.ones(4)) == pytest.approx(1 + EPS_FLOOR)
    assert gaussian_similarity([0.0], [2.0], sigma=1.0) == pytest.approx(np.exp(-2) + EPS_FLOOR)


def test_weighted_surface_matches_pairwise_similarity():
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(6, 4))
    edges = np.array([[0, 1], [1, 2], [2, 5], [3, 4], [0, 4]])
    ws = weighted_surface(feats, edges)
    assert np.allclose(ws.weights, [edge_similarity(feats[a], feats[b]) for a, b in edges])
    with pytest.raises(ValueError):
        weighted_surface(feats, edges, similarity="cosine")


def test_two_node_mu():
    ws = WeightedSurface(2, np.array([[0, 1]]), np.array([3.0]))
    assert np.allclose(stationary_distribution(ws), [0.5, 0.5])


@pytest.mark.parametrize("leaves", [1, 3, 7])
def test_star_mu(leaves):
    edges = np.array([[0, i] for i in range(1, leaves + 1)])
    mu = stationary_distribution(WeightedSurface(leaves + 1, edges, np.ones(leaves)))
    assert mu[0] == pytest.approx(0.5)
    assert np.allclose(mu[1:], 1 / (2 * leaves))


def test_zero_total_weight():
    with pytest.raises(ZeroTotalWeight):
        stationary_distribution(WeightedSurface(2, np.array([[0, 1]]), np.array([0.0])))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_mu_sums_to_one(seed):
    _, n, edges, feats = random_instance(seed)
    assert abs(weighted_surface(feats, edges).mu.sum() - 1) <= 1e-12


# ----- objective -----

def test_two_node_entropy_gain():
    ws = WeightedSurface(2, np.array([[0, 1]]), np.array([2.0]))
    state = ERSState(ws)
    assert entropy_rate(ws, [False]) == 0.0
    # a single edge leaves no self-loop mass: each endpoint steps deterministically
    assert state.entropy_gain(0) == pytest.approx(0.0, abs=1e-15)
    ws = WeightedSurface(3, np.array([[0, 1], [1, 2]]), np.array([1.0, 1.0]))
    expected = transition_entropy(3, ws.edges, ws.weights, [True, False])
    assert ERSState(ws).entropy_gain(0) == pytest.approx(expected, abs=1e-14)


def test_first_merge_balance_gain():
    n = 5
    ws = WeightedSurface(n, np.array([[0, 1], [1, 2], [2, 3], [3, 4]]), np.ones(4))
    state = ERSState(ws)
    before = -np.log(1 / n) - n
    p = np.array([2, 1, 1, 1]) / n
    after = -(p * np.log(p)).sum() - (n - 1)
    assert state.balance_gain(0) == pytest.approx(after - before, abs=1e-14)


def test_gain_of_selected_edge_is_rejected():
    ws = WeightedSurface(2, np.array([[0, 1]]), np.array([1.0]))
    state = ERSState(ws)
    state.add(0)
    with pytest.raises(ValueError):
        objective_gain(state, 0, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_incremental_gains_match_full_objective(seed):
    rng, n, edges, feats = random_instance(seed, 12)
    ws = weighted_surface(feats, edges)
    lam = float(rng.uniform(0, 2))
    state = ERSState(ws)
    for e in rng.permutation(len(edges)):
        sel = state.selected.copy()
        before = full_objective(n, edges, ws.weights, sel, lam)
        gain = objective_gain(state, int(e), lam)
        state.add(int(e))
        after = full_objective(n, edges, ws.weights, state.selected, lam)
        assert gain == pytest.approx(after - before, abs=1e-10)
        assert objective(ws, state.selected, lam) == pytest.approx(after, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_diminishing_returns(seed):
    rng, n, edges, feats = random_instance(seed, 12)
    ws = weighted_surface(feats, edges)
    lam = float(rng.uniform(0, 2))
    if len(edges) < 2:
        return
    order = rng.permutation(len(edges))
    e = int(order[-1])
    cut_small = int(rng.integers(0, len(edges) - 1))
    cut_big = int(rng.integers(cut_small, len(edges)))
    small, big = ERSState(ws), ERSState(ws)
    for i in order[:cut_small]:
        small.add(int(i))
    for i in order[:cut_big]:
        big.add(int(i))
    assert objective_gain(small, e, lam) >= objective_gain(big, e, lam) - 1e-9


# ----- segmentation -----

def test_k_equals_n_selects_nothing():
    feats = np.ones((5, 4))
    seg = segment_ers(surface(feats, [[0, 1], [1, 2], [2, 3], [3, 4]]), 5)
    assert seg.labels.tolist() == [0, 1, 2, 3, 4] and seg.selected == []


def test_k_one_gives_single_component():
    _, n, edges, feats = random_instance(5)
    seg = segment_ers(surface(feats, edges), 1)
    assert set(seg.labels.tolist()) == {0}


def test_path_graph_greedy_and_optimum():
    feats = np.ones((4, 4))
    edges = np.array([[0, 1], [1, 2], [2, 3]])
    seg = segment_ers(surface(feats, edges), 2, lam=0.5)
    ws = weighted_surface(feats, edges)
    _, best = best_two_partition(4, edges, ws.weights, 0.5)
    # exhaustive optimum balances the halves
    assert best in ([0, 0, 1, 1], [1, 1, 0, 0])
    # greedy first takes the middle edge (two endpoints lose self-loop mass), then the
    # two end merges tie and the lower edge index wins
    assert seg.labels.tolist() == [0, 0, 0, 1]
    assert seg.selected == [1, 0]


def test_argument_checks():
    g = surface(np.ones((3, 4)), [[0, 1], [1, 2]])
    with pytest.raises(ValueError):
        segment_ers(g, 0)
    with pytest.raises(ValueError):
        segment_ers(g, 4)
    with pytest.raises(ValueError):
        segment_ers(g, 2, lam=-1)
    with pytest.raises(DisconnectedInput):
        segment_ers(surface(np.ones((4, 4)), [[0, 1]]), 2)


def test_disconnected_graph_with_enough_labels_is_fine():
    seg = segment_ers(surface(np.ones((4, 4)), [[0, 1], [2, 3]]), 2)
    assert seg.labels.tolist() == [0, 0, 1, 1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_lazy_greedy_equals_naive_greedy(seed):
    rng, n, edges, feats = random_instance(seed)
    k = int(rng.integers(1, n + 1))
    lam = float(rng.uniform(0, 1.5))
    seg = segment_ers(surface(feats, edges), k, lam)
    ws = weighted_surface(feats, edges)
    labels, _ = naive_greedy(n, edges, ws.weights, k, lam)
    assert seg.labels.tolist() == labels.tolist()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_segmentation_invariants(seed):
    rng, n, edges, feats = random_instance(seed, 25)
    k = int(rng.integers(1, n + 1))
    seg = segment_ers(surface(feats, edges), k, float(rng.uniform(0, 1)))
    assert seg.n_components == k
    assert sorted(set(seg.labels.tolist())) == list(range(k))
    chosen = edges[seg.selected]
    # each label is exactly one connected component of the selected edges
    assert components(n, chosen) == seg.labels.tolist()
    assert np.all(np.diff(seg.trace) >= -1e-12)
    assert len(seg.trace) == len(seg.selected) + 1


def test_segmentation_is_deterministic():
    _, n, edges, feats = random_instance(11)
    a = segment_ers(surface(feats, edges), 3)
    b = segment_ers(surface(feats, edges), 3)
    assert np.array_equal(a.labels, b.labels) and a.selected == b.selected


# ----- Wasserstein -----

def test_w1_examples():
    assert wasserstein_1d([0.0], [1.0]) == 1.0
    assert wasserstein_1d([1, 2, 3], [3, 2, 1]) == 0.0
    assert wasserstein_1d([0, 2], [1, 3]) == pytest.approx(1.0)
    with pytest.raises(EmptySample):
        wasserstein_1d([], [1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=9), st.lists(st.floats(-50, 50), min_size=1, max_size=9))
def test_w1_matches_transport_oracles(a, b):
    a, b = np.array(a), np.array(b)
    got = wasserstein_1d(a, b)
    assert abs(got - w1_lcm(a, b)) <= 1e-9
    assert abs(got - w1_lp(a, b)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(*[st.lists(st.floats(-10, 10), min_size=1, max_size=8)] * 3)
def test_w1_is_a_metric(a, b, c):
    ab, ba = wasserstein_1d(a, b), wasserstein_1d(b, a)
    assert ab >= 0 and abs(ab - ba) <= 1e-9
    assert wasserstein_1d(a, c) <= ab + wasserstein_1d(b, c) + 1e-9


# ----- superpixel graph -----

def test_single_superpixel_summary():
    rng = np.random.default_rng(2)
    feats = rng.normal(size=(6, 4))
    g = surface(feats, [[0, 1], [1, 2], [2, 3], [3, 4], [4, 5]], [0, 0, 1, 1, 1, 2])
    sp = build_superpixel_graph(segment_ers(g, 1), g)
    assert sp.k == 1 and len(sp.edges) == 0
    assert np.allclose(sp.node_features[0, :4], feats.mean(0))
    assert np.allclose(sp.node_features[0, 4:8], feats.std(0))
    assert np.allclose(sp.node_features[0, 8:12], feats.max(0))
    assert np.allclose(sp.node_features[0, 12:], feats.min(0))
    assert sp.residue_ids.tolist() == [1]
    assert sp.member_residues == [[0, 1, 2]]


def test_identical_neighbours_have_zero_weight():
    feats = np.array([[1.0, 2, 3, 4], [5, 6, 7, 8], [5, 6, 7, 8], [1, 2, 3, 4]])
    g = surface(feats, [[0, 1], [1, 2], [2, 3]])
    from protgraph.superpixel import Segmentation
    seg = Segmentation(np.array([0, 0, 1, 1]), [0, 2], 2)
    sp = build_superpixel_graph(seg, g)
    assert sp.edges.tolist() == [[0, 1]] and sp.weights.tolist() == [0.0]


def test_w1_edge_weight_on_one_feature():
    feats = np.zeros((4, 4))
    feats[:, 0] = [0, 1, 2, 3]
    g = surface(feats, [[0, 1], [1, 2], [2, 3]])
    from protgraph.superpixel import Segmentation
    sp = build_superpixel_graph(Segmentation(np.array([0, 1, 0, 1]), [], 2), g)
    assert sp.weights[0] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_superpixel_edges_follow_surface_adjacency(seed):
    rng, n, edges, feats = random_instance(seed, 25)
    k = int(rng.integers(1, n + 1))
    g = surface(feats, edges, rng.integers(0, 5, n))
    sp = build_superpixel_graph(segment_ers(g, k), g)
    crossing = {tuple(sorted((int(sp.labels[a]), int(sp.labels[b])))) for a, b in edges
                if sp.labels[a] != sp.labels[b]}
    assert {tuple(e) for e in sp.edges.tolist()} == crossing
    assert np.all(sp.weights >= 0)
    assert sp.node_features.shape == (k, 16)
