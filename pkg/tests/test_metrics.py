import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from multiplex_consensus.metrics import (
    UndefinedMetricError,
    average_path_length,
    clustering_coefficient,
    graph_properties,
    path_length_stats,
    pearson,
    spearman,
)
from multiplex_consensus.network import Graph, KRegularParams, generate_k_regular, shuffle_labels


# --- brute-force oracles ---------------------------------------------------


def floyd_warshall_apl(g: Graph):
    n = g.node_count
    inf = float("inf")
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for u, v in g.edge_set():
        d[u][v] = d[v][u] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i][k] + d[k][j] < d[i][j]:
                    d[i][j] = d[i][k] + d[k][j]
    reach = [d[i][j] for i in range(n) for j in range(i + 1, n) if d[i][j] < inf]
    return sum(reach) / len(reach), len(reach) / (n * (n - 1) / 2)


def triangle_cc(g: Graph, zero_low=False):
    edges = g.edge_set()
    nbrs = {v: set() for v in range(g.node_count)}
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    local = []
    for v in range(g.node_count):
        k = len(nbrs[v])
        if k < 2:
            if zero_low:
                local.append(0.0)
            continue
        links = sum(1 for a, b in itertools.combinations(sorted(nbrs[v]), 2) if (a, b) in edges)
        local.append(2 * links / (k * (k - 1)))
    return sum(local) / len(local) if local else 0.0


def random_graph(rng, n, p):
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p])


# --- APL -------------------------------------------------------------------


def test_apl_path_graph():
    assert average_path_length(Graph(3, [(0, 1), (1, 2)])) == pytest.approx(4 / 3)


def test_apl_ring_10():
    assert average_path_length(generate_k_regular(KRegularParams(100, 10))) == pytest.approx(2.980, abs=1e-3)


def test_apl_complete():
    assert average_path_length(generate_k_regular(KRegularParams(100, 50))) == 1.0


def test_apl_disconnected_reports_fraction():
    apl, frac = path_length_stats(Graph(4, [(0, 1), (2, 3)]))
    assert apl == 1.0
    assert frac == pytest.approx(2 / 6)


def test_apl_no_pairs_raises():
    with pytest.raises(UndefinedMetricError):
        average_path_length(Graph(3))


# --- CC --------------------------------------------------------------------


def test_cc_triangle():
    assert clustering_coefficient(generate_k_regular(KRegularParams(3, 1))) == 1.0


@pytest.mark.parametrize("k,expected,closed", [(10, 0.711, 27 / 38), (20, 0.731, 57 / 78)])
def test_cc_rings(k, expected, closed):
    cc = clustering_coefficient(generate_k_regular(KRegularParams(100, k)))
    assert cc == pytest.approx(expected, abs=1e-3)
    assert cc == pytest.approx(closed, abs=1e-12)


def test_cc_low_degree_modes():
    # triangle plus a pendant node 3 attached to 0
    g = Graph(4, [(0, 1), (0, 2), (1, 2), (0, 3)])
    assert clustering_coefficient(g) == pytest.approx((1 / 3 + 1 + 1) / 3)
    assert clustering_coefficient(g, low_degree="zero") == pytest.approx((1 / 3 + 1 + 1) / 4)


def test_cc_no_qualifying_nodes():
    assert clustering_coefficient(Graph(3, [(0, 1)])) == 0.0


# --- oracle agreement ------------------------------------------------------


@pytest.mark.parametrize("seed", range(50))
def test_metrics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 31))
    g = random_graph(rng, n, float(rng.uniform(0.05, 0.6)))
    assert clustering_coefficient(g) == pytest.approx(triangle_cc(g), abs=1e-12)
    assert clustering_coefficient(g, "zero") == pytest.approx(triangle_cc(g, zero_low=True), abs=1e-12)
    if g.edge_count:
        assert path_length_stats(g) == pytest.approx(floyd_warshall_apl(g), abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_metrics_invariant_under_shuffle(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(rng, 25, 0.2)
    h = shuffle_labels(g, rng)
    a, b = graph_properties(g) if g.edge_count else None, graph_properties(h) if h.edge_count else None
    if a is None:
        return
    assert a.avg_path_length == pytest.approx(b.avg_path_length, abs=1e-12)
    assert a.clustering_coefficient == pytest.approx(b.clustering_coefficient, abs=1e-12)
    assert a.reachable_pair_fraction == b.reachable_pair_fraction


# --- Spearman --------------------------------------------------------------


def test_spearman_identical():
    assert spearman([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]).rho == 1.0


def test_spearman_reversed():
    assert spearman([1, 2, 3, 4, 5], [5, 4, 3, 2, 1]).rho == -1.0


def test_spearman_constant_raises():
    with pytest.raises(UndefinedMetricError):
        spearman([1, 1, 1, 1], [1, 2, 3, 4])


def test_spearman_too_short():
    with pytest.raises(UndefinedMetricError):
        spearman([1, 2, 3], [3, 2, 1])


@pytest.mark.parametrize(
    "rho,m,ci,p",
    [(-0.726, 50, (-0.836, -0.561), 2.437e-9), (-0.912, 25, (-0.961, -0.808), 2.28e-10)],
)
def test_fisher_interval_and_p_value_formula(rho, m, ci, p):
    # reported interval/p-value pairs for the k-regular (50 cells) and scale-free (25 cells) families
    z, half = math.atanh(rho), 1.959963984540054 / math.sqrt(m - 3)
    assert math.tanh(z - half) == pytest.approx(ci[0], abs=1e-3)
    assert math.tanh(z + half) == pytest.approx(ci[1], abs=1e-3)
    t = rho * math.sqrt((m - 2) / (1 - rho**2))
    assert 2 * stats.t.sf(abs(t), m - 2) == pytest.approx(p, rel=0.05)


float_lists = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=40)


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_spearman_matches_scipy(data):
    xs = data.draw(float_lists)
    ys = data.draw(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=len(xs), max_size=len(xs)))
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return
    rep = spearman(xs, ys)
    ref = stats.spearmanr(xs, ys)
    assert rep.rho == pytest.approx(ref.statistic, abs=1e-9)
    assert -1.0 <= rep.rho <= 1.0
    assert rep.ci_low <= rep.rho <= rep.ci_high
    assert 0.0 <= rep.p_value <= 1.0
    if abs(rep.rho) < 1:
        assert rep.p_value == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(xs=st.lists(st.integers(-500, 500), min_size=4, max_size=30, unique=True), seed=st.integers(0, 2**32 - 1))
def test_spearman_symmetric_and_monotone_invariant(xs, seed):
    ys = list(np.random.default_rng(seed).permutation(len(xs)))
    a = spearman(xs, ys)
    assert spearman(ys, xs).rho == pytest.approx(a.rho, abs=1e-12)
    assert spearman([x**3 for x in xs], ys).rho == pytest.approx(a.rho, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_pearson_matches_scipy(data):
    xs = data.draw(st.lists(st.integers(-1000, 1000), min_size=4, max_size=40))
    ys = data.draw(st.lists(st.integers(-1000, 1000), min_size=len(xs), max_size=len(xs)))
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return
    rep = pearson(xs, ys)
    ref = stats.pearsonr(xs, ys)
    assert rep.rho == pytest.approx(ref.statistic, abs=1e-9)
    if abs(rep.rho) < 1:
        assert rep.p_value == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)
        lo, hi = ref.confidence_interval(0.95)
        assert (rep.ci_low, rep.ci_high) == pytest.approx((lo, hi), abs=1e-9)


def test_pearson_differs_from_rank_correlation_on_curved_data():
    xs = [1, 2, 3, 4, 5, 6]
    ys = [x**4 for x in xs]
    assert spearman(xs, ys).rho == 1.0
    assert pearson(xs, ys).rho < 0.97
