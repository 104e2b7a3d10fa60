"""Structural graph metrics and Spearman rank correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.sparse.csgraph import shortest_path

from .network import Graph


class UndefinedMetricError(ValueError):
    """The requested statistic has no defined value for this input."""


@dataclass(frozen=True)
class GraphProperties:
    avg_path_length: float
    clustering_coefficient: float
    edge_count: int
    reachable_pair_fraction: float


@dataclass(frozen=True)
class CorrelationReport:
    rho: float
    p_value: float
    ci_low: float
    ci_high: float
    n: int


def path_length_stats(g: Graph) -> tuple[float, float]:
    """Return ``(mean shortest-path length, reachable pair fraction)``.

    The mean runs over unordered pairs that are connected; disconnected pairs
    only lower the reachable fraction.
    """
    n = g.node_count
    if n < 2:
        raise UndefinedMetricError("average path length needs at least two nodes")
    dist = shortest_path(g._sparse(), method="D", directed=False, unweighted=True)
    upper = dist[np.triu_indices(n, k=1)]
    finite = upper[np.isfinite(upper)]
    if finite.size == 0:
        raise UndefinedMetricError("graph has no reachable node pairs")
    return float(finite.mean()), finite.size / upper.size


def average_path_length(g: Graph) -> float:
    return path_length_stats(g)[0]


def local_clustering(g: Graph) -> np.ndarray:
    """Per-node clustering; ``nan`` where the degree is below two."""
    a = g.adjacency_matrix().astype(np.float64)
    deg = a.sum(axis=1)
    # diag(A^3) counts each neighbour-neighbour edge twice
    closed = np.einsum("ij,jk,ki->i", a, a, a)
    pairs = deg * (deg - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(deg >= 2, closed / pairs, np.nan)


def clustering_coefficient(g: Graph, low_degree: str = "exclude") -> float:
    """Mean local clustering coefficient.

    ``low_degree="exclude"`` drops nodes with fewer than two neighbours from
    the average; ``"zero"`` counts them as 0.
    """
    local = local_clustering(g)
    if low_degree == "zero":
        return float(np.nan_to_num(local, nan=0.0).mean())
    if low_degree != "exclude":
        raise ValueError(f"low_degree must be 'exclude' or 'zero', not {low_degree!r}")
    kept = local[~np.isnan(local)]
    return float(kept.mean()) if kept.size else 0.0


def graph_properties(g: Graph) -> GraphProperties:
    apl, reach = path_length_stats(g)
    return GraphProperties(
        avg_path_length=apl,
        clustering_coefficient=clustering_coefficient(g),
        edge_count=g.edge_count,
        reachable_pair_fraction=reach,
    )


def _paired(xs, ys):
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d sequences of equal length")
    if len(x) < 4:
        raise UndefinedMetricError(f"need at least 4 paired values, got {len(x)}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedMetricError("correlation undefined for a constant input")
    return x, y


def _report(x, y, confidence) -> CorrelationReport:
    # product-moment correlation with a t-approximation p-value and Fisher-z interval
    m = len(x)
    x = x - x.mean()
    y = y - y.mean()
    r = float(np.dot(x, y) / math.sqrt(np.dot(x, x) * np.dot(y, y)))
    r = min(1.0, max(-1.0, r))
    if abs(r) == 1.0:
        return CorrelationReport(r, 0.0, r, r, m)
    t = r * math.sqrt((m - 2) / (1.0 - r * r))
    p = float(2.0 * stats.t.sf(abs(t), m - 2))
    z = math.atanh(r)
    half = stats.norm.ppf(0.5 + confidence / 2) / math.sqrt(m - 3)
    return CorrelationReport(r, p, math.tanh(z - half), math.tanh(z + half), m)


def spearman(xs, ys, confidence: float = 0.95) -> CorrelationReport:
    """Spearman's rho (ties get average ranks) with a t-approximation p-value and Fisher-z interval."""
    x, y = _paired(xs, ys)
    return _report(stats.rankdata(x), stats.rankdata(y), confidence)


def pearson(xs, ys, confidence: float = 0.95) -> CorrelationReport:
    """Pearson's r on the raw values, with the same inference as :func:`spearman`."""
    x, y = _paired(xs, ys)
    return _report(x, y, confidence)


CORRELATIONS = {"spearman": spearman, "pearson": pearson}
