"""Independent reference implementations used to check the production kernels.

These deliberately avoid the production code paths: brute-force loops, naive
formulas, and explicit reachability closure over the eps-graph.
"""

from __future__ import annotations

import math


def naive_cosine(a: list[float], b: list[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb)


def pairwise_distance_loop(vectors: list[list[float]]) -> list[list[float]]:
    n = len(vectors)
    out = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i][j] = 1.0 - naive_cosine(vectors[i], vectors[j])
    return out


def mean_pairwise_distance(vectors: list[list[float]]) -> float:
    n = len(vectors)
    if n < 2:
        return 0.0
    total, count = 0.0, 0
    for i in range(n):
        for j in range(i + 1, n):
            total += 1.0 - naive_cosine(vectors[i], vectors[j])
            count += 1
    return total / count


def dbscan_reference(dist: list[list[float]], eps: float, min_pts: int) -> list[int]:
    """Transitive-closure DBSCAN over the eps-graph.

    Core points (>= min_pts neighbors within eps, self included) partition
    into connected components of the core-to-core eps-graph. Components are
    numbered by defining the label of a component as the rank of its smallest
    core index in scan order, which matches first-discovery numbering. A
    non-core point joins the earliest-discovered component that has a core
    within eps of it; otherwise it is noise (-1).
    """
    n = len(dist)
    neighbors = [
        [j for j in range(n) if dist[i][j] <= eps] for i in range(n)
    ]
    core = [len(neighbors[i]) >= min_pts for i in range(n)]

    # Connected components over core points only.
    component = [-1] * n
    comp_id = 0
    for i in range(n):
        if not core[i] or component[i] != -1:
            continue
        stack = [i]
        component[i] = comp_id
        while stack:
            u = stack.pop()
            for v in neighbors[u]:
                if core[v] and component[v] == -1:
                    component[v] = comp_id
                    stack.append(v)
        comp_id += 1

    # Components discovered in scan order already carry first-discovery ranks
    # because the outer loop scans indexes ascending.
    labels = [-1] * n
    for i in range(n):
        if core[i]:
            labels[i] = component[i]
    for i in range(n):
        if core[i]:
            continue
        adjacent = [component[j] for j in neighbors[i] if core[j]]
        if adjacent:
            labels[i] = min(adjacent)
    return labels


def canonical_partition(labels: list[int]) -> tuple:
    """Noise indexes plus the set of clusters as frozensets, for comparison up
    to label renaming."""
    noise = frozenset(i for i, l in enumerate(labels) if l == -1)
    clusters = {}
    for i, l in enumerate(labels):
        if l != -1:
            clusters.setdefault(l, set()).add(i)
    return noise, frozenset(frozenset(c) for c in clusters.values())
