"""Density clustering over cosine distances, 2-D projection for plots, and the
diversity metrics that drive shortlisting.

Clustering runs in the full-dimensional space; the principal-axis projection
exists only for visualization. DBSCAN here counts the point itself toward
min_pts, attaches border points to the first-discovered cluster, and is exact
at desk scale (a few hundred ideas).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingVector, distance_matrix, idea_vectors
from .model import Idea, ValidationError

NOISE = -1


@dataclass
class ClusterAssignment:
    labels: list[int]
    n_clusters: int
    eps: float
    min_pts: int

    def validate(self) -> None:
        seen = {l for l in self.labels if l != NOISE}
        if seen != set(range(self.n_clusters)):
            raise ValidationError(
                f"cluster labels not contiguous: {sorted(seen)} vs n_clusters={self.n_clusters}"
            )

    def members(self, label: int) -> list[int]:
        return [i for i, l in enumerate(self.labels) if l == label]

    @property
    def noise_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.labels) if l == NOISE]


@dataclass
class DiversityReport:
    idea_sparsity: float  # mean pairwise cosine distance, in [0, 2]
    cluster_sparsity: float  # mean pairwise centroid cosine distance, in [0, 2]
    noise_fraction: float  # share of points labeled noise

    def to_dict(self) -> dict[str, float]:
        return {
            "idea_sparsity": self.idea_sparsity,
            "cluster_sparsity": self.cluster_sparsity,
            "noise_fraction": self.noise_fraction,
        }


def _check_distance_matrix(dist: np.ndarray) -> None:
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValidationError(f"distance matrix must be square, got {dist.shape}")
    if not np.allclose(dist, dist.T, atol=1e-12):
        raise ValidationError("distance matrix must be symmetric")
    if not np.allclose(np.diagonal(dist), 0.0, atol=1e-12):
        raise ValidationError("distance matrix must have a zero diagonal")


def dbscan(dist: np.ndarray, eps: float, min_pts: int) -> ClusterAssignment:
    """Classic DBSCAN over a precomputed distance matrix.

    A point is core iff it has >= min_pts neighbors within eps, itself
    included. Points are scanned in index order; each undiscovered core seeds
    the next cluster and expands breadth-first, so border points attach to the
    earliest-discovered cluster that reaches them.
    """
    dist = np.asarray(dist, dtype=np.float64)
    _check_distance_matrix(dist)
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    if min_pts < 1:
        raise ValidationError("min_pts must be >= 1")
    n = dist.shape[0]
    neighbors = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = [len(neighbors[i]) >= min_pts for i in range(n)]
    labels: list[int | None] = [None] * n  # None = unclassified
    cluster_id = 0
    for i in range(n):
        if labels[i] is not None:
            continue
        if not core[i]:
            labels[i] = NOISE  # provisional; a later cluster may claim it as border
            continue
        labels[i] = cluster_id
        queue = deque(int(j) for j in neighbors[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster_id  # border point claimed by the first cluster to reach it
                continue
            if labels[j] is not None:
                continue
            labels[j] = cluster_id
            if core[j]:
                queue.extend(int(k) for k in neighbors[j])
        cluster_id += 1
    assignment = ClusterAssignment(
        labels=[NOISE if l is None else l for l in labels],
        n_clusters=cluster_id,
        eps=eps,
        min_pts=min_pts,
    )
    assignment.validate()
    return assignment


def cluster_ideas(ideas: list[Idea], eps: float, min_pts: int) -> ClusterAssignment:
    return dbscan(distance_matrix(idea_vectors(ideas)), eps, min_pts)


def project_2d(vectors: list[EmbeddingVector], seed: int) -> list[tuple[float, float]]:
    """Deterministic 2-D view: center the data, project onto the top two
    principal axes, and fix each axis sign by forcing its largest-magnitude
    loading positive. The seed is recorded by callers for provenance; the
    projection itself is fully deterministic.
    """
    if not vectors:
        raise ValidationError("project_2d requires at least one vector")
    data = np.stack([v.array() for v in vectors])
    centered = data - data.mean(axis=0, keepdims=True)
    if np.allclose(centered, 0.0):
        return [(0.0, 0.0)] * len(vectors)
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    axes = eigvecs[:, np.argsort(eigvals)[::-1][:2]].T
    if axes.shape[0] < 2:
        axes = np.vstack([axes, np.zeros_like(axes[0])])
    fixed = []
    for axis in axes:
        pivot = int(np.argmax(np.abs(axis)))
        fixed.append(axis if axis[pivot] >= 0 else -axis)
    projected = centered @ np.vstack(fixed).T
    return [(float(x), float(y)) for x, y in projected]


def shortlist_representatives(ideas: list[Idea], assignment: ClusterAssignment) -> list[Idea]:
    """One medoid per cluster plus every noise point, in input order.

    The medoid minimizes the summed intra-cluster cosine distance; ties break
    toward the lowest idea id, so duplicates resolve deterministically.
    """
    if len(ideas) != len(assignment.labels):
        raise ValidationError(
            f"labels ({len(assignment.labels)}) do not conform to ideas ({len(ideas)})"
        )
    if not ideas:
        return []
    dist = distance_matrix(idea_vectors(ideas))
    keep: set[int] = set(assignment.noise_indices)
    for label in range(assignment.n_clusters):
        members = assignment.members(label)
        sums = dist[np.ix_(members, members)].sum(axis=1)
        best = min(
            range(len(members)),
            key=lambda k: (sums[k], _id_sort_key(ideas[members[k]].id)),
        )
        keep.add(members[best])
    return [idea for i, idea in enumerate(ideas) if i in keep]


def _id_sort_key(idea_id: str) -> tuple[int, str]:
    return (len(idea_id), idea_id)


def diversity_report(ideas: list[Idea], assignment: ClusterAssignment) -> DiversityReport:
    """Spread metrics over the idea pool: mean pairwise distance across ideas,
    mean pairwise distance across cluster centroids, and the noise share."""
    if not ideas:
        raise ValidationError("diversity_report requires at least one idea")
    if len(ideas) != len(assignment.labels):
        raise ValidationError("labels do not conform to ideas")
    vectors = idea_vectors(ideas)
    dist = distance_matrix(vectors)
    n = len(ideas)
    if n == 1:
        idea_sparsity = 0.0
    else:
        iu = np.triu_indices(n, k=1)
        idea_sparsity = float(np.mean(dist[iu]))
    centroids = []
    data = np.stack([v.array() for v in vectors])
    for label in range(assignment.n_clusters):
        members = assignment.members(label)
        centroid = data[members].mean(axis=0)
        norm = np.linalg.norm(centroid)
        centroids.append(centroid / norm if norm > 0 else centroid)
    if len(centroids) < 2:
        cluster_sparsity = 0.0
    else:
        stacked = np.stack(centroids)
        sims = np.clip(stacked @ stacked.T, -1.0, 1.0)
        iu = np.triu_indices(len(centroids), k=1)
        cluster_sparsity = float(np.mean(1.0 - sims[iu]))
    noise_fraction = len(assignment.noise_indices) / n
    report = DiversityReport(
        idea_sparsity=min(max(idea_sparsity, 0.0), 2.0),
        cluster_sparsity=min(max(cluster_sparsity, 0.0), 2.0),
        noise_fraction=noise_fraction,
    )
    return report


def plot_export(
    ideas: list[Idea],
    assignment: ClusterAssignment,
    seed: int,
) -> dict:
    """The JSON document consumed by the CLI plot emitter and the UI scatter view."""
    points_2d = project_2d(idea_vectors(ideas), seed)
    report = diversity_report(ideas, assignment)
    return {
        "points": [
            {
                "id": idea.id,
                "x": x,
                "y": y,
                "label": label,
                "provenance": idea.provenance.value,
                "title": idea.title,
                "action": idea.action,
                "object": idea.object,
                "context": idea.context,
            }
            for idea, (x, y), label in zip(ideas, points_2d, assignment.labels)
        ],
        "eps": assignment.eps,
        "min_pts": assignment.min_pts,
        "n_clusters": assignment.n_clusters,
        "report": report.to_dict(),
    }
