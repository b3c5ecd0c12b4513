"""Density clustering, 2-D projection, representative shortlisting, diversity."""

import random

import numpy as np
import pytest
from scipy import stats

from midas.clustering import (
    ClusterAssignment,
    dbscan,
    diversity_report,
    plot_export,
    project_2d,
    shortlist_representatives,
)
from midas.embedding import EmbeddingVector, distance_matrix
from midas.model import Idea, Phase, Provenance, ValidationError

from oracles import canonical_partition, dbscan_reference, mean_pairwise_distance


def unit(rng: random.Random, dim: int = 8) -> list[float]:
    vec = [rng.gauss(0, 1) for _ in range(dim)]
    norm = sum(v * v for v in vec) ** 0.5
    return [v / norm for v in vec]


def embedded_idea(n: int, values: list[float]) -> Idea:
    norm = sum(v * v for v in values) ** 0.5
    return Idea(
        id=f"idea-{n:04d}",
        title=f"idea {n}",
        action=f"action {n}",
        object=f"object {n}",
        context=f"context {n}",
        provenance=Provenance.AI_FORMULATOR,
        origin_phase=Phase.GENERATION,
        embedding=[v / norm for v in values],
        embedding_model="test",
    )


def basis(i: int, dim: int = 8) -> list[float]:
    vec = [0.0] * dim
    vec[i] = 1.0
    return vec


class TestDbscan:
    def test_coincident_pair_forms_one_cluster(self):
        dist = np.array([[0.0, 0.0], [0.0, 0.0]])
        out = dbscan(dist, eps=0.3, min_pts=2)
        assert out.labels == [0, 0]
        assert out.n_clusters == 1

    def test_mutually_distant_points_are_all_noise(self):
        n = 5
        dist = np.full((n, n), 0.9)
        np.fill_diagonal(dist, 0.0)
        out = dbscan(dist, eps=0.3, min_pts=2)
        assert out.labels == [-1] * n
        assert out.n_clusters == 0

    def test_random_instances_match_reachability_oracle(self):
        rng = random.Random(17)
        for _ in range(40):
            n = rng.randint(2, 50)
            vecs = [unit(rng) for _ in range(n)]
            # Inject duplicates and near-duplicates to create real clusters.
            for _ in range(n // 3):
                vecs[rng.randrange(n)] = list(vecs[rng.randrange(n)])
            dist = distance_matrix([EmbeddingVector(v, "t") for v in vecs])
            eps = rng.uniform(0.05, 1.5)
            min_pts = rng.randint(1, 5)
            ours = dbscan(dist, eps, min_pts)
            reference = dbscan_reference(dist.tolist(), eps, min_pts)
            assert canonical_partition(ours.labels) == canonical_partition(reference)

    def test_permutation_invariance_up_to_renaming(self):
        rng = random.Random(4)
        vecs = [unit(rng) for _ in range(20)]
        for _ in range(8):
            vecs[rng.randrange(20)] = list(vecs[rng.randrange(20)])
        vectors = [EmbeddingVector(v, "t") for v in vecs]
        base = dbscan(distance_matrix(vectors), 0.4, 2)
        perm = list(range(20))
        rng.shuffle(perm)
        permuted = dbscan(distance_matrix([vectors[i] for i in perm]), 0.4, 2)
        base_parts = canonical_partition(base.labels)
        # Map permuted labels back to original indexes before comparing.
        unpermuted = [-1] * 20
        for new_pos, old_pos in enumerate(perm):
            unpermuted[old_pos] = permuted.labels[new_pos]
        assert canonical_partition(unpermuted) == base_parts

    def test_max_eps_with_two_points_leaves_no_noise(self):
        rng = random.Random(8)
        for n in (2, 5, 9):
            vecs = [EmbeddingVector(unit(rng), "t") for _ in range(n)]
            out = dbscan(distance_matrix(vecs), eps=2.0, min_pts=2)
            assert out.noise_indices == []

    def test_non_square_rejected(self):
        with pytest.raises(ValidationError):
            dbscan(np.zeros((2, 3)), 0.3, 2)

    def test_asymmetric_rejected(self):
        dist = np.array([[0.0, 0.5], [0.4, 0.0]])
        with pytest.raises(ValidationError):
            dbscan(dist, 0.3, 2)

    def test_border_point_attaches_to_first_discovered_cluster(self):
        # Point 4 is non-core (3 neighbors < min_pts 4) but within eps of core
        # 3 (cluster of 0..3, discovered first) and core 5 (cluster of 5..8).
        n = 9
        dist = np.full((n, n), 0.9)
        for group in ([0, 1, 2, 3], [5, 6, 7, 8]):
            for i in group:
                for j in group:
                    if i != j:
                        dist[i][j] = 0.1
        dist[3][4] = dist[4][3] = 0.25
        dist[4][5] = dist[5][4] = 0.25
        np.fill_diagonal(dist, 0.0)
        out = dbscan(dist, eps=0.3, min_pts=4)
        assert out.labels[4] == out.labels[0]
        assert out.labels[5] != out.labels[0]
        reference = dbscan_reference(dist.tolist(), 0.3, 4)
        assert canonical_partition(out.labels) == canonical_partition(reference)


class TestProject2d:
    def test_single_vector_at_origin(self):
        out = project_2d([EmbeddingVector(basis(0), "t")], seed=1)
        assert out == [(0.0, 0.0)]

    def test_duplicated_vectors_are_coincident(self):
        v = EmbeddingVector(basis(1), "t")
        out = project_2d([v, v, v], seed=1)
        assert out[0] == out[1] == out[2]

    def test_deterministic_for_fixed_seed(self):
        rng = random.Random(3)
        vecs = [EmbeddingVector(unit(rng), "t") for _ in range(12)]
        assert project_2d(vecs, seed=5) == project_2d(vecs, seed=5)

    def test_rank_correlation_positive_on_three_cluster_set(self):
        rng = random.Random(6)
        centers = [basis(0, 16), basis(5, 16), basis(11, 16)]
        vecs = []
        for center in centers:
            for _ in range(8):
                noise = [c + rng.gauss(0, 0.05) for c in center]
                norm = sum(v * v for v in noise) ** 0.5
                vecs.append(EmbeddingVector([v / norm for v in noise], "t"))
        points = project_2d(vecs, seed=0)
        dist_high = distance_matrix(vecs)
        n = len(vecs)
        high, low = [], []
        for i in range(n):
            for j in range(i + 1, n):
                high.append(dist_high[i][j])
                low.append(
                    ((points[i][0] - points[j][0]) ** 2 + (points[i][1] - points[j][1]) ** 2) ** 0.5
                )
        rho = stats.spearmanr(high, low).statistic
        assert rho > 0

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            project_2d([], seed=0)


class TestShortlist:
    def test_three_identical_plus_one_distant_keeps_two(self):
        ideas = [
            embedded_idea(1, basis(0)),
            embedded_idea(2, basis(0)),
            embedded_idea(3, basis(0)),
            embedded_idea(4, basis(3)),
        ]
        dist = distance_matrix(
            [EmbeddingVector(i.embedding, "test") for i in ideas]
        )
        assignment = dbscan(dist, eps=0.3, min_pts=2)
        survivors = shortlist_representatives(ideas, assignment)
        assert [i.id for i in survivors] == ["idea-0001", "idea-0004"]

    def test_all_noise_passes_everything_through(self):
        ideas = [embedded_idea(i, basis(i)) for i in range(5)]
        assignment = ClusterAssignment(labels=[-1] * 5, n_clusters=0, eps=0.3, min_pts=2)
        survivors = shortlist_representatives(ideas, assignment)
        assert survivors == ideas

    def test_single_cluster_keeps_single_medoid(self):
        ideas = [embedded_idea(i, basis(2)) for i in range(1, 7)]
        assignment = ClusterAssignment(labels=[0] * 6, n_clusters=1, eps=0.3, min_pts=2)
        survivors = shortlist_representatives(ideas, assignment)
        assert len(survivors) == 1
        assert survivors[0].id == "idea-0001"  # tie broken by lowest id

    def test_idempotent_at_same_eps(self):
        rng = random.Random(13)
        vecs = [unit(rng) for _ in range(12)]
        for _ in range(5):
            vecs[rng.randrange(12)] = list(vecs[rng.randrange(12)])
        ideas = [embedded_idea(i, v) for i, v in enumerate(vecs)]
        dist = distance_matrix([EmbeddingVector(i.embedding, "test") for i in ideas])
        first = shortlist_representatives(ideas, dbscan(dist, 0.3, 2))
        dist2 = distance_matrix([EmbeddingVector(i.embedding, "test") for i in first])
        second = shortlist_representatives(first, dbscan(dist2, 0.3, 2))
        assert [i.id for i in second] == [i.id for i in first]

    def test_label_length_mismatch_rejected(self):
        ideas = [embedded_idea(1, basis(0))]
        assignment = ClusterAssignment(labels=[-1, -1], n_clusters=0, eps=0.3, min_pts=2)
        with pytest.raises(ValidationError):
            shortlist_representatives(ideas, assignment)


class TestDiversityReport:
    def test_identical_ideas_zero_sparsity(self):
        ideas = [embedded_idea(i, basis(0)) for i in range(3)]
        assignment = ClusterAssignment(labels=[0, 0, 0], n_clusters=1, eps=0.3, min_pts=2)
        report = diversity_report(ideas, assignment)
        assert report.idea_sparsity == 0.0

    def test_orthogonal_pair_sparsity_one(self):
        ideas = [embedded_idea(1, basis(0)), embedded_idea(2, basis(1))]
        assignment = ClusterAssignment(labels=[-1, -1], n_clusters=0, eps=0.3, min_pts=2)
        report = diversity_report(ideas, assignment)
        assert report.idea_sparsity == 1.0
        assert report.noise_fraction == 1.0

    def test_single_idea_zero_sparsity(self):
        ideas = [embedded_idea(1, basis(0))]
        assignment = ClusterAssignment(labels=[-1], n_clusters=0, eps=0.3, min_pts=2)
        assert diversity_report(ideas, assignment).idea_sparsity == 0.0

    def test_matches_pairwise_mean_oracle(self):
        rng = random.Random(19)
        for _ in range(20):
            n = rng.randint(2, 15)
            vecs = [unit(rng) for _ in range(n)]
            ideas = [embedded_idea(i, v) for i, v in enumerate(vecs)]
            dist = distance_matrix([EmbeddingVector(i.embedding, "test") for i in ideas])
            assignment = dbscan(dist, 0.4, 2)
            report = diversity_report(ideas, assignment)
            normalized = [i.embedding for i in ideas]
            assert abs(report.idea_sparsity - mean_pairwise_distance(normalized)) <= 1e-12

    def test_noise_fraction_formula(self):
        ideas = [embedded_idea(i, basis(i)) for i in range(4)]
        assignment = ClusterAssignment(labels=[-1, -1, -1, -1], n_clusters=0, eps=0.3, min_pts=2)
        assert diversity_report(ideas, assignment).noise_fraction == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            diversity_report([], ClusterAssignment(labels=[], n_clusters=0, eps=0.3, min_pts=2))


class TestPlotExport:
    def test_schema_shape(self):
        ideas = [embedded_idea(i, basis(i)) for i in range(3)]
        assignment = ClusterAssignment(labels=[-1, -1, -1], n_clusters=0, eps=0.3, min_pts=2)
        doc = plot_export(ideas, assignment, seed=1)
        assert set(doc) >= {"points", "eps", "min_pts", "report", "n_clusters"}
        assert len(doc["points"]) == 3
        for point in doc["points"]:
            assert set(point) >= {"id", "x", "y", "label", "provenance"}
        assert doc["eps"] == 0.3
        assert doc["min_pts"] == 2
