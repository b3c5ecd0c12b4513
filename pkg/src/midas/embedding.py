"""Text-to-vector conversion and the cosine similarity kernel.

Vectors are normalized at ingestion so similarity reduces to a dot product;
every comparison requires matching model tags and dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Idea, LiteratureEntry, MidasError, ValidationError


class DimensionMismatch(MidasError):
    """Vectors from different models or dimensions were mixed."""


@dataclass
class EmbeddingVector:
    values: list[float]
    model_tag: str

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding contains non-finite entries")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValidationError("embedding must be non-zero")
        self.values = (arr / norm).tolist()

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def embedding_text(record: Idea | LiteratureEntry) -> str:
    """Canonical serialization of an AOC record for the embedder."""
    return (
        f"Idea: {record.title}. Action: {record.action}. "
        f"Object: {record.object}. Context: {record.context}"
    )


def embed_idea(idea: Idea, provider) -> EmbeddingVector:
    """Embed one idea through the provider; the result is unit-norm."""
    idea.validate()
    vectors = provider.embed_batch([embedding_text(idea)])
    return EmbeddingVector(values=vectors[0], model_tag=provider.embedding_model_tag)


def embed_texts(texts: list[str], provider) -> list[EmbeddingVector]:
    vectors = provider.embed_batch(texts)
    tag = provider.embedding_model_tag
    return [EmbeddingVector(values=v, model_tag=tag) for v in vectors]


def _check_comparable(a: EmbeddingVector, b: EmbeddingVector) -> None:
    if len(a.values) != len(b.values):
        raise DimensionMismatch(
            f"vector lengths differ: {len(a.values)} vs {len(b.values)}"
        )
    if a.model_tag != b.model_tag:
        raise DimensionMismatch(f"model tags differ: {a.model_tag} vs {b.model_tag}")


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]; identical
    vectors compare at exactly 1."""
    _check_comparable(a, b)
    if a.values == b.values:
        return 1.0
    value = float(np.dot(a.array(), b.array()))
    return max(-1.0, min(1.0, value))


def cosine_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """d = 1 - sim, within [0, 2]; d(v, v) = 0."""
    return 1.0 - cosine_similarity(a, b)


def similarity_matrix(vectors: list[EmbeddingVector]) -> np.ndarray:
    """Pairwise cosine similarities; diagonal exactly 1, symmetric by construction."""
    if not vectors:
        raise ValidationError("similarity_matrix requires at least one vector")
    first = vectors[0]
    for vec in vectors[1:]:
        _check_comparable(first, vec)
    stacked = np.stack([v.array() for v in vectors])
    sims = np.clip(stacked @ stacked.T, -1.0, 1.0)
    sims = np.triu(sims, 1)
    sims = sims + sims.T
    np.fill_diagonal(sims, 1.0)
    return sims


def distance_matrix(vectors: list[EmbeddingVector]) -> np.ndarray:
    """Cosine distance matrix: zero diagonal, entries within [0, 2]."""
    dist = 1.0 - similarity_matrix(vectors)
    np.fill_diagonal(dist, 0.0)
    return np.clip(dist, 0.0, 2.0)


def idea_vectors(ideas: list[Idea]) -> list[EmbeddingVector]:
    """Collect stored embeddings, failing loudly on any unembedded idea."""
    out = []
    for idea in ideas:
        if idea.embedding is None or idea.embedding_model is None:
            raise ValidationError(f"idea {idea.id} has no embedding")
        out.append(EmbeddingVector(values=idea.embedding, model_tag=idea.embedding_model))
    return out
