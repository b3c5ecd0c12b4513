"""Progressive human-AI ideation engine.

A distributed pipeline of specialized agents that captures a structured
problem, generates ideas from both the designer and twin AI sub-agents,
filters them for local and global novelty with embedding clustering, scores
action-object recombinations for feasibility, and curates the survivors into
implementation-ready concepts. A human participant steers every stage through
the service API or the companion UI.
"""

from .model import (
    ActionObjectPair,
    Concept,
    Idea,
    IdeaStatus,
    LiteratureEntry,
    MidasError,
    Override,
    Phase,
    ProblemStatement,
    Provenance,
    Session,
    SessionConfig,
    ValidationError,
    Vaults,
    apply_override,
    new_session,
    replay,
)

__version__ = "0.1.0"

__all__ = [
    "ActionObjectPair",
    "Concept",
    "Idea",
    "IdeaStatus",
    "LiteratureEntry",
    "MidasError",
    "Override",
    "Phase",
    "ProblemStatement",
    "Provenance",
    "Session",
    "SessionConfig",
    "ValidationError",
    "Vaults",
    "apply_override",
    "new_session",
    "replay",
    "__version__",
]
