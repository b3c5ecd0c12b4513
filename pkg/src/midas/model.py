"""Domain model: structured problem/idea/concept types, the four vaults, and the
event-sourced session that every agent reads from and writes to.

All mutation flows through ``Session.commit``: each call appends exactly one
event and applies it to the snapshot, so replaying ``event_log`` from an empty
session reproduces the state bit for bit. Timestamps are logical (the event
index); wall-clock time never enters the serialized session.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

SCHEMA_VERSION = 1

EMBED_ATOL = 1e-6  # unit-norm tolerance for stored embeddings


class MidasError(Exception):
    """Base error for the engine."""


class ValidationError(MidasError):
    """Rejected input or violated domain invariant."""


class Phase(str, Enum):
    DEFINITION = "definition"
    GENERATION = "generation"
    ASSESSMENT = "assessment"
    DIVERGENCE = "divergence"
    REFINEMENT = "refinement"
    CONCEPTUALIZATION = "conceptualization"
    DONE = "done"


PHASE_ORDER = [
    Phase.DEFINITION,
    Phase.GENERATION,
    Phase.ASSESSMENT,
    Phase.DIVERGENCE,
    Phase.REFINEMENT,
    Phase.CONCEPTUALIZATION,
    Phase.DONE,
]


def phase_index(phase: Phase) -> int:
    return PHASE_ORDER.index(phase)


class Provenance(str, Enum):
    HUMAN = "human"
    AI_FORMULATOR = "ai_formulator"
    AI_EXPLORER = "ai_explorer"
    NAVIGATOR_SYNTHESIZED = "navigator_synthesized"


class IdeaStatus(str, Enum):
    RAW = "raw"
    SHORTLISTED = "shortlisted"
    GLOBALLY_NOVEL = "globally_novel"
    CURATED = "curated"
    REMOVED = "removed"


# Forward progression of the status machine; REMOVED is reachable from any of
# these, and only a human override may step backwards.
STATUS_ORDER = [
    IdeaStatus.RAW,
    IdeaStatus.SHORTLISTED,
    IdeaStatus.GLOBALLY_NOVEL,
    IdeaStatus.CURATED,
]


class RetrievalMode(str, Enum):
    SEARCH = "search"
    MANUAL = "manual"


class EventKind(str, Enum):
    SESSION_CREATED = "session_created"
    PROBLEM_TEXT_UPDATED = "problem_text_updated"
    PROBLEM_STRUCTURED = "problem_structured"
    IDEA_ADDED = "idea_added"
    IDEA_EMBEDDED = "idea_embedded"
    IDEA_STATUS_CHANGED = "idea_status_changed"
    IDEA_CONTEXT_POLISHED = "idea_context_polished"
    LITERATURE_ADDED = "literature_added"
    LITERATURE_EMBEDDED = "literature_embedded"
    CONCEPT_ADDED = "concept_added"
    CONCEPT_RENDERED = "concept_rendered"
    CONCEPT_ARCHIVED = "concept_archived"
    ACTIONS_OBJECTS_EXTRACTED = "actions_objects_extracted"
    FEASIBILITY_SCORED = "feasibility_scored"
    PHASE_STARTED = "phase_started"
    STEP_COMPLETED = "step_completed"
    AGENT_COMPLETED = "agent_completed"
    REASONING_NOTE = "reasoning_note"
    GATE_WAITING = "gate_waiting"
    GATE_APPROVED = "gate_approved"
    PHASE_ADVANCED = "phase_advanced"
    PHASE_FAILED = "phase_failed"
    SESSION_DONE = "session_done"
    OVERRIDE_APPLIED = "override_applied"
    RERUN_STARTED = "rerun_started"
    WARNING_LOGGED = "warning_logged"
    SCHEMA_MIGRATED = "schema_migrated"


#: Event kinds that change no snapshot state (telemetry / audit only).
_ANNOTATION_KINDS = {
    EventKind.REASONING_NOTE,
    EventKind.GATE_WAITING,
    EventKind.WARNING_LOGGED,
    EventKind.SCHEMA_MIGRATED,
    EventKind.OVERRIDE_APPLIED,
    EventKind.SESSION_DONE,
    EventKind.RERUN_STARTED,
}


@dataclass
class ProblemStatement:
    """Structured problem: activity, item, contradiction, criteria, constraints."""

    id: str
    raw_text: str
    activity: str
    item: str
    contradiction: str
    criteria: list[str]
    constraints: list[str]
    created_at: int  # logical timestamp: index of the creating event

    def validate(self) -> None:
        for name in ("activity", "item", "contradiction"):
            if not getattr(self, name).strip():
                raise ValidationError(f"problem.{name} must be non-empty")
        if not self.criteria:
            raise ValidationError("problem.criteria must contain at least one entry")
        if not self.constraints:
            raise ValidationError("problem.constraints must contain at least one entry")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "raw_text": self.raw_text,
            "activity": self.activity,
            "item": self.item,
            "contradiction": self.contradiction,
            "criteria": list(self.criteria),
            "constraints": list(self.constraints),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ProblemStatement":
        return cls(
            id=doc["id"],
            raw_text=doc["raw_text"],
            activity=doc["activity"],
            item=doc["item"],
            contradiction=doc["contradiction"],
            criteria=list(doc["criteria"]),
            constraints=list(doc["constraints"]),
            created_at=doc["created_at"],
        )


@dataclass
class StatusRecord:
    """One entry of an idea's status trail."""

    phase: str
    status: str
    reason: str
    actor: str
    event_index: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "phase": self.phase,
            "status": self.status,
            "reason": self.reason,
            "actor": self.actor,
            "event_index": self.event_index,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "StatusRecord":
        return cls(**doc)


@dataclass
class Idea:
    """A solution unit in action-object-context form."""

    id: str
    title: str
    action: str
    object: str
    context: str
    provenance: Provenance
    origin_phase: Phase
    embedding: Optional[list[float]] = None
    embedding_model: Optional[str] = None
    status: IdeaStatus = IdeaStatus.RAW
    status_history: list[StatusRecord] = field(default_factory=list)

    def validate(self) -> None:
        for name in ("action", "object", "context"):
            if not getattr(self, name).strip():
                raise ValidationError(f"idea.{name} must be non-empty")
        if self.embedding is not None:
            _check_unit_norm(self.embedding, f"idea {self.id}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "action": self.action,
            "object": self.object,
            "context": self.context,
            "provenance": self.provenance.value,
            "origin_phase": self.origin_phase.value,
            "embedding": list(self.embedding) if self.embedding is not None else None,
            "embedding_model": self.embedding_model,
            "status": self.status.value,
            "status_history": [r.to_dict() for r in self.status_history],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Idea":
        return cls(
            id=doc["id"],
            title=doc["title"],
            action=doc["action"],
            object=doc["object"],
            context=doc["context"],
            provenance=Provenance(doc["provenance"]),
            origin_phase=Phase(doc["origin_phase"]),
            embedding=list(doc["embedding"]) if doc.get("embedding") is not None else None,
            embedding_model=doc.get("embedding_model"),
            status=IdeaStatus(doc["status"]),
            status_history=[StatusRecord.from_dict(r) for r in doc.get("status_history", [])],
        )


@dataclass
class LiteratureEntry:
    """An existing real-world solution in AOC form, with a source link."""

    id: str
    title: str
    action: str
    object: str
    context: str
    source_url: str
    retrieval_mode: RetrievalMode
    embedding: Optional[list[float]] = None
    embedding_model: Optional[str] = None

    def validate(self) -> None:
        if not self.source_url.strip():
            raise ValidationError(f"literature {self.id}: source_url must be non-empty")
        for name in ("action", "object", "context"):
            if not getattr(self, name).strip():
                raise ValidationError(f"literature {self.id}: {name} must be non-empty")
        if self.embedding is not None:
            _check_unit_norm(self.embedding, f"literature {self.id}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "action": self.action,
            "object": self.object,
            "context": self.context,
            "source_url": self.source_url,
            "retrieval_mode": self.retrieval_mode.value,
            "embedding": list(self.embedding) if self.embedding is not None else None,
            "embedding_model": self.embedding_model,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "LiteratureEntry":
        return cls(
            id=doc["id"],
            title=doc["title"],
            action=doc["action"],
            object=doc["object"],
            context=doc["context"],
            source_url=doc["source_url"],
            retrieval_mode=RetrievalMode(doc["retrieval_mode"]),
            embedding=list(doc["embedding"]) if doc.get("embedding") is not None else None,
            embedding_model=doc.get("embedding_model"),
        )


@dataclass
class Concept:
    """Implementation-ready expansion of a curated idea."""

    id: str
    idea_id: str
    principle: str
    features: list[str]
    implementation: list[str]
    characteristics: list[str]
    rendering_ref: Optional[str] = None
    archived: bool = False  # set when a rerun invalidates downstream output

    def validate(self) -> None:
        if not self.principle.strip():
            raise ValidationError(f"concept {self.id}: principle must be non-empty")
        for name in ("features", "implementation", "characteristics"):
            if not getattr(self, name):
                raise ValidationError(f"concept {self.id}: {name} must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "idea_id": self.idea_id,
            "principle": self.principle,
            "features": list(self.features),
            "implementation": list(self.implementation),
            "characteristics": list(self.characteristics),
            "rendering_ref": self.rendering_ref,
            "archived": self.archived,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Concept":
        return cls(
            id=doc["id"],
            idea_id=doc["idea_id"],
            principle=doc["principle"],
            features=list(doc["features"]),
            implementation=list(doc["implementation"]),
            characteristics=list(doc["characteristics"]),
            rendering_ref=doc.get("rendering_ref"),
            archived=doc.get("archived", False),
        )


@dataclass
class ActionObjectPair:
    """One cell of the feasibility grid."""

    action: str
    object: str
    feasibility_score: int
    rationale: str
    action_index: int
    object_index: int
    defaulted: bool = False  # score fell back to 1 after unparseable provider output

    def validate(self) -> None:
        if not 1 <= self.feasibility_score <= 10:
            raise ValidationError(
                f"feasibility score {self.feasibility_score} outside [1, 10]"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "action": self.action,
            "object": self.object,
            "feasibility_score": self.feasibility_score,
            "rationale": self.rationale,
            "action_index": self.action_index,
            "object_index": self.object_index,
            "defaulted": self.defaulted,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ActionObjectPair":
        return cls(
            action=doc["action"],
            object=doc["object"],
            feasibility_score=doc["feasibility_score"],
            rationale=doc["rationale"],
            action_index=doc["action_index"],
            object_index=doc["object_index"],
            defaulted=doc.get("defaulted", False),
        )


@dataclass
class Vaults:
    """The four persistent stores shared by every agent."""

    problem_vault: list[ProblemStatement] = field(default_factory=list)
    idea_vault: list[Idea] = field(default_factory=list)
    literature_vault: list[LiteratureEntry] = field(default_factory=list)
    concept_vault: list[Concept] = field(default_factory=list)

    def idea(self, idea_id: str) -> Idea:
        for idea in self.idea_vault:
            if idea.id == idea_id:
                return idea
        raise KeyError(idea_id)

    def concept_for(self, idea_id: str) -> Optional[Concept]:
        for concept in self.concept_vault:
            if concept.idea_id == idea_id and not concept.archived:
                return concept
        return None

    def validate(self) -> None:
        for name, vault in (
            ("problem_vault", self.problem_vault),
            ("idea_vault", self.idea_vault),
            ("literature_vault", self.literature_vault),
            ("concept_vault", self.concept_vault),
        ):
            ids = [entry.id for entry in vault]
            if len(ids) != len(set(ids)):
                raise ValidationError(f"duplicate ids in {name}")
            for entry in vault:
                entry.validate()
        curated = {i.id for i in self.idea_vault if i.status == IdeaStatus.CURATED}
        for concept in self.concept_vault:
            if not concept.archived and concept.idea_id not in curated:
                raise ValidationError(
                    f"concept {concept.id} references non-curated idea {concept.idea_id}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem_vault": [p.to_dict() for p in self.problem_vault],
            "idea_vault": [i.to_dict() for i in self.idea_vault],
            "literature_vault": [e.to_dict() for e in self.literature_vault],
            "concept_vault": [c.to_dict() for c in self.concept_vault],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Vaults":
        return cls(
            problem_vault=[ProblemStatement.from_dict(p) for p in doc["problem_vault"]],
            idea_vault=[Idea.from_dict(i) for i in doc["idea_vault"]],
            literature_vault=[LiteratureEntry.from_dict(e) for e in doc["literature_vault"]],
            concept_vault=[Concept.from_dict(c) for c in doc["concept_vault"]],
        )


AGENT_ROLES = [
    "scribe",
    "muse",
    "forge_formulator",
    "forge_explorer",
    "gatekeeper",
    "librarian",
    "challenger",
    "mint",
    "scout",
    "navigator",
    "sentinel",
    "director",
    "leo",
]

DEFAULT_TEMPERATURES = {
    "scribe": 0.5,
    "muse": 0.5,
    "forge_formulator": 0.6,
    "forge_explorer": 1.0,
    "gatekeeper": 0.0,
    "librarian": 0.2,
    "challenger": 0.0,
    "mint": 0.6,
    "scout": 0.3,
    "navigator": 0.6,
    "sentinel": 0.3,
    "director": 0.5,
    "leo": 0.0,
}


@dataclass
class SessionConfig:
    """Tunable thresholds, sizes, and per-role provider settings."""

    temperatures: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TEMPERATURES))
    gatekeeper_eps: float = 0.3
    gatekeeper_min_pts: int = 2
    challenger_threshold: float = 0.85
    mint_list_size: int = 20
    scout_top_k: int = 15
    max_rounds: int = 5
    forge_ideas_per_subagent: int = 5
    librarian_result_limit: int = 10
    max_schema_repairs: int = 2
    gates_enabled: bool = True
    auto_approve: bool = False
    provider_bindings: dict[str, dict[str, Any]] = field(default_factory=dict)

    def validate(self) -> None:
        for role, temp in self.temperatures.items():
            if role not in AGENT_ROLES:
                raise ValidationError(f"unknown agent role in temperatures: {role}")
            if not 0.0 <= temp <= 2.0:
                raise ValidationError(f"temperature for {role} outside [0, 2]: {temp}")
        if not self.gatekeeper_eps > 0:
            raise ValidationError("gatekeeper_eps must be > 0")
        if self.gatekeeper_min_pts < 1:
            raise ValidationError("gatekeeper_min_pts must be >= 1")
        if not 0.0 < self.challenger_threshold < 1.0:
            raise ValidationError("challenger_threshold must lie in (0, 1)")
        if self.mint_list_size < 1:
            raise ValidationError("mint_list_size must be >= 1")
        if self.scout_top_k < 1:
            raise ValidationError("scout_top_k must be >= 1")
        if self.max_rounds < 1:
            raise ValidationError("max_rounds must be >= 1")
        if self.forge_ideas_per_subagent < 1:
            raise ValidationError("forge_ideas_per_subagent must be >= 1")

    def temperature_for(self, role: str) -> float:
        return self.temperatures.get(role, DEFAULT_TEMPERATURES.get(role, 0.5))

    def to_dict(self) -> dict[str, Any]:
        return {
            "temperatures": dict(self.temperatures),
            "gatekeeper_eps": self.gatekeeper_eps,
            "gatekeeper_min_pts": self.gatekeeper_min_pts,
            "challenger_threshold": self.challenger_threshold,
            "mint_list_size": self.mint_list_size,
            "scout_top_k": self.scout_top_k,
            "max_rounds": self.max_rounds,
            "forge_ideas_per_subagent": self.forge_ideas_per_subagent,
            "librarian_result_limit": self.librarian_result_limit,
            "max_schema_repairs": self.max_schema_repairs,
            "gates_enabled": self.gates_enabled,
            "auto_approve": self.auto_approve,
            "provider_bindings": copy.deepcopy(self.provider_bindings),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SessionConfig":
        cfg = cls(
            temperatures=dict(doc.get("temperatures", DEFAULT_TEMPERATURES)),
            gatekeeper_eps=doc.get("gatekeeper_eps", 0.3),
            gatekeeper_min_pts=doc.get("gatekeeper_min_pts", 2),
            challenger_threshold=doc.get("challenger_threshold", 0.85),
            mint_list_size=doc.get("mint_list_size", 20),
            scout_top_k=doc.get("scout_top_k", 15),
            max_rounds=doc.get("max_rounds", 5),
            forge_ideas_per_subagent=doc.get("forge_ideas_per_subagent", 5),
            librarian_result_limit=doc.get("librarian_result_limit", 10),
            max_schema_repairs=doc.get("max_schema_repairs", 2),
            gates_enabled=doc.get("gates_enabled", True),
            auto_approve=doc.get("auto_approve", False),
            provider_bindings=copy.deepcopy(doc.get("provider_bindings", {})),
        )
        cfg.validate()
        return cfg


@dataclass
class SessionEvent:
    """One entry of the append-only session log."""

    index: int
    kind: EventKind
    actor: str  # "system" or "human"
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "kind": self.kind.value,
            "actor": self.actor,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SessionEvent":
        return cls(
            index=doc["index"],
            kind=EventKind(doc["kind"]),
            actor=doc["actor"],
            payload=doc["payload"],
        )


@dataclass
class Session:
    """Full pipeline state: phase pointer, vaults, working data, and event log."""

    id: str
    seed: int
    config: SessionConfig
    problem_text: str
    phase: Phase = Phase.DEFINITION
    round: int = 1
    phase_steps_done: list[str] = field(default_factory=list)
    phase_failed: bool = False
    last_gatekeeper_new: int = 0
    vaults: Vaults = field(default_factory=Vaults)
    mint_actions: list[str] = field(default_factory=list)
    mint_objects: list[str] = field(default_factory=list)
    feasibility_grid: list[ActionObjectPair] = field(default_factory=list)
    event_log: list[SessionEvent] = field(default_factory=list)

    # -- event machinery ----------------------------------------------------

    def commit(self, kind: EventKind, payload: dict[str, Any], actor: str = "system") -> SessionEvent:
        """Append one event and apply it to the snapshot."""
        event = SessionEvent(index=len(self.event_log), kind=kind, actor=actor, payload=payload)
        self._apply(event)
        self.event_log.append(event)
        return event

    def _apply(self, event: SessionEvent) -> None:
        kind, p = event.kind, event.payload
        if kind in _ANNOTATION_KINDS:
            return
        if kind == EventKind.SESSION_CREATED:
            # State already set by the constructor; recorded for replay.
            return
        if kind == EventKind.PROBLEM_TEXT_UPDATED:
            if self.vaults.problem_vault:
                raise ValidationError("problem text is fixed once structured; rerun instead")
            if not p["text"].strip():
                raise ValidationError("problem text must be non-empty")
            self.problem_text = p["text"]
            return
        if kind == EventKind.PROBLEM_STRUCTURED:
            problem = ProblemStatement.from_dict(p["problem"])
            problem.validate()
            self.vaults.problem_vault.append(problem)
        elif kind == EventKind.IDEA_ADDED:
            idea = Idea.from_dict(p["idea"])
            idea.validate()
            source = p.get("source", "")
            default_reason = f"created by {source}" if source else "created"
            idea.status_history.append(
                StatusRecord(
                    phase=self.phase.value,
                    status=idea.status.value,
                    reason=p.get("reason", default_reason),
                    actor=event.actor,
                    event_index=event.index,
                )
            )
            self.vaults.idea_vault.append(idea)
        elif kind == EventKind.IDEA_EMBEDDED:
            idea = self.vaults.idea(p["idea_id"])
            _check_unit_norm(p["values"], f"idea {idea.id}")
            idea.embedding = list(p["values"])
            idea.embedding_model = p["model_tag"]
        elif kind == EventKind.IDEA_STATUS_CHANGED:
            idea = self.vaults.idea(p["idea_id"])
            new_status = IdeaStatus(p["status"])
            _check_transition(idea.status, new_status, event.actor)
            idea.status = new_status
            idea.status_history.append(
                StatusRecord(
                    phase=self.phase.value,
                    status=new_status.value,
                    reason=p.get("reason", ""),
                    actor=event.actor,
                    event_index=event.index,
                )
            )
        elif kind == EventKind.IDEA_CONTEXT_POLISHED:
            idea = self.vaults.idea(p["idea_id"])
            idea.context = p["context"]
        elif kind == EventKind.LITERATURE_ADDED:
            entry = LiteratureEntry.from_dict(p["entry"])
            entry.validate()
            self.vaults.literature_vault.append(entry)
        elif kind == EventKind.LITERATURE_EMBEDDED:
            for entry in self.vaults.literature_vault:
                if entry.id == p["entry_id"]:
                    _check_unit_norm(p["values"], f"literature {entry.id}")
                    entry.embedding = list(p["values"])
                    entry.embedding_model = p["model_tag"]
                    break
            else:
                raise ValidationError(f"unknown literature id {p['entry_id']}")
        elif kind == EventKind.CONCEPT_ADDED:
            concept = Concept.from_dict(p["concept"])
            concept.validate()
            self.vaults.concept_vault.append(concept)
        elif kind == EventKind.CONCEPT_RENDERED:
            for concept in self.vaults.concept_vault:
                if concept.id == p["concept_id"]:
                    concept.rendering_ref = p["rendering_ref"]
                    break
            else:
                raise ValidationError(f"unknown concept id {p['concept_id']}")
        elif kind == EventKind.CONCEPT_ARCHIVED:
            for concept in self.vaults.concept_vault:
                if concept.id == p["concept_id"]:
                    concept.archived = True
                    break
            else:
                raise ValidationError(f"unknown concept id {p['concept_id']}")
        elif kind == EventKind.ACTIONS_OBJECTS_EXTRACTED:
            self.mint_actions = list(p["actions"])
            self.mint_objects = list(p["objects"])
        elif kind == EventKind.FEASIBILITY_SCORED:
            self.feasibility_grid = [ActionObjectPair.from_dict(d) for d in p["pairs"]]
            for pair in self.feasibility_grid:
                pair.validate()
        elif kind == EventKind.PHASE_STARTED:
            self.phase_failed = False
        elif kind == EventKind.STEP_COMPLETED:
            if p["step"] not in self.phase_steps_done:
                self.phase_steps_done.append(p["step"])
        elif kind == EventKind.AGENT_COMPLETED:
            # Telemetry, except that the local-novelty pass drives the
            # generation/assessment loop's stopping rule.
            if p.get("agent") == "gatekeeper" and "new_survivors" in p:
                self.last_gatekeeper_new = p["new_survivors"]
        elif kind == EventKind.GATE_APPROVED:
            pass
        elif kind == EventKind.PHASE_ADVANCED:
            self.phase = Phase(p["to"])
            self.round = p.get("round", self.round)
            self.phase_steps_done = []
            self.phase_failed = False
        elif kind == EventKind.PHASE_FAILED:
            self.phase_failed = True
        else:  # pragma: no cover - exhaustive over EventKind
            raise ValidationError(f"unhandled event kind {kind}")

    # -- queries -------------------------------------------------------------

    @property
    def problem(self) -> Optional[ProblemStatement]:
        return self.vaults.problem_vault[-1] if self.vaults.problem_vault else None

    def ideas_with_status(self, *statuses: IdeaStatus) -> list[Idea]:
        wanted = set(statuses)
        return [i for i in self.vaults.idea_vault if i.status in wanted]

    def alive_ideas(self) -> list[Idea]:
        """Ideas visible to agents: removed ideas are excluded from all inputs."""
        return [i for i in self.vaults.idea_vault if i.status != IdeaStatus.REMOVED]

    def next_id(self, prefix: str, vault_len: int) -> str:
        return f"{prefix}-{vault_len + 1:04d}"

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "problem_text": self.problem_text,
            "phase": self.phase.value,
            "round": self.round,
            "phase_steps_done": list(self.phase_steps_done),
            "phase_failed": self.phase_failed,
            "last_gatekeeper_new": self.last_gatekeeper_new,
            "vaults": self.vaults.to_dict(),
            "mint_actions": list(self.mint_actions),
            "mint_objects": list(self.mint_objects),
            "feasibility_grid": [p.to_dict() for p in self.feasibility_grid],
            "event_log": [e.to_dict() for e in self.event_log],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Session":
        session = cls(
            id=doc["id"],
            seed=doc["seed"],
            config=SessionConfig.from_dict(doc["config"]),
            problem_text=doc["problem_text"],
            phase=Phase(doc["phase"]),
            round=doc["round"],
            phase_steps_done=list(doc["phase_steps_done"]),
            phase_failed=doc["phase_failed"],
            last_gatekeeper_new=doc.get("last_gatekeeper_new", 0),
            vaults=Vaults.from_dict(doc["vaults"]),
            mint_actions=list(doc["mint_actions"]),
            mint_objects=list(doc["mint_objects"]),
            feasibility_grid=[ActionObjectPair.from_dict(p) for p in doc["feasibility_grid"]],
            event_log=[SessionEvent.from_dict(e) for e in doc["event_log"]],
        )
        session.vaults.validate()
        return session

    def clone(self) -> "Session":
        return copy.deepcopy(self)


def _check_unit_norm(values: Iterable[float], label: str) -> None:
    norm_sq = sum(v * v for v in values)
    if abs(norm_sq - 1.0) > 3 * EMBED_ATOL:
        raise ValidationError(f"embedding for {label} is not unit-norm (|v|^2={norm_sq:.9f})")


def _check_transition(current: IdeaStatus, new: IdeaStatus, actor: str) -> None:
    if new == IdeaStatus.REMOVED:
        if current == IdeaStatus.REMOVED:
            raise ValidationError("idea already removed")
        return
    if current == IdeaStatus.REMOVED:
        # Resurrection: only a human override may do this (restore to prior status).
        if actor != "human":
            raise ValidationError("only a human override may restore a removed idea")
        return
    cur_i, new_i = STATUS_ORDER.index(current), STATUS_ORDER.index(new)
    if new_i != cur_i + 1:
        if actor == "human":
            return  # human rerun bookkeeping may rewind; always logged
        raise ValidationError(f"illegal status transition {current.value} -> {new.value}")


# -- session construction and replay ------------------------------------------


def new_session(problem_text: str, config: SessionConfig, seed: int, session_id: str = "") -> Session:
    """Open a session in the Definition phase with empty vaults."""
    if not problem_text.strip():
        raise ValidationError("problem text must be non-empty")
    config.validate()
    sid = session_id or f"session-{seed:08d}"
    session = Session(id=sid, seed=seed, config=config, problem_text=problem_text)
    session.commit(
        EventKind.SESSION_CREATED,
        {
            "session_id": sid,
            "problem_text": problem_text,
            "config": config.to_dict(),
            "seed": seed,
        },
    )
    return session


def replay(events: list[SessionEvent]) -> Session:
    """Rebuild a session purely from its event log."""
    if not events or events[0].kind != EventKind.SESSION_CREATED:
        raise ValidationError("event log must start with session_created")
    head = events[0].payload
    session = Session(
        id=head["session_id"],
        seed=head["seed"],
        config=SessionConfig.from_dict(head["config"]),
        problem_text=head["problem_text"],
    )
    session.event_log.append(events[0])
    for event in events[1:]:
        if event.index != len(session.event_log):
            raise ValidationError(f"event index gap at {event.index}")
        session._apply(event)
        session.event_log.append(event)
    return session


# -- human overrides -----------------------------------------------------------


@dataclass
class Override:
    """A human intervention: add, remove, or restore an idea."""

    kind: str  # "add_idea" | "remove_idea" | "restore_idea"
    idea_id: Optional[str] = None
    title: str = ""
    action: str = ""
    object: str = ""
    context: str = ""
    reason: str = ""


def apply_override(session: Session, override: Override, actor: str = "human") -> Session:
    """Apply a human override; the idea flows through the same downstream pipeline."""
    if actor != "human":
        raise ValidationError("overrides must be issued by a human actor")
    if session.phase == Phase.DONE:
        raise ValidationError("cannot override a completed session")
    if override.kind == "add_idea":
        # Ideas added at Refinement or later join the curation input pool directly.
        status = (
            IdeaStatus.GLOBALLY_NOVEL
            if phase_index(session.phase) >= phase_index(Phase.REFINEMENT)
            else IdeaStatus.RAW
        )
        idea = Idea(
            id=session.next_id("idea", len(session.vaults.idea_vault)),
            title=override.title or override.object,
            action=override.action,
            object=override.object,
            context=override.context,
            provenance=Provenance.HUMAN,
            origin_phase=session.phase,
            status=status,
        )
        idea.validate()
        session.commit(
            EventKind.OVERRIDE_APPLIED,
            {"kind": "add_idea", "idea_id": idea.id, "reason": override.reason},
            actor="human",
        )
        session.commit(
            EventKind.IDEA_ADDED,
            {"idea": idea.to_dict(), "source": "override", "reason": "human override"},
            actor="human",
        )
    elif override.kind == "remove_idea":
        idea = _existing_idea(session, override.idea_id)
        session.commit(
            EventKind.OVERRIDE_APPLIED,
            {"kind": "remove_idea", "idea_id": idea.id, "reason": override.reason},
            actor="human",
        )
        session.commit(
            EventKind.IDEA_STATUS_CHANGED,
            {
                "idea_id": idea.id,
                "status": IdeaStatus.REMOVED.value,
                "reason": override.reason or "human override",
            },
            actor="human",
        )
        concept = session.vaults.concept_for(idea.id)
        if concept is not None:
            # A concept may only reference a curated idea; archive it with the
            # removal so the vault invariant holds.
            session.commit(
                EventKind.CONCEPT_ARCHIVED,
                {"concept_id": concept.id, "reason": "idea removed by override"},
                actor="human",
            )
    elif override.kind == "restore_idea":
        idea = _existing_idea(session, override.idea_id)
        if idea.status != IdeaStatus.REMOVED:
            raise ValidationError(f"idea {idea.id} is not removed")
        prior = _prior_status(idea)
        session.commit(
            EventKind.OVERRIDE_APPLIED,
            {"kind": "restore_idea", "idea_id": idea.id, "reason": override.reason},
            actor="human",
        )
        session.commit(
            EventKind.IDEA_STATUS_CHANGED,
            {
                "idea_id": idea.id,
                "status": prior.value,
                "reason": override.reason or "human restore",
            },
            actor="human",
        )
    else:
        raise ValidationError(f"unknown override kind {override.kind!r}")
    return session


def _existing_idea(session: Session, idea_id: Optional[str]) -> Idea:
    if not idea_id:
        raise ValidationError("override requires an idea id")
    try:
        return session.vaults.idea(idea_id)
    except KeyError:
        raise ValidationError(f"unknown idea id {idea_id}") from None


def _prior_status(idea: Idea) -> IdeaStatus:
    for record in reversed(idea.status_history):
        if record.status != IdeaStatus.REMOVED.value:
            return IdeaStatus(record.status)
    return IdeaStatus.RAW
