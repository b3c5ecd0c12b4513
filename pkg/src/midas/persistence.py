"""Durable session storage and report export.

Each session owns one directory: session.json (the canonical, deterministic
state document), meta.json (wall-clock annotations, excluded from byte
comparisons), artifacts/ for rendered images, and prompts-used/ for the
prompts actually sent. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from time import time
from typing import Any, Callable, Optional

import jsonschema

from . import clustering
from .agents import load_schema
from .embedding import distance_matrix, idea_vectors
from .model import (
    EventKind,
    IdeaStatus,
    MidasError,
    Phase,
    Provenance,
    SCHEMA_VERSION,
    Session,
    ValidationError,
    phase_index,
)

FUNNEL_AGENTS = [
    "muse",
    "forge",
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


class StoreError(MidasError):
    """Storage layer failure."""


class SessionNotFound(StoreError):
    pass


class SchemaVersionError(StoreError):
    pass


class StoreDecodeError(StoreError):
    """A stored document failed validation; the message names the bad field."""


class SessionStore:
    """One directory per session under a common root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def session_dir(self, session_id: str) -> Path:
        return self.root / session_id

    def save_session(self, session: Session) -> str:
        directory = self.session_dir(session.id)
        directory.mkdir(parents=True, exist_ok=True)
        _atomic_write(directory / "session.json", session.to_json())
        _atomic_write(
            directory / "meta.json",
            json.dumps({"saved_at_unix": time(), "schema_version": SCHEMA_VERSION}),
        )
        return session.id

    def load_session(self, session_id: str) -> Session:
        path = self.session_dir(session_id) / "session.json"
        if not path.exists():
            raise SessionNotFound(f"no stored session with id {session_id!r}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreDecodeError(f"session.json is not valid JSON: {exc}") from exc
        return decode_session(doc)

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "session.json").exists())

    def artifact_sink(self, session_id: str) -> Callable[[str, bytes], None]:
        directory = self.session_dir(session_id) / "artifacts"

        def sink(artifact_id: str, content: bytes) -> None:
            directory.mkdir(parents=True, exist_ok=True)
            (directory / f"{artifact_id}.png").write_bytes(content)

        return sink

    def save_prompt(self, session_id: str, name: str, text: str) -> None:
        directory = self.session_dir(session_id) / "prompts-used"
        directory.mkdir(parents=True, exist_ok=True)
        _atomic_write(directory / name, text)


def _atomic_write(path: Path, content: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def decode_session(doc: dict[str, Any]) -> Session:
    """Validate and rebuild a session document, migrating older schemas."""
    if not isinstance(doc, dict):
        raise StoreDecodeError("session document must be a JSON object")
    version = doc.get("schema_version")
    if version is None:
        raise StoreDecodeError("missing field: schema_version")
    if version > SCHEMA_VERSION:
        raise SchemaVersionError(
            f"session schema_version {version} is newer than supported {SCHEMA_VERSION}"
        )
    migrated = version < SCHEMA_VERSION
    if migrated:
        doc = _migrate(doc, version)
    try:
        jsonschema.validate(doc, load_schema(f"session.v{SCHEMA_VERSION}"))
    except jsonschema.ValidationError as exc:
        raise StoreDecodeError(f"{exc.json_path}: {exc.message}") from exc
    try:
        session = Session.from_dict(doc)
    except (KeyError, ValueError, ValidationError) as exc:
        raise StoreDecodeError(f"invalid session document: {exc}") from exc
    if migrated:
        session.commit(
            EventKind.SCHEMA_MIGRATED,
            {"from_version": version, "to_version": SCHEMA_VERSION},
        )
    return session


def _migrate(doc: dict[str, Any], version: int) -> dict[str, Any]:
    doc = dict(doc)
    if version == 0:
        # v0 predates the generation/assessment loop: no round counter and no
        # loop bound in the config.
        doc.setdefault("round", 1)
        doc.setdefault("last_gatekeeper_new", 0)
        config = dict(doc.get("config", {}))
        config.setdefault("max_rounds", 5)
        doc["config"] = config
        doc["schema_version"] = SCHEMA_VERSION
        return doc
    raise SchemaVersionError(f"no migration path from schema_version {version}")


# -- report export ------------------------------------------------------------------


def funnel_counts(session: Session) -> dict[str, int]:
    """Per-agent funnel counts, derived solely from the event log."""
    counts = {agent: 0 for agent in FUNNEL_AGENTS}
    counts["human_overrides"] = 0
    shortlisted: set[str] = set()
    globally_novel: set[str] = set()
    curated: set[str] = set()
    rendered: set[str] = set()
    for event in session.event_log:
        kind, p = event.kind, event.payload
        if kind == EventKind.IDEA_ADDED:
            source = p.get("source")
            if source == "muse":
                counts["muse"] += 1
            elif source == "forge":
                counts["forge"] += 1
            elif source == "navigator":
                counts["navigator"] += 1
        elif kind == EventKind.LITERATURE_ADDED:
            counts["librarian"] += 1
        elif kind == EventKind.IDEA_STATUS_CHANGED:
            by, status = p.get("by"), p.get("status")
            if by == "gatekeeper" and status == IdeaStatus.SHORTLISTED.value:
                shortlisted.add(p["idea_id"])
            elif by == "challenger" and status == IdeaStatus.GLOBALLY_NOVEL.value:
                globally_novel.add(p["idea_id"])
            elif by == "sentinel" and status == IdeaStatus.CURATED.value:
                curated.add(p["idea_id"])
        elif kind == EventKind.ACTIONS_OBJECTS_EXTRACTED:
            counts["mint"] = len(p["actions"])
        elif kind == EventKind.FEASIBILITY_SCORED:
            counts["scout"] = len(p["pairs"])
        elif kind == EventKind.CONCEPT_ADDED:
            counts["director"] += 1
        elif kind == EventKind.CONCEPT_RENDERED:
            rendered.add(p["concept_id"])
        elif kind == EventKind.OVERRIDE_APPLIED:
            counts["human_overrides"] += 1
    counts["gatekeeper"] = len(shortlisted)
    counts["challenger"] = len(globally_novel)
    counts["sentinel"] = len(curated)
    counts["leo"] = len(rendered)
    return counts


def funnel_counts_from_vaults(session: Session) -> dict[str, int]:
    """Recomputation of the funnel from vault snapshots; must agree with
    funnel_counts for any consistent session."""
    counts = {agent: 0 for agent in FUNNEL_AGENTS}
    for idea in session.vaults.idea_vault:
        first = idea.status_history[0] if idea.status_history else None
        reason = first.reason if first else ""
        if reason == "created by muse":
            counts["muse"] += 1
        elif reason == "created by forge":
            counts["forge"] += 1
        elif reason == "created by navigator":
            counts["navigator"] += 1
        # The first record is the creation itself; only later system records
        # are filter promotions.
        transitions = {(r.status, r.actor) for r in idea.status_history[1:]}
        if (IdeaStatus.SHORTLISTED.value, "system") in transitions:
            counts["gatekeeper"] += 1
        if (IdeaStatus.GLOBALLY_NOVEL.value, "system") in transitions:
            counts["challenger"] += 1
        if (IdeaStatus.CURATED.value, "system") in transitions:
            counts["sentinel"] += 1
    counts["librarian"] = len(session.vaults.literature_vault)
    counts["mint"] = len(session.mint_actions)
    counts["scout"] = len(session.feasibility_grid)
    counts["director"] = len(session.vaults.concept_vault)
    counts["leo"] = sum(1 for c in session.vaults.concept_vault if c.rendering_ref is not None)
    return counts


def _report_pool(session: Session) -> list:
    return [
        i
        for i in session.vaults.idea_vault
        if i.status != IdeaStatus.REMOVED and i.embedding is not None
    ]


def cluster_snapshot(session: Session) -> dict[str, Any]:
    """Plot-data for the current alive, embedded idea pool."""
    pool = _report_pool(session)
    cfg = session.config
    if not pool:
        return {
            "points": [],
            "eps": cfg.gatekeeper_eps,
            "min_pts": cfg.gatekeeper_min_pts,
            "n_clusters": 0,
            "report": None,
        }
    if len(pool) == 1:
        assignment = clustering.ClusterAssignment(
            labels=[clustering.NOISE], n_clusters=0, eps=cfg.gatekeeper_eps, min_pts=cfg.gatekeeper_min_pts
        )
    else:
        assignment = clustering.dbscan(
            distance_matrix(idea_vectors(pool)), cfg.gatekeeper_eps, cfg.gatekeeper_min_pts
        )
    return clustering.plot_export(pool, assignment, session.seed)


def export_report(session: Session, format: str = "json") -> Any:
    """Funnel counts, diversity metrics, and the curated set, in the requested
    format. Requires the session to have reached the assessment phase."""
    reached = phase_index(session.phase) >= phase_index(Phase.ASSESSMENT)
    if not reached:
        raise ValidationError(
            f"report requires at least the assessment phase; session is in {session.phase.value}"
        )
    if format == "plot-data":
        return cluster_snapshot(session)
    counts = funnel_counts(session)
    curated = [
        {
            "id": i.id,
            "title": i.title,
            "action": i.action,
            "object": i.object,
            "context": i.context,
            "provenance": i.provenance.value,
        }
        for i in session.vaults.idea_vault
        if i.status == IdeaStatus.CURATED
    ]
    concepts = [
        {
            "id": c.id,
            "idea_id": c.idea_id,
            "principle": c.principle,
            "features": c.features,
            "implementation": c.implementation,
            "characteristics": c.characteristics,
            "rendering_ref": c.rendering_ref,
        }
        for c in session.vaults.concept_vault
        if not c.archived
    ]
    pool = _report_pool(session)
    diversity = None
    if pool:
        snapshot = cluster_snapshot(session)
        diversity = snapshot["report"]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "session_id": session.id,
        "phase": session.phase.value,
        "round": session.round,
        "funnel": counts,
        "diversity": diversity,
        "curated": curated,
        "concepts": concepts,
        "events": len(session.event_log),
    }
    if format == "json":
        return doc
    if format == "markdown":
        return _markdown_report(session, doc)
    raise ValidationError(f"unknown report format {format!r}")


def _markdown_report(session: Session, doc: dict[str, Any]) -> str:
    lines = [
        f"# Ideation report: {session.id}",
        "",
        f"- phase: {doc['phase']} (round {doc['round']})",
        f"- events: {doc['events']}",
        "",
        "## Funnel",
        "",
        "| agent | count |",
        "| --- | --- |",
    ]
    for agent in FUNNEL_AGENTS:
        lines.append(f"| {agent} | {doc['funnel'][agent]} |")
    lines.append(f"| human overrides | {doc['funnel']['human_overrides']} |")
    if doc["diversity"]:
        lines += [
            "",
            "## Diversity",
            "",
            f"- idea sparsity: {doc['diversity']['idea_sparsity']:.4f}",
            f"- cluster sparsity: {doc['diversity']['cluster_sparsity']:.4f}",
            f"- noise fraction: {doc['diversity']['noise_fraction']:.4f}",
        ]
    lines += ["", "## Curated ideas", ""]
    for idea in doc["curated"]:
        lines.append(f"- **{idea['title']}** ({idea['provenance']}): {idea['context']}")
    if doc["concepts"]:
        lines += ["", "## Concepts", ""]
        for concept in doc["concepts"]:
            rendered = concept["rendering_ref"] or "not rendered"
            lines.append(f"- {concept['id']} (idea {concept['idea_id']}, {rendered}): {concept['principle']}")
    return "\n".join(lines) + "\n"
