"""The twelve specialized agents, implemented as operations over a session and
a provider set.

Generative agents demand schema-constrained JSON and get up to two repair
retries quoting the validation error; evaluation agents (gatekeeper,
challenger) are pure computations over embeddings and never see provenance.
Every agent logs a reasoning note before committing its action.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Optional

import jsonschema

from . import clustering
from .embedding import (
    EmbeddingVector,
    cosine_similarity,
    embedding_text,
    idea_vectors,
)
from .model import (
    ActionObjectPair,
    Concept,
    EventKind,
    Idea,
    IdeaStatus,
    LiteratureEntry,
    MidasError,
    Phase,
    ProblemStatement,
    Provenance,
    RetrievalMode,
    Session,
    ValidationError,
)
from .providers import AgentRequest, ProviderError, ProviderSet

# Statuses that participate in local-novelty evaluation.
_LOCAL_POOL = (IdeaStatus.RAW, IdeaStatus.SHORTLISTED, IdeaStatus.GLOBALLY_NOVEL)


class AgentError(MidasError):
    """An agent could not complete its step."""


class StructuredOutputError(AgentError):
    """Provider output failed schema validation after all repair retries."""

    def __init__(self, role: str, raw: str, error: str, parsed: Any = None):
        super().__init__(f"{role}: structured output invalid after retries: {error}")
        self.role = role
        self.raw = raw
        self.parsed = parsed  # last schema-valid parse, when only custom checks failed
        self.error = error


@dataclass
class FeasibilityGrid:
    """The full action x object product with feasibility scores."""

    actions: list[str]
    objects: list[str]
    pairs: list[ActionObjectPair]

    def validate(self) -> None:
        expected = {(i, j) for i in range(len(self.actions)) for j in range(len(self.objects))}
        got = {(p.action_index, p.object_index) for p in self.pairs}
        if len(self.pairs) != len(expected) or got != expected:
            raise ValidationError("feasibility grid must cover the Cartesian product exactly once")
        for pair in self.pairs:
            pair.validate()

    def top(self, k: int) -> list[ActionObjectPair]:
        return self.pairs[:k]


# -- prompt/schema assets -------------------------------------------------------


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("midas").joinpath(f"prompts/{name}.txt").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_schema(schema_id: str) -> dict:
    raw = resources.files("midas").joinpath(f"schemas/{schema_id}.json").read_text(encoding="utf-8")
    return json.loads(raw)


def render_prompt(template_name: str, **fields: str) -> str:
    return load_template(template_name).format(**fields)


def extract_json(raw: str) -> Any:
    """Pull the JSON payload out of a chat reply (tolerates code fences)."""
    text = raw.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    fenced = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fenced:
        try:
            return json.loads(fenced.group(1).strip())
        except json.JSONDecodeError:
            pass
    for opener, closer in (("{", "}"), ("[", "]")):
        start = text.find(opener)
        if start < 0:
            continue
        depth = 0
        for i in range(start, len(text)):
            if text[i] == opener:
                depth += 1
            elif text[i] == closer:
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start : i + 1])
                    except json.JSONDecodeError:
                        break
    raise ValueError("reply contains no parseable JSON payload")


def structured_chat(
    session: Session,
    providers: ProviderSet,
    role: str,
    prompt: str,
    schema_id: str,
    validator: Optional[Callable[[Any], None]] = None,
) -> Any:
    """Chat with schema enforcement and repair retries.

    A reply must parse as JSON and validate against the named schema; an
    optional validator adds agent-specific checks (raise ValueError to
    trigger a repair). Raises StructuredOutputError carrying the raw reply
    once the repair budget is spent.
    """
    schema = load_schema(schema_id)
    repairs = session.config.max_schema_repairs
    current_prompt = prompt
    last_raw = ""
    last_parsed: Any = None
    last_error = ""
    for attempt in range(repairs + 1):
        request = AgentRequest(
            role=role,
            prompt=current_prompt,
            temperature=session.config.temperature_for(role),
            response_schema=schema_id,
            attempt=attempt,
        )
        raw = providers.chat(request)
        last_raw = raw
        try:
            parsed = extract_json(raw)
        except ValueError as exc:
            last_error = str(exc)
            last_parsed = None
        else:
            try:
                jsonschema.validate(parsed, schema)
            except jsonschema.ValidationError as exc:
                last_error = f"schema {schema_id}: {exc.message}"
                last_parsed = None
            else:
                last_parsed = parsed
                if validator is None:
                    return parsed
                try:
                    validator(parsed)
                except ValueError as exc:
                    last_error = str(exc)
                else:
                    return parsed
        current_prompt = (
            prompt
            + "\n\nYour previous reply was rejected: "
            + last_error
            + "\nReply again with corrected JSON only."
        )
    raise StructuredOutputError(role, raw=last_raw, error=last_error, parsed=last_parsed)


def _reason(session: Session, agent: str, note: str) -> None:
    session.commit(EventKind.REASONING_NOTE, {"agent": agent, "note": note})


def _completed(session: Session, agent: str, **payload: Any) -> None:
    session.commit(
        EventKind.AGENT_COMPLETED,
        {"agent": agent, "phase": session.phase.value, "round": session.round, **payload},
    )


def _warn(session: Session, agent: str, message: str) -> None:
    session.commit(EventKind.WARNING_LOGGED, {"agent": agent, "message": message})


def _problem_fields(problem: ProblemStatement) -> dict[str, str]:
    return {
        "activity": problem.activity,
        "item": problem.item,
        "contradiction": problem.contradiction,
        "criteria": "; ".join(problem.criteria),
        "constraints": "; ".join(problem.constraints),
    }


def _require_problem(session: Session) -> ProblemStatement:
    problem = session.problem
    if problem is None:
        raise ValidationError("problem must be structured first")
    return problem


# -- embedding helpers ----------------------------------------------------------


def embed_pending_ideas(session: Session, providers: ProviderSet, ideas: list[Idea]) -> None:
    pending = [i for i in ideas if i.embedding is None]
    if not pending:
        return
    vectors = providers.embed_batch([embedding_text(i) for i in pending])
    tag = providers.embedding_model_tag
    for idea, values in zip(pending, vectors):
        normalized = EmbeddingVector(values=values, model_tag=tag)
        session.commit(
            EventKind.IDEA_EMBEDDED,
            {"idea_id": idea.id, "values": normalized.values, "model_tag": tag},
        )


def embed_pending_literature(session: Session, providers: ProviderSet) -> None:
    pending = [e for e in session.vaults.literature_vault if e.embedding is None]
    if not pending:
        return
    vectors = providers.embed_batch([embedding_text(e) for e in pending])
    tag = providers.embedding_model_tag
    for entry, values in zip(pending, vectors):
        normalized = EmbeddingVector(values=values, model_tag=tag)
        session.commit(
            EventKind.LITERATURE_EMBEDDED,
            {"entry_id": entry.id, "values": normalized.values, "model_tag": tag},
        )


# -- phase 1: problem definition -------------------------------------------------


def scribe_structure(session: Session, providers: ProviderSet) -> ProblemStatement:
    """Parse the raw problem into activity/item/contradiction/criteria/constraints."""
    if not session.problem_text.strip():
        raise ValidationError("problem text must be non-empty")
    _reason(session, "scribe", "structuring the raw problem statement")
    parsed = structured_chat(
        session,
        providers,
        role="scribe",
        prompt=render_prompt("scribe", problem_text=session.problem_text),
        schema_id="ai3c.v1",
    )
    problem = ProblemStatement(
        id=session.next_id("prob", len(session.vaults.problem_vault)),
        raw_text=session.problem_text,
        activity=parsed["activity"],
        item=parsed["item"],
        contradiction=parsed["contradiction"],
        criteria=list(parsed["criteria"]),
        constraints=list(parsed["constraints"]),
        created_at=len(session.event_log),
    )
    problem.validate()
    session.commit(EventKind.PROBLEM_STRUCTURED, {"problem": problem.to_dict()})
    _completed(session, "scribe", problem_id=problem.id)
    return session.vaults.problem_vault[-1]


# -- phase 2: participatory generation --------------------------------------------


def muse_structure(session: Session, raw_idea: str, providers: ProviderSet) -> Idea:
    """Re-frame a designer's free-text idea into AOC form; provenance stays human."""
    if not raw_idea.strip():
        raise ValidationError("idea text must be non-empty")
    problem = _require_problem(session)
    _reason(session, "muse", "structuring a designer-contributed idea")
    parsed = structured_chat(
        session,
        providers,
        role="muse",
        prompt=render_prompt("muse", raw_idea=raw_idea, **_problem_fields(problem)),
        schema_id="aoc.v1",
    )
    idea = Idea(
        id=session.next_id("idea", len(session.vaults.idea_vault)),
        title=parsed["title"],
        action=parsed["action"],
        object=parsed["object"],
        context=parsed["context"],
        provenance=Provenance.HUMAN,
        origin_phase=session.phase,
        status=IdeaStatus.RAW,
    )
    idea.validate()
    session.commit(EventKind.IDEA_ADDED, {"idea": idea.to_dict(), "source": "muse"}, actor="human")
    _completed(session, "muse", idea_id=idea.id)
    return session.vaults.idea(idea.id)


def forge_generate(session: Session, providers: ProviderSet) -> list[Idea]:
    """Two-sub-agent brainstorm: grounded formulator plus high-temperature explorer.

    Both sub-agent calls must succeed before any idea is committed, so a
    failure leaves the vault untouched. On rounds after the first, prior
    survivors are quoted in the prompt so new ideas are pushed away from them.
    """
    problem = _require_problem(session)
    count = session.config.forge_ideas_per_subagent
    survivors = session.ideas_with_status(IdeaStatus.SHORTLISTED, IdeaStatus.GLOBALLY_NOVEL)
    if session.round > 1 and survivors:
        prior = "\n".join(f"- {i.title}: {i.action} / {i.object}" for i in survivors)
    else:
        prior = "None yet."
    _reason(session, "forge", f"round {session.round}: requesting {count} ideas per sub-agent")

    def run_subagent(role: str) -> list[dict]:
        parsed = structured_chat(
            session,
            providers,
            role=role,
            prompt=render_prompt(role, count=str(count), prior_ideas=prior, **_problem_fields(problem)),
            schema_id="aoc_list.v1",
        )
        if len(parsed) != count:
            _warn(session, role, f"asked for {count} ideas, provider returned {len(parsed)}")
        return parsed

    formulator = run_subagent("forge_formulator")
    explorer = run_subagent("forge_explorer")

    ideas: list[Idea] = []
    for provenance, batch in (
        (Provenance.AI_FORMULATOR, formulator),
        (Provenance.AI_EXPLORER, explorer),
    ):
        for entry in batch:
            idea = Idea(
                id=session.next_id("idea", len(session.vaults.idea_vault)),
                title=entry["title"],
                action=entry["action"],
                object=entry["object"],
                context=entry["context"],
                provenance=provenance,
                origin_phase=session.phase,
                status=IdeaStatus.RAW,
            )
            idea.validate()
            session.commit(EventKind.IDEA_ADDED, {"idea": idea.to_dict(), "source": "forge"})
            ideas.append(session.vaults.idea(idea.id))
    _completed(
        session,
        "forge",
        formulator_count=len(formulator),
        explorer_count=len(explorer),
        idea_ids=[i.id for i in ideas],
    )
    return ideas


# -- phase 3: internal assessment and external benchmarking -----------------------


def gatekeeper_filter(session: Session, providers: ProviderSet) -> list[Idea]:
    """Local novelty/diversity shortlist over the alive idea pool.

    Evaluation is blind to provenance: the pool is selected by status alone
    and the decision reads only embeddings. Ideas that already survived an
    earlier round are incumbents; a cluster containing an incumbent promotes
    nobody, so survivors never regress and counts stay funnel-monotone.
    """
    pool = [i for i in session.alive_ideas() if i.status in _LOCAL_POOL]
    _reason(
        session,
        "gatekeeper",
        f"clustering {len(pool)} ideas at eps={session.config.gatekeeper_eps}, "
        f"min_pts={session.config.gatekeeper_min_pts}",
    )
    embed_pending_ideas(session, providers, pool)
    input_ids = [i.id for i in pool]

    if len(pool) < 2:
        _warn(session, "gatekeeper", f"pool of {len(pool)} passes through unclustered")
        promoted = sum(1 for i in pool if i.status == IdeaStatus.RAW)
        for idea in pool:
            if idea.status == IdeaStatus.RAW:
                session.commit(
                    EventKind.IDEA_STATUS_CHANGED,
                    {
                        "idea_id": idea.id,
                        "status": IdeaStatus.SHORTLISTED.value,
                        "reason": "pass-through: pool too small to cluster",
                        "by": "gatekeeper",
                    },
                )
        survivors = list(pool)
        _completed(
            session,
            "gatekeeper",
            input_ids=input_ids,
            survivor_ids=[i.id for i in survivors],
            new_survivors=promoted,
        )
        return survivors

    assignment = clustering.cluster_ideas(
        pool, session.config.gatekeeper_eps, session.config.gatekeeper_min_pts
    )
    incumbents = {i.id for i in pool if i.status != IdeaStatus.RAW}
    survivors: list[Idea] = []
    promoted = 0
    removed: list[tuple[Idea, str]] = []

    noise = set(assignment.noise_indices)
    for index, idea in enumerate(pool):
        if index in noise:
            survivors.append(idea)
    for label in range(assignment.n_clusters):
        members = [pool[i] for i in assignment.members(label)]
        cluster_incumbents = [i for i in members if i.id in incumbents]
        if cluster_incumbents:
            survivors.extend(cluster_incumbents)
            for idea in members:
                if idea.id not in incumbents:
                    removed.append((idea, "semantic duplicate of an earlier survivor"))
        else:
            rep = clustering.shortlist_representatives(
                members,
                clustering.ClusterAssignment(
                    labels=[0] * len(members),
                    n_clusters=1,
                    eps=assignment.eps,
                    min_pts=assignment.min_pts,
                ),
            )[0]
            survivors.append(rep)
            for idea in members:
                if idea.id != rep.id:
                    removed.append((idea, f"semantic duplicate of {rep.id}"))

    for idea in survivors:
        if idea.status == IdeaStatus.RAW:
            promoted += 1
            session.commit(
                EventKind.IDEA_STATUS_CHANGED,
                {
                    "idea_id": idea.id,
                    "status": IdeaStatus.SHORTLISTED.value,
                    "reason": "locally novel and diverse",
                    "by": "gatekeeper",
                },
            )
    for idea, why in removed:
        session.commit(
            EventKind.IDEA_STATUS_CHANGED,
            {
                "idea_id": idea.id,
                "status": IdeaStatus.REMOVED.value,
                "reason": why,
                "by": "gatekeeper",
            },
        )
    survivors.sort(key=lambda i: input_ids.index(i.id))
    _completed(
        session,
        "gatekeeper",
        input_ids=input_ids,
        survivor_ids=[i.id for i in survivors],
        new_survivors=promoted,
        n_clusters=assignment.n_clusters,
        noise=len(noise),
    )
    return survivors


def add_manual_literature(
    session: Session, providers: ProviderSet, entries: list[dict[str, str]]
) -> list[LiteratureEntry]:
    """Manual-mode intake: the designer supplies known products with links."""
    added = []
    for raw in entries:
        entry = LiteratureEntry(
            id=session.next_id("lit", len(session.vaults.literature_vault)),
            title=raw.get("title", ""),
            action=raw.get("action", ""),
            object=raw.get("object", ""),
            context=raw.get("context", ""),
            source_url=raw.get("source_url", ""),
            retrieval_mode=RetrievalMode.MANUAL,
        )
        entry.validate()
        session.commit(
            EventKind.LITERATURE_ADDED, {"entry": entry.to_dict(), "source": "manual"}, actor="human"
        )
        added.append(session.vaults.literature_vault[-1])
    if added:
        embed_pending_literature(session, providers)
    return added


def librarian_gather(
    session: Session,
    providers: ProviderSet,
    manual_entries: Optional[list[dict[str, str]]] = None,
) -> list[LiteratureEntry]:
    """Collect existing real-world solutions; search results are structured into
    AOC form, manual entries bypass search entirely."""
    problem = _require_problem(session)
    added: list[LiteratureEntry] = []
    if manual_entries:
        added.extend(add_manual_literature(session, providers, manual_entries))

    already_searched = any(
        e.retrieval_mode == RetrievalMode.SEARCH for e in session.vaults.literature_vault
    )
    if already_searched:
        _reason(session, "librarian", "literature vault already populated; skipping search")
        _completed(session, "librarian", added=len(added), skipped=True)
        return added

    _reason(session, "librarian", "searching for existing solutions")
    limit = session.config.librarian_result_limit
    query = f"existing products addressing: {problem.activity}; {problem.contradiction}"
    try:
        results = providers.search(query, limit)
    except ProviderError as exc:
        _warn(session, "librarian", f"search unreachable, degrading to manual-only: {exc}")
        _completed(session, "librarian", added=len(added), degraded=True)
        return added

    if results:
        listing = "\n".join(f"- {r.title} | {r.url} | {r.snippet}" for r in results)
        known_urls = {r.url for r in results}

        def check(parsed: Any) -> None:
            for item in parsed:
                if item["source_url"] not in known_urls:
                    raise ValueError(
                        f"source_url {item['source_url']!r} is not one of the search results"
                    )

        parsed = structured_chat(
            session,
            providers,
            role="librarian",
            prompt=render_prompt(
                "librarian", search_results=listing, **_problem_fields(problem)
            ),
            schema_id="literature_list.v1",
            validator=check,
        )
        for item in parsed[:limit]:
            entry = LiteratureEntry(
                id=session.next_id("lit", len(session.vaults.literature_vault)),
                title=item["title"],
                action=item["action"],
                object=item["object"],
                context=item["context"],
                source_url=item["source_url"],
                retrieval_mode=RetrievalMode.SEARCH,
            )
            entry.validate()
            session.commit(EventKind.LITERATURE_ADDED, {"entry": entry.to_dict(), "source": "search"})
            added.append(session.vaults.literature_vault[-1])
        embed_pending_literature(session, providers)
    _completed(session, "librarian", added=len(added))
    return added


def challenger_filter(session: Session, providers: ProviderSet) -> list[Idea]:
    """Global novelty: an idea survives iff its best cosine similarity against
    the whole literature vault stays below the configured threshold."""
    pool = session.ideas_with_status(IdeaStatus.SHORTLISTED)
    literature = [e for e in session.vaults.literature_vault if e.embedding is not None]
    threshold = session.config.challenger_threshold
    _reason(
        session,
        "challenger",
        f"comparing {len(pool)} shortlisted ideas against {len(literature)} known solutions",
    )
    input_ids = [i.id for i in pool]
    if not literature:
        _warn(session, "challenger", "literature vault empty; passing all ideas through")
        for idea in pool:
            session.commit(
                EventKind.IDEA_STATUS_CHANGED,
                {
                    "idea_id": idea.id,
                    "status": IdeaStatus.GLOBALLY_NOVEL.value,
                    "reason": "no literature to compare against",
                    "by": "challenger",
                },
            )
        _completed(session, "challenger", input_ids=input_ids, survivor_ids=input_ids)
        return pool

    lit_vectors = [
        EmbeddingVector(values=e.embedding, model_tag=e.embedding_model) for e in literature
    ]
    survivors = []
    for idea in pool:
        vec = idea_vectors([idea])[0]
        best = max(cosine_similarity(vec, lv) for lv in lit_vectors)
        nearest = literature[
            max(range(len(lit_vectors)), key=lambda k: cosine_similarity(vec, lit_vectors[k]))
        ]
        if best < threshold:
            survivors.append(idea)
            session.commit(
                EventKind.IDEA_STATUS_CHANGED,
                {
                    "idea_id": idea.id,
                    "status": IdeaStatus.GLOBALLY_NOVEL.value,
                    "reason": f"max literature similarity {best:.4f} < {threshold}",
                    "by": "challenger",
                },
            )
        else:
            session.commit(
                EventKind.IDEA_STATUS_CHANGED,
                {
                    "idea_id": idea.id,
                    "status": IdeaStatus.REMOVED.value,
                    "reason": f"too close to {nearest.title} ({best:.4f} >= {threshold})",
                    "by": "challenger",
                },
            )
    _completed(
        session,
        "challenger",
        input_ids=input_ids,
        survivor_ids=[i.id for i in survivors],
    )
    return survivors


# -- phase 4: divergence and feasibility -------------------------------------------


def _dedupe_case_insensitive(items: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for item in items:
        key = item.strip().lower()
        if key and key not in seen:
            seen.add(key)
            out.append(item.strip())
    return out


def mint_extract(session: Session, providers: ProviderSet) -> tuple[list[str], list[str]]:
    """Deconstruct the globally novel ideas into independent action/object lists."""
    ideas = session.ideas_with_status(IdeaStatus.GLOBALLY_NOVEL)
    if not ideas:
        raise ValidationError("mint requires at least one globally novel idea")
    list_size = session.config.mint_list_size
    _reason(session, "mint", f"extracting {list_size} actions and objects from {len(ideas)} ideas")
    listing = "\n".join(f"- {i.title}: {i.action} / {i.object} ({i.context})" for i in ideas)

    def check(parsed: Any) -> None:
        actions = _dedupe_case_insensitive(parsed["actions"])
        objects = _dedupe_case_insensitive(parsed["objects"])
        if len(actions) < list_size or len(objects) < list_size:
            raise ValueError(
                f"need {list_size} distinct actions and objects, got "
                f"{len(actions)} and {len(objects)} after deduplication"
            )

    try:
        parsed = structured_chat(
            session,
            providers,
            role="mint",
            prompt=render_prompt("mint", ideas=listing, list_size=str(list_size)),
            schema_id="mint_lists.v1",
            validator=check,
        )
    except StructuredOutputError as exc:
        if exc.parsed is None:
            raise
        parsed = exc.parsed
        _warn(session, "mint", f"provider returned fewer distinct items than {list_size}")

    actions = _dedupe_case_insensitive(parsed["actions"])[:list_size]
    objects = _dedupe_case_insensitive(parsed["objects"])[:list_size]
    session.commit(
        EventKind.ACTIONS_OBJECTS_EXTRACTED, {"actions": actions, "objects": objects}
    )
    _completed(session, "mint", actions=len(actions), objects=len(objects))
    return actions, objects


def scout_score(session: Session, providers: ProviderSet) -> FeasibilityGrid:
    """Score every action-object pair 1-10, batched one grid row per prompt.

    The returned grid is sorted by descending score, ties broken by action
    then object index. A score the provider cannot express as an integer in
    [1, 10] is retried once and then defaulted to 1 with a flag.
    """
    problem = _require_problem(session)
    actions, objects = session.mint_actions, session.mint_objects
    if not actions or not objects:
        raise ValidationError("scout requires non-empty action and object lists")
    _reason(session, "scout", f"scoring {len(actions)}x{len(objects)} pairs")
    object_listing = "\n".join(f"{j}. {obj}" for j, obj in enumerate(objects))
    pairs: list[ActionObjectPair] = []

    def coerce(value: Any) -> Optional[int]:
        try:
            score = int(value)
        except (TypeError, ValueError):
            return None
        return score if 1 <= score <= 10 else None

    for ai, action in enumerate(actions):

        def check(parsed: Any) -> None:
            indexes = sorted(item["object_index"] for item in parsed)
            if indexes != list(range(len(objects))):
                raise ValueError(f"row must cover object indexes 0..{len(objects) - 1} exactly once")
            bad = [item["object_index"] for item in parsed if coerce(item["score"]) is None]
            if bad:
                raise ValueError(f"unparseable scores (must be integers 1-10) at indexes {bad}")

        try:
            row = structured_chat(
                session,
                providers,
                role="scout",
                prompt=render_prompt(
                    "scout",
                    action=action,
                    objects=object_listing,
                    activity=problem.activity,
                    contradiction=problem.contradiction,
                    criteria="; ".join(problem.criteria),
                    constraints="; ".join(problem.constraints),
                ),
                schema_id="scout_row.v1",
                validator=check,
            )
        except StructuredOutputError as exc:
            if exc.parsed is None:
                raise
            row = exc.parsed
            indexes = sorted(item["object_index"] for item in row)
            if indexes != list(range(len(objects))):
                raise
            _warn(session, "scout", f"defaulting unparseable scores to 1 in row {ai}")
        for item in sorted(row, key=lambda r: r["object_index"]):
            score = coerce(item["score"])
            pairs.append(
                ActionObjectPair(
                    action=action,
                    object=objects[item["object_index"]],
                    feasibility_score=score if score is not None else 1,
                    rationale=item.get("rationale", ""),
                    action_index=ai,
                    object_index=item["object_index"],
                    defaulted=score is None,
                )
            )

    pairs.sort(key=lambda p: (-p.feasibility_score, p.action_index, p.object_index))
    grid = FeasibilityGrid(actions=actions, objects=objects, pairs=pairs)
    grid.validate()
    session.commit(EventKind.FEASIBILITY_SCORED, {"pairs": [p.to_dict() for p in pairs]})
    _completed(session, "scout", pairs=len(pairs))
    return grid


# -- phase 5: progressive refinement and curation -----------------------------------


def navigator_rehydrate(session: Session, providers: ProviderSet) -> list[Idea]:
    """Re-hydrate the top-k feasible pairs into full ideas, then run an internal
    novelty pass so only mutually distinct syntheses enter the vault."""
    problem = _require_problem(session)
    if not session.feasibility_grid:
        raise ValidationError("navigator requires a scored feasibility grid")
    top = session.feasibility_grid[: session.config.scout_top_k]
    _reason(session, "navigator", f"re-hydrating top {len(top)} action-object pairs")
    listing = "\n".join(
        f"{k + 1}. action: {p.action} | object: {p.object} | score {p.feasibility_score}/10"
        for k, p in enumerate(top)
    )
    parsed = structured_chat(
        session,
        providers,
        role="navigator",
        prompt=render_prompt("navigator", pairs=listing, **_problem_fields(problem)),
        schema_id="aoc_list.v1",
    )
    if len(parsed) != len(top):
        _warn(session, "navigator", f"asked for {len(top)} ideas, provider returned {len(parsed)}")

    # Internal novelty/diversity pass over the candidates, before any vault write.
    candidates = [
        Idea(
            id=f"candidate-{k + 1:04d}",
            title=item["title"],
            action=item["action"],
            object=item["object"],
            context=item["context"],
            provenance=Provenance.NAVIGATOR_SYNTHESIZED,
            origin_phase=session.phase,
        )
        for k, item in enumerate(parsed)
    ]
    for candidate in candidates:
        candidate.validate()
    vectors = providers.embed_batch([embedding_text(c) for c in candidates])
    tag = providers.embedding_model_tag
    for candidate, values in zip(candidates, vectors):
        normalized = EmbeddingVector(values=values, model_tag=tag)
        candidate.embedding = normalized.values
        candidate.embedding_model = tag
    if len(candidates) >= 2:
        assignment = clustering.cluster_ideas(
            candidates, session.config.gatekeeper_eps, session.config.gatekeeper_min_pts
        )
        kept = clustering.shortlist_representatives(candidates, assignment)
    else:
        kept = list(candidates)
    pruned = len(candidates) - len(kept)

    ideas = []
    for candidate in kept:
        idea = Idea(
            id=session.next_id("idea", len(session.vaults.idea_vault)),
            title=candidate.title,
            action=candidate.action,
            object=candidate.object,
            context=candidate.context,
            provenance=Provenance.NAVIGATOR_SYNTHESIZED,
            origin_phase=session.phase,
            embedding=candidate.embedding,
            embedding_model=candidate.embedding_model,
            status=IdeaStatus.GLOBALLY_NOVEL,
        )
        session.commit(EventKind.IDEA_ADDED, {"idea": idea.to_dict(), "source": "navigator"})
        ideas.append(session.vaults.idea(idea.id))
    _completed(
        session,
        "navigator",
        candidates=len(candidates),
        pruned=pruned,
        idea_ids=[i.id for i in ideas],
    )
    return ideas


def sentinel_curate(session: Session, providers: ProviderSet) -> list[Idea]:
    """Relevance check of every candidate against the problem's criteria and
    constraints; verdicts are keep, polish (context rewrite only), or remove."""
    problem = _require_problem(session)
    pool = sorted(session.ideas_with_status(IdeaStatus.GLOBALLY_NOVEL), key=lambda i: i.id)
    if not pool:
        _warn(session, "sentinel", "no candidates to curate")
        _completed(session, "sentinel", input_ids=[], survivor_ids=[])
        return []
    _reason(session, "sentinel", f"checking {len(pool)} candidates for relevance")
    listing = "\n".join(
        f"- id {i.id}: {i.title} | action: {i.action} | object: {i.object} | context: {i.context}"
        for i in pool
    )
    pool_ids = [i.id for i in pool]

    def check(parsed: Any) -> None:
        got = [item["idea_id"] for item in parsed]
        if sorted(got) != sorted(pool_ids):
            raise ValueError("verdicts must cover every candidate id exactly once")
        for item in parsed:
            if item["verdict"] == "polish" and not item.get("polished_context", "").strip():
                raise ValueError(f"polish verdict for {item['idea_id']} needs polished_context")

    parsed = structured_chat(
        session,
        providers,
        role="sentinel",
        prompt=render_prompt(
            "sentinel",
            candidates=listing,
            criteria="; ".join(problem.criteria),
            constraints="; ".join(problem.constraints),
        ),
        schema_id="sentinel_verdicts.v1",
        validator=check,
    )
    by_id = {item["idea_id"]: item for item in parsed}
    survivors = []
    for idea in pool:
        verdict = by_id[idea.id]
        if verdict["verdict"] == "remove":
            session.commit(
                EventKind.IDEA_STATUS_CHANGED,
                {
                    "idea_id": idea.id,
                    "status": IdeaStatus.REMOVED.value,
                    "reason": verdict.get("reason", "drifted from the problem"),
                    "by": "sentinel",
                },
            )
            continue
        if verdict["verdict"] == "polish":
            session.commit(
                EventKind.IDEA_CONTEXT_POLISHED,
                {"idea_id": idea.id, "context": verdict["polished_context"]},
            )
        session.commit(
            EventKind.IDEA_STATUS_CHANGED,
            {
                "idea_id": idea.id,
                "status": IdeaStatus.CURATED.value,
                "reason": verdict.get("reason", "relevant to the problem"),
                "by": "sentinel",
            },
        )
        survivors.append(idea)
    _completed(
        session,
        "sentinel",
        input_ids=pool_ids,
        survivor_ids=[i.id for i in survivors],
    )
    return survivors


# -- phase 6: conceptualization and visualization -------------------------------------


def director_conceptualize(session: Session, idea: Idea, providers: ProviderSet) -> Concept:
    """Expand one curated idea into a principle/features/implementation/
    characteristics concept."""
    if idea.status != IdeaStatus.CURATED:
        raise ValidationError(f"idea {idea.id} is not curated")
    existing = session.vaults.concept_for(idea.id)
    if existing is not None:
        raise ValidationError(f"idea {idea.id} already has concept {existing.id}")
    problem = _require_problem(session)
    _reason(session, "director", f"expanding {idea.id} into a concept")
    parsed = structured_chat(
        session,
        providers,
        role="director",
        prompt=render_prompt(
            "director",
            title=idea.title,
            action=idea.action,
            object=idea.object,
            context=idea.context,
            activity=problem.activity,
            contradiction=problem.contradiction,
            criteria="; ".join(problem.criteria),
            constraints="; ".join(problem.constraints),
        ),
        schema_id="pfic.v1",
    )
    concept = Concept(
        id=session.next_id("con", len(session.vaults.concept_vault)),
        idea_id=idea.id,
        principle=parsed["principle"],
        features=list(parsed["features"]),
        implementation=list(parsed["implementation"]),
        characteristics=list(parsed["characteristics"]),
    )
    concept.validate()
    session.commit(EventKind.CONCEPT_ADDED, {"concept": concept.to_dict()})
    _completed(session, "director", concept_id=concept.id, idea_id=idea.id)
    return session.vaults.concept_vault[-1]


def leo_render_prompt(concept: Concept) -> str:
    """Assemble the text-to-image prompt; every feature and characteristic
    appears verbatim."""
    concept.validate()
    features = " ".join(f"Feature: {f}." for f in concept.features)
    characteristics = " ".join(f"Characteristic: {c}." for c in concept.characteristics)
    return (
        "Photorealistic product rendering, studio lighting, neutral background. "
        f"Working principle: {concept.principle} {features} {characteristics}"
    )


def leo_render(
    session: Session,
    concept: Concept,
    providers: ProviderSet,
    artifact_sink: Optional[Callable[[str, bytes], None]] = None,
) -> Optional[str]:
    """Render one concept; a provider failure leaves the concept intact with no
    rendering reference."""
    prompt = leo_render_prompt(concept)
    _reason(session, "leo", f"rendering {concept.id}")
    try:
        artifact = providers.render_image(prompt)
    except ProviderError as exc:
        _warn(session, "leo", f"rendering failed for {concept.id}: {exc}")
        return None
    if artifact_sink is not None:
        artifact_sink(artifact.artifact_id, artifact.content)
    session.commit(
        EventKind.CONCEPT_RENDERED,
        {"concept_id": concept.id, "rendering_ref": artifact.artifact_id},
    )
    _completed(session, "leo", concept_id=concept.id, rendering_ref=artifact.artifact_id)
    return artifact.artifact_id


__all__ = [
    "AgentError",
    "AgentRequest",
    "FeasibilityGrid",
    "StructuredOutputError",
    "structured_chat",
    "extract_json",
    "render_prompt",
    "load_template",
    "load_schema",
    "scribe_structure",
    "muse_structure",
    "forge_generate",
    "gatekeeper_filter",
    "librarian_gather",
    "add_manual_literature",
    "challenger_filter",
    "mint_extract",
    "scout_score",
    "navigator_rehydrate",
    "sentinel_curate",
    "director_conceptualize",
    "leo_render_prompt",
    "leo_render",
]
