"""Randomized scripted sessions: a generator that emits a provider transcript,
an embedding map, and the expected funnel for a full pipeline run.

The generator simulates the pipeline's id assignment and filter decisions
independently of the engine, so its expectations double as an oracle for the
funnel. Every run instantiates fresh transcript/embedder objects (cursors are
consumed), optionally with injected faults.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from midas.engine import Engine
from midas.model import Phase, SessionConfig
from midas.persistence import SessionStore
from midas.providers import ScriptedEmbedder, ScriptedTranscript, scripted_provider_set

DIM = 64


def unit_vector(rng: random.Random) -> list[float]:
    vec = [rng.gauss(0.0, 1.0) for _ in range(DIM)]
    norm = sum(v * v for v in vec) ** 0.5
    return [v / norm for v in vec]


def aoc_text(aoc: dict) -> str:
    return (
        f"Idea: {aoc['title']}. Action: {aoc['action']}. "
        f"Object: {aoc['object']}. Context: {aoc['context']}"
    )


@dataclass
class ScriptBundle:
    seed: int
    problem_text: str
    config_doc: dict
    muse_texts: list[str]
    manual_literature: list[dict]
    chat_payloads: list[object]
    search_batches: list[list[dict]]
    image_count: int
    embed_map: dict[str, list[float]]
    expected: dict = field(default_factory=dict)

    def config(self) -> SessionConfig:
        return SessionConfig.from_dict(self.config_doc)

    def transcript(
        self,
        chat_faults: Optional[dict[int, int]] = None,
        image_faults: Optional[set[int]] = None,
    ) -> ScriptedTranscript:
        """Fresh transcript; chat_faults maps chat index -> number of transient
        faults injected before that entry, image_faults marks fatal renders."""
        transcript = ScriptedTranscript()
        for index, payload in enumerate(self.chat_payloads):
            for _ in range((chat_faults or {}).get(index, 0)):
                transcript.chat_fault("transient")
            transcript.chat_response(payload)
        for batch in self.search_batches:
            transcript.search_response(batch)
        for index in range(self.image_count):
            if image_faults and index in image_faults:
                transcript.image_fault("fatal")
            else:
                transcript.image_response()
        return transcript

    def embedder(self) -> ScriptedEmbedder:
        return ScriptedEmbedder(mapping=dict(self.embed_map), dimension=DIM, model_tag="gen-64")


def build_bundle(seed: int) -> ScriptBundle:
    rng = random.Random(seed)
    rounds = rng.randint(1, 3)
    muse_count = rng.randint(0, 3)
    lit_count = rng.randint(0, 3)
    manual_count = rng.choice([0, 0, 1])
    # Square grids keep the mint validator satisfied on the first reply, so
    # the transcript stays aligned; rectangular grids are unit-tested.
    actions_count = objects_count = rng.randint(2, 4)
    top_k = rng.randint(2, min(5, actions_count * objects_count))
    nav_dup = rng.random() < 0.5 and top_k >= 2

    config_doc = {
        "max_rounds": rounds,
        "mint_list_size": actions_count,
        "scout_top_k": top_k,
        "gates_enabled": True,
        "auto_approve": True,
        "forge_ideas_per_subagent": 3,
    }

    chat: list[object] = []
    searches: list[list[dict]] = []
    embed_map: dict[str, list[float]] = {}

    def stamp(kind: str, n: int) -> dict:
        return {
            "title": f"{kind} idea {n} of run {seed}",
            "action": f"{kind} action {n}",
            "object": f"{kind} object {n}",
            "context": f"{kind} context {n} for run {seed}",
        }

    # Scribe.
    chat.append(
        {
            "activity": f"activity for run {seed}",
            "item": f"item for run {seed}",
            "contradiction": f"contradiction for run {seed}",
            "criteria": [f"criterion {i}" for i in range(rng.randint(1, 3))],
            "constraints": [f"constraint {i}" for i in range(rng.randint(1, 3))],
        }
    )

    # Simulated idea ledger: position -> (vector, first idea number).
    idea_counter = 0
    position_vectors: list[list[float]] = []
    position_first: list[int] = []

    def new_position() -> int:
        position_vectors.append(unit_vector(rng))
        position_first.append(0)
        return len(position_vectors) - 1

    forge_total = 0
    muse_texts = []
    for round_index in range(rounds):
        round_slots: list[int] = []
        while len(round_slots) < 2:  # both sub-agents must contribute
            for _ in range(rng.randint(1, 3)):  # new positions this round
                position = new_position()
                for _ in range(rng.randint(1, 3)):  # copies of the position
                    round_slots.append(position)
        split = rng.randint(1, len(round_slots) - 1)
        halves = (round_slots[:split], round_slots[split:])
        for half in halves:
            payload = []
            for position in half:
                idea_counter += 1
                forge_total += 1
                aoc = stamp("forge", idea_counter)
                payload.append(aoc)
                embed_map[aoc_text(aoc)] = position_vectors[position]
                if position_first[position] == 0:
                    position_first[position] = idea_counter
            chat.append(payload)
        if round_index == 0:
            for _ in range(muse_count):
                position = new_position()
                idea_counter += 1
                muse_texts.append(f"designer thought {idea_counter} for run {seed}")
                aoc = stamp("muse", idea_counter)
                chat.append(aoc)
                embed_map[aoc_text(aoc)] = position_vectors[position]
                position_first[position] = idea_counter
        if round_index == 0:
            # First assessment: one search; a structuring chat only if it hits.
            results = [
                {
                    "title": f"known product {i} run {seed}",
                    "url": f"https://known.example.org/run{seed}/{i}",
                    "snippet": f"snippet {i}",
                }
                for i in range(lit_count)
            ]
            searches.append(results)
            if results:
                entries = []
                for i, result in enumerate(results):
                    entries.append(
                        {
                            "title": result["title"],
                            "action": f"known action {i}",
                            "object": f"known object {i}",
                            "context": f"known context {i} run {seed}",
                            "source_url": result["url"],
                        }
                    )
                chat.append(entries)

    # Decide which positions the literature kills: each search entry may clone
    # one distinct position's vector (manual entries stay fresh).
    killed: set[int] = set()
    clean_candidates = list(range(len(position_vectors)))
    rng.shuffle(clean_candidates)
    lit_entries_in_chat = [p for p in chat if isinstance(p, list) and p and "source_url" in p[0]]
    if lit_entries_in_chat:
        entries = lit_entries_in_chat[0]
        for i, entry in enumerate(entries):
            if rng.random() < 0.5 and len(killed) < len(position_vectors) - 1:
                victim = clean_candidates.pop()
                killed.add(victim)
                embed_map[aoc_text(entry)] = position_vectors[victim]
            else:
                embed_map[aoc_text(entry)] = unit_vector(rng)

    manual_literature = []
    for i in range(manual_count):
        entry = {
            "title": f"manual product {i} run {seed}",
            "action": f"manual action {i}",
            "object": f"manual object {i}",
            "context": f"manual context {i} run {seed}",
            "source_url": f"https://manual.example.org/run{seed}/{i}",
        }
        manual_literature.append(entry)
        embed_map[aoc_text(entry)] = unit_vector(rng)

    gn_numbers = sorted(
        position_first[p] for p in range(len(position_vectors)) if p not in killed
    )

    # Mint and scout.
    actions = [f"extracted action {i} run {seed}" for i in range(actions_count)]
    objects = [f"extracted object {i} run {seed}" for i in range(objects_count)]
    chat.append({"actions": actions, "objects": objects})
    scores = {}
    for i in range(actions_count):
        row = []
        for j in range(objects_count):
            score = rng.randint(1, 10)
            scores[(i, j)] = score
            row.append({"object_index": j, "score": score, "rationale": f"pair {i}-{j}"})
        chat.append(row)

    # Navigator: one candidate per top pair; optionally the first two share a
    # position so the internal pass prunes one.
    candidates = []
    nav_positions: list[list[float]] = []
    for k in range(top_k):
        if nav_dup and k == 1:
            vec = nav_positions[0]
        else:
            vec = unit_vector(rng)
        nav_positions.append(vec)
        aoc = stamp("nav", 1000 + k)
        candidates.append(aoc)
        embed_map[aoc_text(aoc)] = vec
    chat.append(candidates)
    nav_deposited = top_k - (1 if nav_dup else 0)
    nav_numbers = [idea_counter + 1 + i for i in range(nav_deposited)]

    # Sentinel.
    pool_ids = sorted(f"idea-{n:04d}" for n in (gn_numbers + nav_numbers))
    verdicts = []
    curated_ids = []
    for idea_id in pool_ids:
        verdict = rng.choices(["keep", "polish", "remove"], weights=[6, 2, 2])[0]
        entry = {"idea_id": idea_id, "verdict": verdict, "reason": f"verdict for {idea_id}"}
        if verdict == "polish":
            entry["polished_context"] = f"polished context for {idea_id}"
        if verdict != "remove":
            curated_ids.append(idea_id)
        verdicts.append(entry)
    chat.append(verdicts)

    # Director, one call per curated idea in id order.
    for idea_id in curated_ids:
        chat.append(
            {
                "principle": f"principle for {idea_id}",
                "features": [f"feature a {idea_id}", f"feature b {idea_id}"],
                "implementation": [f"step a {idea_id}", f"step b {idea_id}"],
                "characteristics": [f"quality a {idea_id}"],
            }
        )

    expected = {
        "muse": muse_count,
        "forge": forge_total,
        "gatekeeper": len(position_vectors),
        "librarian": lit_count + manual_count,
        "challenger": len(gn_numbers),
        "mint": len(actions),
        "scout": actions_count * objects_count,
        "navigator": nav_deposited,
        "sentinel": len(curated_ids),
        "director": len(curated_ids),
        "leo": len(curated_ids),
        "curated_ids": curated_ids,
        "rounds": rounds,
    }
    return ScriptBundle(
        seed=seed,
        problem_text=f"problem statement for generated run {seed}",
        config_doc=config_doc,
        muse_texts=muse_texts,
        manual_literature=manual_literature,
        chat_payloads=chat,
        search_batches=searches,
        image_count=len(curated_ids),
        embed_map=embed_map,
        expected=expected,
    )


def run_bundle(
    bundle: ScriptBundle,
    store: Optional[SessionStore] = None,
    chat_faults: Optional[dict[int, int]] = None,
    image_faults: Optional[set[int]] = None,
    stop_on_failure: bool = False,
):
    """Drive a bundle end to end; returns (engine, session, transcript)."""
    transcript = bundle.transcript(chat_faults=chat_faults, image_faults=image_faults)
    embedder = bundle.embedder()
    engine = Engine(
        provider_factory=lambda s: scripted_provider_set(
            transcript, embedder=embedder, rng_seed=s.seed
        ),
        store=store,
    )
    session = engine.create_session(bundle.problem_text, bundle.config(), bundle.seed)
    sid = session.id
    engine.submit_problem(sid)
    engine.advance(sid)  # auto-approved gate -> Generation round 1
    for text in bundle.muse_texts:
        engine.submit_idea(sid, text)
    if bundle.manual_literature:
        engine.submit_literature(sid, bundle.manual_literature)
    guard = 0
    while engine.get(sid).phase != Phase.DONE:
        if engine.get(sid).phase_failed:
            if stop_on_failure:
                break
            raise AssertionError(f"bundle {bundle.seed}: phase failed unexpectedly")
        engine.advance(sid)
        guard += 1
        if guard > 50:
            raise AssertionError(f"bundle {bundle.seed}: did not terminate")
    return engine, engine.get(sid), transcript
