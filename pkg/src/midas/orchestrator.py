"""The orchestrator: a phase state machine that sequences the agents, enforces
human gates, loops generation/assessment until the shortlist stops growing,
and rolls a failed phase back to its entry snapshot.

Phase steps execute on a scratch copy of the session; only a fully successful
phase replaces the real session, so a mid-phase provider failure leaves the
vaults byte-identical to phase entry (the failure itself is logged).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import agents
from .model import (
    EventKind,
    IdeaStatus,
    MidasError,
    Phase,
    PHASE_ORDER,
    Provenance,
    Session,
    ValidationError,
    phase_index,
)
from .providers import ProviderError, ProviderSet


class GateError(MidasError):
    """A human-approval gate blocked the transition."""


class PhaseOrderError(MidasError):
    """The requested transition violates the phase order."""


@dataclass
class HumanApproval:
    approved_by: str
    note: str = ""


@dataclass
class PhasePlan:
    """Ordered phases, the agent steps each runs, and which exits need approval."""

    steps: dict[Phase, tuple[str, ...]] = field(
        default_factory=lambda: {
            Phase.DEFINITION: ("scribe",),
            Phase.GENERATION: ("forge",),
            Phase.ASSESSMENT: ("gatekeeper", "librarian", "challenger"),
            Phase.DIVERGENCE: ("mint", "scout"),
            Phase.REFINEMENT: ("navigator", "sentinel"),
            Phase.CONCEPTUALIZATION: ("director", "leo"),
        }
    )
    gated: frozenset = frozenset({Phase.DEFINITION, Phase.ASSESSMENT, Phase.REFINEMENT})

    def validate(self) -> None:
        known = {
            "scribe",
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
        }
        for phase, steps in self.steps.items():
            if phase not in PHASE_ORDER or phase == Phase.DONE:
                raise ValidationError(f"plan names unknown phase {phase}")
            unknown = set(steps) - known
            if unknown:
                raise ValidationError(f"plan references undefined agents: {sorted(unknown)}")


DEFAULT_PLAN = PhasePlan()


def _loop_back_to_generation(session: Session) -> bool:
    """The continuous-generation loop repeats while rounds remain and the last
    local-novelty pass still admitted new survivors."""
    return (
        session.round < session.config.max_rounds
        and session.last_gatekeeper_new > 0
    )


def next_phase(session: Session) -> Phase:
    if session.phase == Phase.ASSESSMENT and _loop_back_to_generation(session):
        return Phase.GENERATION
    return PHASE_ORDER[phase_index(session.phase) + 1]


def gate_required(session: Session, plan: PhasePlan = DEFAULT_PLAN) -> bool:
    """A gate applies when leaving a gated phase toward the next pipeline stage;
    the generation/assessment loop-back is part of the continuous pipeline and
    never gates."""
    if not session.config.gates_enabled:
        return False
    if session.phase not in plan.gated:
        return False
    if session.phase == Phase.ASSESSMENT and next_phase(session) == Phase.GENERATION:
        return False
    return True


def steps_complete(session: Session, plan: PhasePlan = DEFAULT_PLAN) -> bool:
    if session.phase == Phase.DONE:
        return True
    return all(step in session.phase_steps_done for step in plan.steps[session.phase])


def run_phase(
    session: Session,
    providers: ProviderSet,
    plan: PhasePlan = DEFAULT_PLAN,
    manual_literature: Optional[list[dict[str, str]]] = None,
    artifact_sink: Optional[Callable[[str, bytes], None]] = None,
) -> Session:
    """Execute the current phase's pending agent steps.

    Returns the updated session on success. On an agent failure the returned
    session is the entry state plus a single phase_failed event: vaults are
    untouched and the phase is resumable by calling run_phase again.
    """
    if session.phase == Phase.DONE:
        raise ValidationError("session is done; nothing to run")
    pending = [s for s in plan.steps[session.phase] if s not in session.phase_steps_done]
    if not pending:
        return session
    scratch = session.clone()
    scratch.commit(
        EventKind.PHASE_STARTED,
        {"phase": scratch.phase.value, "round": scratch.round, "steps": pending},
    )
    step = pending[0]
    try:
        for step in pending:
            _run_step(scratch, step, providers, manual_literature, artifact_sink)
            scratch.commit(
                EventKind.STEP_COMPLETED, {"phase": scratch.phase.value, "step": step}
            )
    except (agents.AgentError, ProviderError, ValidationError) as exc:
        session.commit(
            EventKind.PHASE_FAILED,
            {"phase": session.phase.value, "round": session.round, "step": step, "error": str(exc)},
        )
        return session
    if steps_complete(scratch, plan) and gate_required(scratch, plan) and not scratch.config.auto_approve:
        scratch.commit(EventKind.GATE_WAITING, {"phase": scratch.phase.value})
    return scratch


def _run_step(
    session: Session,
    step: str,
    providers: ProviderSet,
    manual_literature: Optional[list[dict[str, str]]],
    artifact_sink: Optional[Callable[[str, bytes], None]],
) -> None:
    if step == "scribe":
        agents.scribe_structure(session, providers)
    elif step == "forge":
        agents.forge_generate(session, providers)
    elif step == "gatekeeper":
        agents.gatekeeper_filter(session, providers)
    elif step == "librarian":
        agents.librarian_gather(session, providers, manual_entries=manual_literature)
    elif step == "challenger":
        agents.challenger_filter(session, providers)
    elif step == "mint":
        agents.mint_extract(session, providers)
    elif step == "scout":
        agents.scout_score(session, providers)
    elif step == "navigator":
        agents.navigator_rehydrate(session, providers)
    elif step == "sentinel":
        agents.sentinel_curate(session, providers)
    elif step == "director":
        curated = sorted(
            session.ideas_with_status(IdeaStatus.CURATED), key=lambda i: (len(i.id), i.id)
        )
        for idea in curated:
            if session.vaults.concept_for(idea.id) is None:
                agents.director_conceptualize(session, idea, providers)
    elif step == "leo":
        concepts = sorted(
            (c for c in session.vaults.concept_vault if not c.archived),
            key=lambda c: (len(c.id), c.id),
        )
        for concept in concepts:
            if concept.rendering_ref is None:
                agents.leo_render(session, concept, providers, artifact_sink)
    else:  # pragma: no cover - plan validated against known steps
        raise ValidationError(f"unknown phase step {step!r}")


def advance(
    session: Session,
    approval: Optional[HumanApproval] = None,
    plan: PhasePlan = DEFAULT_PLAN,
) -> Session:
    """Move the phase pointer once the current phase's steps are complete and
    any gate is satisfied."""
    if session.phase == Phase.DONE:
        raise ValidationError("cannot advance a completed session")
    if session.phase_failed:
        raise ValidationError("current phase failed; re-run it before advancing")
    if not steps_complete(session, plan):
        missing = [s for s in plan.steps[session.phase] if s not in session.phase_steps_done]
        raise ValidationError(f"phase {session.phase.value} has unfinished steps: {missing}")
    destination = next_phase(session)
    if gate_required(session, plan):
        if session.config.auto_approve:
            session.commit(
                EventKind.GATE_APPROVED,
                {"phase": session.phase.value, "approved_by": "auto", "note": "headless mode"},
            )
        elif approval is None:
            raise GateError(
                f"advancing out of {session.phase.value} requires human approval"
            )
        else:
            session.commit(
                EventKind.GATE_APPROVED,
                {
                    "phase": session.phase.value,
                    "approved_by": approval.approved_by,
                    "note": approval.note,
                },
                actor="human",
            )
    looping = session.phase == Phase.ASSESSMENT and destination == Phase.GENERATION
    new_round = session.round + 1 if looping else session.round
    session.commit(
        EventKind.PHASE_ADVANCED,
        {
            "from": session.phase.value,
            "to": destination.value,
            "round": new_round,
            "trigger": "human" if approval is not None else "system",
        },
        actor="human" if approval is not None else "system",
    )
    if destination == Phase.DONE:
        session.commit(EventKind.SESSION_DONE, {})
    return session


# Highest idea status legitimately reachable before each phase re-executes.
_RERUN_STATUS_CAP = {
    Phase.DEFINITION: IdeaStatus.RAW,
    Phase.GENERATION: IdeaStatus.RAW,
    Phase.ASSESSMENT: IdeaStatus.RAW,
    Phase.DIVERGENCE: IdeaStatus.GLOBALLY_NOVEL,
    Phase.REFINEMENT: IdeaStatus.GLOBALLY_NOVEL,
    Phase.CONCEPTUALIZATION: IdeaStatus.CURATED,
}

_STATUS_RANK = {
    IdeaStatus.RAW: 0,
    IdeaStatus.SHORTLISTED: 1,
    IdeaStatus.GLOBALLY_NOVEL: 2,
    IdeaStatus.CURATED: 3,
}


def rerun_from(session: Session, target: Phase, plan: PhasePlan = DEFAULT_PLAN) -> Session:
    """Rewind to *target* so the pipeline can re-execute forward.

    Vault entries produced by the rewound phases are invalidated (navigator
    syntheses are removed, concepts archived); earlier ideas keep their
    identity but drop back to the highest status the target phase expects.
    The status trail of every touched idea is preserved in its history.
    """
    if target == Phase.DONE:
        raise PhaseOrderError("cannot rerun the terminal phase")
    if target not in plan.steps:
        raise PhaseOrderError(f"unknown rerun target {target}")
    if phase_index(target) > phase_index(session.phase):
        raise PhaseOrderError(
            f"rerun target {target.value} is after the current phase {session.phase.value}"
        )
    session.commit(
        EventKind.RERUN_STARTED,
        {"target": target.value, "from": session.phase.value},
        actor="human",
    )

    # Invalidate downstream products of the phases being re-executed.
    if phase_index(target) <= phase_index(Phase.CONCEPTUALIZATION):
        for concept in session.vaults.concept_vault:
            if not concept.archived:
                session.commit(
                    EventKind.CONCEPT_ARCHIVED,
                    {"concept_id": concept.id, "reason": f"rerun from {target.value}"},
                    actor="human",
                )
    if phase_index(target) <= phase_index(Phase.REFINEMENT):
        for idea in session.vaults.idea_vault:
            if (
                idea.provenance == Provenance.NAVIGATOR_SYNTHESIZED
                and idea.status != IdeaStatus.REMOVED
            ):
                session.commit(
                    EventKind.IDEA_STATUS_CHANGED,
                    {
                        "idea_id": idea.id,
                        "status": IdeaStatus.REMOVED.value,
                        "reason": f"invalidated by rerun from {target.value}",
                        "by": "rerun",
                    },
                    actor="human",
                )

    # Rewind surviving idea statuses to the target phase's expectations.
    cap = _RERUN_STATUS_CAP[target]
    for idea in session.vaults.idea_vault:
        if idea.status == IdeaStatus.REMOVED:
            continue  # no resurrection: removals stand unless a human restores them
        if _STATUS_RANK[idea.status] > _STATUS_RANK[cap]:
            session.commit(
                EventKind.IDEA_STATUS_CHANGED,
                {
                    "idea_id": idea.id,
                    "status": cap.value,
                    "reason": f"status archived for rerun from {target.value}",
                    "by": "rerun",
                },
                actor="human",
            )

    new_round = 1 if target == Phase.GENERATION else session.round
    session.commit(
        EventKind.PHASE_ADVANCED,
        {
            "from": session.phase.value,
            "to": target.value,
            "round": new_round,
            "trigger": "rerun",
        },
        actor="human",
    )
    return session


def is_gate_waiting(session: Session) -> bool:
    """True when the newest phase activity is an unanswered approval gate."""
    for event in reversed(session.event_log):
        if event.kind == EventKind.GATE_WAITING:
            return True
        if event.kind in (EventKind.GATE_APPROVED, EventKind.PHASE_ADVANCED):
            return False
    return False
