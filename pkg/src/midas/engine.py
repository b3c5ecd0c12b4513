"""Session manager: one executor per session, serialized mutations, event
fan-out for the SSE stream, and autosave.

Each public method acquires the session's lock, applies exactly one
core/orchestrator operation, persists the result when a store is configured,
and pushes the newly committed events to every subscriber queue.
"""

from __future__ import annotations

import queue
import threading
from typing import Any, Callable, Optional

from . import agents, orchestrator, persistence
from .model import (
    EventKind,
    Override,
    Phase,
    Session,
    SessionConfig,
    ValidationError,
    apply_override,
    new_session,
)
from .orchestrator import HumanApproval
from .persistence import SessionNotFound, SessionStore
from .providers import ProviderSet


class Engine:
    def __init__(
        self,
        provider_factory: Callable[[Session], ProviderSet],
        store: Optional[SessionStore] = None,
    ):
        self._provider_factory = provider_factory
        self.store = store
        self._sessions: dict[str, Session] = {}
        self._providers: dict[str, ProviderSet] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._subscribers: dict[str, list[queue.Queue]] = {}
        self._registry_lock = threading.Lock()

    # -- registry -------------------------------------------------------------

    def create_session(
        self, problem_text: str, config: Optional[SessionConfig] = None, seed: int = 0
    ) -> Session:
        config = config or SessionConfig()
        session = new_session(problem_text, config, seed)
        with self._registry_lock:
            if session.id in self._sessions:
                raise ValidationError(f"session {session.id} already exists (seed {seed} in use)")
            self._register(session)
        self._persist(session)
        self._notify(session.id, 0)
        return session

    def adopt_session(self, session: Session) -> Session:
        """Register an externally built or loaded session."""
        with self._registry_lock:
            if session.id in self._sessions:
                raise ValidationError(f"session {session.id} already exists")
            self._register(session)
        return session

    def _register(self, session: Session) -> None:
        self._sessions[session.id] = session
        self._locks[session.id] = threading.RLock()
        self._subscribers[session.id] = []
        providers = self._provider_factory(session)
        if self.store is not None:
            providers.capture = self._prompt_capture(session.id)
        self._providers[session.id] = providers

    def _prompt_capture(self, session_id: str):
        counter = {"n": 0}

        def capture(request) -> None:
            counter["n"] += 1
            self.store.save_prompt(
                session_id, f"{counter['n']:04d}-{request.role}.txt", request.prompt
            )

        return capture

    def load_from_store(self, session_id: str) -> Session:
        if self.store is None:
            raise SessionNotFound("engine has no store configured")
        return self.adopt_session(self.store.load_session(session_id))

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionNotFound(f"unknown session {session_id!r}") from None

    def providers_for(self, session_id: str) -> ProviderSet:
        self.get(session_id)
        return self._providers[session_id]

    def list_sessions(self) -> list[str]:
        return sorted(self._sessions)

    def _lock(self, session_id: str) -> threading.RLock:
        self.get(session_id)
        return self._locks[session_id]

    def _persist(self, session: Session) -> None:
        if self.store is not None:
            self.store.save_session(session)

    def _notify(self, session_id: str, since_index: int) -> None:
        session = self._sessions[session_id]
        new_events = [e.to_dict() for e in session.event_log[since_index:]]
        if not new_events:
            return
        for q in list(self._subscribers.get(session_id, [])):
            for event in new_events:
                q.put(event)

    def _mutate(self, session_id: str, op: Callable[[Session], Session]) -> Session:
        with self._lock(session_id):
            before = len(self.get(session_id).event_log)
            try:
                session = op(self.get(session_id))
                self._sessions[session_id] = session
            finally:
                # Even a rejected op may have committed audit events first.
                self._persist(self._sessions[session_id])
                self._notify(session_id, before)
            return self._sessions[session_id]

    # -- operations -----------------------------------------------------------

    def submit_problem(self, session_id: str, text: Optional[str] = None) -> Session:
        def op(session: Session) -> Session:
            if session.phase != Phase.DEFINITION:
                raise ValidationError("problem is structured during the definition phase")
            if text is not None and text != session.problem_text:
                session.commit(EventKind.PROBLEM_TEXT_UPDATED, {"text": text}, actor="human")
            return orchestrator.run_phase(
                session, self._providers[session_id], artifact_sink=self._sink(session_id)
            )

        return self._mutate(session_id, op)

    def submit_idea(self, session_id: str, text: str) -> Session:
        def op(session: Session) -> Session:
            agents.muse_structure(session, text, self._providers[session_id])
            return session

        return self._mutate(session_id, op)

    def submit_literature(self, session_id: str, entries: list[dict[str, str]]) -> Session:
        def op(session: Session) -> Session:
            agents.add_manual_literature(session, self._providers[session_id], entries)
            return session

        return self._mutate(session_id, op)

    def advance(
        self, session_id: str, approval: Optional[HumanApproval] = None
    ) -> Session:
        """Advance the phase pointer, then execute the new phase's steps.

        On a failed phase (phase_failed set), calling advance again re-runs the
        pending steps instead of moving on, which makes recovery idempotent.
        """

        def op(session: Session) -> Session:
            if session.phase_failed:
                return orchestrator.run_phase(
                    session, self._providers[session_id], artifact_sink=self._sink(session_id)
                )
            session = orchestrator.advance(session, approval)
            if session.phase == Phase.DONE:
                return session
            return orchestrator.run_phase(
                session, self._providers[session_id], artifact_sink=self._sink(session_id)
            )

        return self._mutate(session_id, op)

    def run_to_completion(
        self,
        session_id: str,
        approval: Optional[HumanApproval] = None,
        max_steps: int = 100,
    ) -> Session:
        """Drive the session until Done; gates must be auto-approved or an
        approval must be supplied."""
        session = self.get(session_id)
        if session.phase == Phase.DEFINITION and not session.phase_steps_done:
            session = self.submit_problem(session_id)
        steps = 0
        while session.phase != Phase.DONE:
            if session.phase_failed:
                raise ValidationError(
                    f"phase {session.phase.value} failed; resume or fix providers"
                )
            session = self.advance(session_id, approval)
            steps += 1
            if steps > max_steps:
                raise ValidationError("session did not finish within the step budget")
        return session

    def rerun(self, session_id: str, target: Phase) -> Session:
        def op(session: Session) -> Session:
            session = orchestrator.rerun_from(session, target)
            return orchestrator.run_phase(
                session, self._providers[session_id], artifact_sink=self._sink(session_id)
            )

        return self._mutate(session_id, op)

    def override(self, session_id: str, override: Override) -> Session:
        return self._mutate(session_id, lambda s: apply_override(s, override))

    def report(self, session_id: str, format: str = "json") -> Any:
        with self._lock(session_id):
            return persistence.export_report(self.get(session_id), format)

    def clusters(self, session_id: str) -> dict[str, Any]:
        with self._lock(session_id):
            return persistence.cluster_snapshot(self.get(session_id))

    def summary(self, session_id: str) -> dict[str, Any]:
        with self._lock(session_id):
            session = self.get(session_id)
            return {
                "id": session.id,
                "phase": session.phase.value,
                "round": session.round,
                "phase_failed": session.phase_failed,
                "gate_waiting": orchestrator.is_gate_waiting(session),
                "funnel": persistence.funnel_counts(session),
                "events": len(session.event_log),
            }

    # -- event stream -----------------------------------------------------------

    def subscribe(self, session_id: str, from_index: int = 0) -> tuple[list[dict], queue.Queue]:
        """Snapshot of events from *from_index* plus a live queue for the rest."""
        with self._lock(session_id):
            session = self.get(session_id)
            snapshot = [e.to_dict() for e in session.event_log[from_index:]]
            q: queue.Queue = queue.Queue()
            self._subscribers[session_id].append(q)
            return snapshot, q

    def unsubscribe(self, session_id: str, q: queue.Queue) -> None:
        subs = self._subscribers.get(session_id, [])
        if q in subs:
            subs.remove(q)

    def _sink(self, session_id: str) -> Optional[Callable[[str, bytes], None]]:
        if self.store is None:
            return None
        return self.store.artifact_sink(session_id)
