"""Command-line entry points: run a full session, resume a failed one, export
reports and plot data, or serve the HTTP API.

Exit codes: 0 success, 2 validation/configuration error, 3 provider failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional

from .engine import Engine
from .model import MidasError, Phase, SessionConfig, ValidationError
from .orchestrator import HumanApproval
from .persistence import SessionStore, StoreError, export_report
from .providers import (
    HashingEmbedder,
    ProviderError,
    ProviderBinding,
    ScriptedTranscript,
    http_provider_set,
    scripted_provider_set,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROVIDER = 3


def load_config_file(path: Optional[str]) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file is not valid JSON: {exc}") from exc


def session_config_from(doc: dict[str, Any], headless: bool) -> SessionConfig:
    config = SessionConfig.from_dict(doc.get("session", {}))
    if headless:
        config.auto_approve = True
    return config


def load_problem_file(path: str) -> dict[str, Any]:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"problem file not found: {path}")
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        doc = json.loads(text)
        if "problem_text" not in doc:
            raise ValidationError("problem JSON must contain problem_text")
        return doc
    return {"problem_text": text.strip()}


def build_provider_factory(doc: dict[str, Any], transcript_path: Optional[str]):
    providers_doc = doc.get("providers", {})
    bindings = {
        role: ProviderBinding.from_dict(raw)
        for role, raw in providers_doc.get("bindings", {}).items()
    }
    mode = providers_doc.get("mode", "http")
    if transcript_path is not None:
        transcript = ScriptedTranscript.from_file(transcript_path)
        return lambda session: scripted_provider_set(
            transcript,
            embedder=HashingEmbedder(),
            bindings=bindings,
            rng_seed=session.seed,
        )
    if mode == "http":
        return lambda session: http_provider_set(bindings, rng_seed=session.seed)
    raise ValidationError(
        f"provider mode {mode!r} needs a --transcript file or mode 'http' with bindings"
    )


def _interactive_approval(phase: str) -> Optional[HumanApproval]:
    answer = input(f"approve gate after {phase}? [y/N] ").strip().lower()
    if answer in ("y", "yes"):
        return HumanApproval(approved_by="cli-user")
    return None


def cmd_run(args: argparse.Namespace) -> int:
    store = SessionStore(args.store)
    if args.demo:
        from . import demo

        engine, session = demo.run_ps1(store=store, seed=args.seed)
        report = export_report(session, "json")
        out = Path(args.out) if args.out else store.session_dir(session.id) / "report.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, indent=2), encoding="utf-8")
        print(f"demo session {session.id} complete; report written to {out}")
        return EXIT_OK

    if not args.problem:
        raise ValidationError("run requires --problem <file> (or --demo ps1)")
    config_doc = load_config_file(args.config)
    problem_doc = load_problem_file(args.problem)
    config = session_config_from(config_doc, args.headless)
    factory = build_provider_factory(config_doc, args.transcript)
    engine = Engine(provider_factory=factory, store=store)
    session = engine.create_session(problem_doc["problem_text"], config, args.seed)
    sid = session.id

    engine.submit_problem(sid)
    if not config.auto_approve:
        approval = _interactive_approval("definition")
        if approval is None:
            print("gate declined; session saved", file=sys.stderr)
            return EXIT_OK
        engine.advance(sid, approval)
    else:
        engine.advance(sid)
    for idea_text in problem_doc.get("muse_ideas", []):
        engine.submit_idea(sid, idea_text)
    manual = problem_doc.get("manual_literature", [])
    if manual:
        engine.submit_literature(sid, manual)
    while engine.get(sid).phase != Phase.DONE:
        session = engine.get(sid)
        if session.phase_failed:
            raise ProviderError(f"phase {session.phase.value} failed; resume with 'midas resume'")
        approval = None
        from . import orchestrator

        if orchestrator.is_gate_waiting(session) and not config.auto_approve:
            approval = _interactive_approval(session.phase.value)
            if approval is None:
                print("gate declined; session saved", file=sys.stderr)
                return EXIT_OK
        engine.advance(sid, approval)

    report = export_report(engine.get(sid), "json")
    out = Path(args.out) if args.out else store.session_dir(sid) / "report.json"
    out.write_text(json.dumps(report, indent=2), encoding="utf-8")
    print(f"session {sid} complete; report written to {out}")
    return EXIT_OK


def cmd_resume(args: argparse.Namespace) -> int:
    store = SessionStore(args.store)
    config_doc = load_config_file(args.config)
    factory = build_provider_factory(config_doc, args.transcript)
    engine = Engine(provider_factory=factory, store=store)
    session = engine.load_from_store(args.session)
    sid = session.id
    if session.config.auto_approve or args.headless:
        session.config.auto_approve = True
        engine.run_to_completion(sid)
    else:
        engine.advance(sid)
    print(f"session {sid} now in phase {engine.get(sid).phase.value}")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    store = SessionStore(args.store)
    session = store.load_session(args.session)
    document = export_report(session, args.format)
    rendered = document if isinstance(document, str) else json.dumps(document, indent=2)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(rendered)
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    store = SessionStore(args.store)
    session = store.load_session(args.session)
    document = export_report(session, "plot-data")
    rendered = json.dumps(document, indent=2)
    Path(args.out).write_text(rendered, encoding="utf-8")
    print(f"plot data written to {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from .gateway import serve

    store = SessionStore(args.store)
    config_doc = load_config_file(args.config)
    if args.demo:
        from . import demo

        engine, session = demo.run_ps1(store=store, seed=args.seed)
        print(f"demo session {session.id} preloaded")
    else:
        factory = build_provider_factory(config_doc, args.transcript)
        engine = Engine(provider_factory=factory, store=store)
        for sid in store.list_sessions():
            engine.load_from_store(sid)
    serve(engine, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="midas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a full ideation session")
    run.add_argument("--problem", help="problem statement file (.txt or .json)")
    run.add_argument("--config", help="engine config file (JSON)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--store", default="./midas-sessions")
    run.add_argument("--headless", action="store_true", help="auto-approve phase gates")
    run.add_argument("--transcript", help="scripted provider transcript (JSON)")
    run.add_argument("--demo", choices=["ps1"], help="run the bundled demo session")
    run.add_argument("--out", help="report output path")
    run.set_defaults(func=cmd_run)

    resume = sub.add_parser("resume", help="resume a stored session")
    resume.add_argument("--session", required=True)
    resume.add_argument("--store", default="./midas-sessions")
    resume.add_argument("--config", help="engine config file (JSON)")
    resume.add_argument("--transcript", help="scripted provider transcript (JSON)")
    resume.add_argument("--headless", action="store_true")
    resume.set_defaults(func=cmd_resume)

    export = sub.add_parser("export", help="export a session report")
    export.add_argument("--session", required=True)
    export.add_argument("--store", default="./midas-sessions")
    export.add_argument("--format", choices=["json", "markdown", "plot-data"], default="json")
    export.add_argument("--out")
    export.set_defaults(func=cmd_export)

    plot = sub.add_parser("plot", help="write cluster plot data for a session")
    plot.add_argument("--session", required=True)
    plot.add_argument("--store", default="./midas-sessions")
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plot)

    serve_cmd = sub.add_parser("serve", help="serve the HTTP API")
    serve_cmd.add_argument("--store", default="./midas-sessions")
    serve_cmd.add_argument("--config", help="engine config file (JSON)")
    serve_cmd.add_argument("--transcript", help="scripted provider transcript (JSON)")
    serve_cmd.add_argument("--demo", action="store_true", help="preload the bundled demo session")
    serve_cmd.add_argument("--seed", type=int, default=1)
    serve_cmd.add_argument("--host", default="127.0.0.1")
    serve_cmd.add_argument("--port", type=int, default=8400)
    serve_cmd.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ProviderError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ValidationError, StoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MidasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
