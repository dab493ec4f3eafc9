"""HTTP boundary of the CI server: hook intake, the remote lever, and read-only views.

Request handlers never touch project state directly; they hand events to a
lock-guarded dispatcher that owns the orchestrator states, executes builds,
and appends history. Desk-scale by design: no auth, loopback by default.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from buildherd import codec
from buildherd.clock import Clock, SystemClock
from buildherd.errors import RepositoryUnreachableError, UnknownProjectError
from buildherd.history import HistoryStore
from buildherd.model import TriggerPolicy, classify, validate_policy
from buildherd.orchestrator import (
    BuildFinished,
    ClockAdvanced,
    CommandReceived,
    Event,
    HookReceived,
    ProjectState,
    Rejected,
    RecordRun,
    StartBuild,
    initial_state,
    step,
)
from buildherd.pipeline import BuildDefinition, run_pipeline, validate_definition
from buildherd.triggers import HookNotification
from buildherd.vcs import DirectoryHashRepository, InMemoryRepository, Repository


@dataclass(frozen=True)
class ProjectConfig:
    project_id: str
    repo_id: str
    repo_kind: str  # "in_memory" | "directory"
    repo_root: Optional[Path]
    repo_manifest: Optional[Path]
    policy: TriggerPolicy
    definition: BuildDefinition


@dataclass(frozen=True)
class ServiceConfig:
    listen_host: str
    listen_port: int
    history_file: Path
    projects: tuple[ProjectConfig, ...]


def load_config(path: Path | str) -> ServiceConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    listen = doc.get("listen", "127.0.0.1:8642")
    host, _, port = listen.rpartition(":")
    projects = []
    seen_ids: set[str] = set()
    for project in doc.get("projects", []):
        project_id = project["id"]
        if project_id in seen_ids:
            raise ValueError(f"duplicate project id {project_id}")
        seen_ids.add(project_id)
        policy = codec.policy_from_json(project["policy"])
        violations = validate_policy(policy)
        if violations:
            raise ValueError(f"project {project_id}: invalid policy: {violations}")
        definition = codec.definition_from_json(project_id, project["pipeline"])
        violations = validate_definition(definition)
        if violations:
            raise ValueError(f"project {project_id}: invalid pipeline: {violations}")
        repo = project["repo"]
        if "in_memory" in repo:
            kind, root, manifest = "in_memory", None, None
        elif "directory" in repo:
            kind = "directory"
            root = Path(repo["directory"]["root"])
            manifest = Path(repo["directory"]["manifest"])
        else:
            raise ValueError(f"project {project_id}: repo needs 'in_memory' or 'directory'")
        projects.append(
            ProjectConfig(
                project_id=project_id,
                repo_id=repo.get("id", project_id),
                repo_kind=kind,
                repo_root=root,
                repo_manifest=manifest,
                policy=policy,
                definition=definition,
            )
        )
    return ServiceConfig(
        listen_host=host or "127.0.0.1",
        listen_port=int(port),
        history_file=Path(doc["history_file"]),
        projects=tuple(projects),
    )


class BuildherdServer:
    """Owns orchestrator state for every configured project behind one lock."""

    def __init__(self, config: ServiceConfig, clock: Optional[Clock] = None) -> None:
        self.config = config
        self.clock: Clock = clock if clock is not None else SystemClock()
        self.history = HistoryStore(config.history_file)
        self._lock = threading.Lock()
        self._next_run_id = 1
        self._states: dict[str, ProjectState] = {}
        self._repos: dict[str, Repository] = {}
        self._seen_nonces: dict[str, set[str]] = {}
        start = self.clock.now_ms()
        for project in config.projects:
            repo: Repository
            if project.repo_kind == "in_memory":
                repo = InMemoryRepository(project.repo_id)
            else:
                assert project.repo_root is not None and project.repo_manifest is not None
                repo = DirectoryHashRepository(
                    project.repo_id, project.repo_root, project.repo_manifest
                )
            self._repos[project.repo_id] = repo
            self._states[project.project_id] = initial_state(
                project.project_id, project.policy, project.definition, repo, start_ms=start
            )
            self._seen_nonces[project.repo_id] = set()

    # -------------------------------------------------------------- core

    def _dispatch(self, project_id: str, event: Event) -> list[Any]:
        """Apply an event, run any started builds to completion, collect actions."""
        collected: list[Any] = []
        state = self._states[project_id]
        events = [event]
        while events:
            state, actions = step(state, events.pop(0))
            for action in actions:
                collected.append(action)
                if isinstance(action, StartBuild):
                    run = run_pipeline(
                        state.definition,
                        action.request,
                        self._next_run_id,
                        clock=self.clock,
                        workspace=None,
                    )
                    self._next_run_id += 1
                    events.append(BuildFinished(run))
                elif isinstance(action, RecordRun):
                    self.history.append(action.run)
        self._states[project_id] = state
        return collected

    # -------------------------------------------------------------- entry points

    def command_build(self, project_id: str, actor: str) -> dict[str, Any]:
        with self._lock:
            if project_id not in self._states:
                raise UnknownProjectError(f"unknown project {project_id}")
            now = self.clock.now_ms()
            actions = self._dispatch(project_id, CommandReceived(actor, project_id, now))
            for action in actions:
                if isinstance(action, Rejected):
                    raise RepositoryUnreachableError(action.reason)
            return {"project": project_id, "cause": "commanded", "actor": actor, "accepted_at": now}

    def receive_hook(
        self, repo_id: str, nonce: str, claimed_revision: Optional[dict[str, Any]] = None
    ) -> dict[str, Any]:
        with self._lock:
            if repo_id not in self._repos:
                raise KeyError(repo_id)
            duplicate = nonce in self._seen_nonces[repo_id]
            self._seen_nonces[repo_id].add(nonce)
            now = self.clock.now_ms()
            revision = codec.revision_from_json(claimed_revision) if claimed_revision else None
            notification = HookNotification(
                repo_id=repo_id, received_at=now, claimed_revision=revision, nonce=nonce
            )
            for project_id, state in list(self._states.items()):
                if state.repo.repo_id == repo_id:
                    self._dispatch(project_id, HookReceived(notification))
            return {"accepted": True, "duplicate": duplicate}

    def tick(self, now_ms: Optional[int] = None) -> None:
        """Advance the clock for every project; called by the ticker thread."""
        with self._lock:
            now = now_ms if now_ms is not None else self.clock.now_ms()
            for project_id in list(self._states):
                self._dispatch(project_id, ClockAdvanced(now))

    def status(self, project_id: str) -> dict[str, Any]:
        with self._lock:
            state = self._states.get(project_id)
            if state is None:
                raise UnknownProjectError(f"unknown project {project_id}")
            label = classify(state.policy)
            pending = len(state.coalescer.pending) if state.coalescer else 0
            runs = self.history.query(project=project_id)
            last = codec.run_to_json(runs[-1]) if runs else None
            return {
                "project": project_id,
                "classification": {
                    "mode": label.mode.value,
                    "maturity": label.maturity.value if label.maturity else None,
                    "trigger_kind": label.trigger_kind.value if label.trigger_kind else None,
                },
                "queue_depth": len(state.queue) + pending,
                "running": state.running is not None,
                "last_run": last,
            }

    def runs(self, project_id: str, outcome: Optional[str] = None) -> list[dict[str, Any]]:
        with self._lock:
            if project_id not in self._states:
                raise UnknownProjectError(f"unknown project {project_id}")
            return [
                codec.run_to_json(run)
                for run in self.history.query(project=project_id, outcome=outcome)
            ]

    def repo(self, repo_id: str) -> Repository:
        return self._repos[repo_id]


def create_app(server: BuildherdServer) -> FastAPI:
    app = FastAPI(title="buildherd")

    @app.get("/health")
    def health() -> dict[str, bool]:
        return {"ok": True}

    @app.post("/hooks/{repo_id}")
    async def hook(repo_id: str, request: Request) -> JSONResponse:
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse({"error": "malformed JSON body"}, status_code=400)
        if not isinstance(body, dict) or "nonce" not in body:
            return JSONResponse({"error": "hook body needs a nonce"}, status_code=400)
        if body.get("repo") is not None and body["repo"] != repo_id:
            return JSONResponse({"error": "repo mismatch"}, status_code=400)
        try:
            result = server.receive_hook(repo_id, body["nonce"], body.get("revision"))
        except KeyError:
            return JSONResponse({"error": f"unknown repo {repo_id}"}, status_code=404)
        return JSONResponse(result, status_code=202)

    @app.post("/projects/{project_id}/build")
    async def build(project_id: str, request: Request) -> JSONResponse:
        raw = await request.body()
        actor = "anonymous"
        if raw:
            try:
                body = json.loads(raw)
            except json.JSONDecodeError:
                return JSONResponse({"error": "malformed JSON body"}, status_code=400)
            if not isinstance(body, dict):
                return JSONResponse({"error": "body must be an object"}, status_code=400)
            actor = body.get("actor", actor)
        try:
            receipt = server.command_build(project_id, actor)
        except UnknownProjectError:
            return JSONResponse({"error": f"unknown project {project_id}"}, status_code=404)
        except RepositoryUnreachableError as exc:
            return JSONResponse({"error": str(exc)}, status_code=503)
        return JSONResponse(receipt, status_code=202)

    @app.get("/projects/{project_id}/status")
    def project_status(project_id: str) -> JSONResponse:
        try:
            return JSONResponse(server.status(project_id))
        except UnknownProjectError:
            return JSONResponse({"error": f"unknown project {project_id}"}, status_code=404)

    @app.get("/projects/{project_id}/runs")
    def project_runs(project_id: str, outcome: Optional[str] = None) -> JSONResponse:
        try:
            return JSONResponse({"runs": server.runs(project_id, outcome)})
        except UnknownProjectError:
            return JSONResponse({"error": f"unknown project {project_id}"}, status_code=404)

    return app


def serve_forever(config: ServiceConfig, tick_interval_s: float = 0.2) -> None:
    """Run the HTTP server with a background ticker driving polls and schedules."""
    import uvicorn

    server = BuildherdServer(config)
    app = create_app(server)
    stop = threading.Event()

    def ticker() -> None:
        while not stop.is_set():
            server.tick()
            stop.wait(tick_interval_s)

    thread = threading.Thread(target=ticker, name="buildherd-ticker", daemon=True)
    thread.start()
    try:
        uvicorn.run(app, host=config.listen_host, port=config.listen_port, log_level="warning")
    finally:
        stop.set()
        thread.join(timeout=2.0)
