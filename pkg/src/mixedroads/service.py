"""Live preference-elicitation service.

Serves one active query per session, records the participant's choices,
refreshes the per-user posterior after every answer, and exports pooled
posterior samples in the population format the pricing solver consumes.

Persistence is an append-only JSONL event log per session under the data
directory (env var ELICIT_DATA_DIR, or a constructor argument).  Every state
transition appends its events in a single atomic write, and replaying a log
rebuilds the exact session state because the seeds of all stochastic steps
are stored in the events themselves.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from . import __version__
from .choice import PopulationSamples, RouteOffer, dominated_set, population_jsonl
from .learning import (
    ChoiceDatum,
    MHConfig,
    Prior,
    Query,
    QuerySpace,
    SynthesisConfig,
    random_query,
    sample_posterior,
    synthesize_query,
)

SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class SessionConfig:
    """Elicitation settings for one session."""

    num_samples: int = 100
    budget: int = 10
    n_options: int = 3
    latency_range: tuple[float, float] = (0.5, 4.0)
    price_range: tuple[float, float] = (0.0, 5.0)
    alt_latency: float = 2.0
    synthesis_restarts: int = 40
    mh_thinning: int = 20
    adaptive: bool = True  # False serves seed-determined random menus to everyone

    def __post_init__(self) -> None:
        if self.num_samples < 1:
            raise ValueError("num_samples must be positive")
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if self.synthesis_restarts < 1:
            raise ValueError("synthesis_restarts must be positive")

    def query_space(self) -> QuerySpace:
        return QuerySpace(n_options=self.n_options,
                          latency_range=self.latency_range,
                          price_range=self.price_range,
                          alt_latency=self.alt_latency)

    def to_dict(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "budget": self.budget,
            "n_options": self.n_options,
            "latency_range": list(self.latency_range),
            "price_range": list(self.price_range),
            "alt_latency": self.alt_latency,
            "synthesis_restarts": self.synthesis_restarts,
            "mh_thinning": self.mh_thinning,
            "adaptive": self.adaptive,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionConfig":
        return cls(
            num_samples=int(doc["num_samples"]),
            budget=int(doc["budget"]),
            n_options=int(doc["n_options"]),
            latency_range=tuple(doc["latency_range"]),
            price_range=tuple(doc["price_range"]),
            alt_latency=float(doc["alt_latency"]),
            synthesis_restarts=int(doc["synthesis_restarts"]),
            mh_thinning=int(doc["mh_thinning"]),
            adaptive=bool(doc["adaptive"]),
        )


@dataclass
class PendingQuery:
    query_id: str
    offer: RouteOffer


@dataclass
class Session:
    """In-memory session state, reconstructible from its event log."""

    session_id: str
    user_label: str
    prior: Prior
    config: SessionConfig
    seed: int
    data: list[ChoiceDatum] = field(default_factory=list)
    samples: PopulationSamples | None = None
    pending: PendingQuery | None = None
    seq: int = 0
    created_at: float = 0.0
    updated_at: float = 0.0

    @property
    def answered(self) -> int:
        return len(self.data)

    def posterior_stats(self) -> dict:
        values = self.samples.values
        mean = values.mean(axis=0)
        trace = float(np.cov(values.T).trace()) if values.shape[0] > 1 else 0.0
        return {
            "mean": {"omega1": float(mean[0]), "omega2": float(mean[1]),
                     "zeta": float(mean[2])},
            "trace_covariance": trace,
            "count": int(values.shape[0]),
        }


def _mh_seed(base: int, step: int) -> int:
    return int(np.random.SeedSequence([base, step, 0]).generate_state(1)[0])


def _query_seed(base: int, step: int) -> int:
    return int(np.random.SeedSequence([base, step, 1]).generate_state(1)[0])


class SessionStore:
    """Event-sourced session registry with per-session single-writer locking."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.exports_dir = self.data_dir / "exports"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.exports_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        for log in sorted(self.sessions_dir.glob("*.jsonl")):
            session = self.replay(log.stem)
            self._sessions[session.session_id] = session

    # -- event plumbing ----------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def _append_events(self, session: Session, events: list[dict]) -> None:
        """Append events atomically: one write call, flushed to disk."""
        lines = []
        for event in events:
            session.seq += 1
            lines.append(json.dumps({"seq": session.seq,
                                     "session_id": session.session_id,
                                     **event}, sort_keys=True))
        payload = "".join(line + "\n" for line in lines).encode()
        fd = os.open(self._log_path(session.session_id),
                     os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
        try:
            os.write(fd, payload)
            os.fsync(fd)
        finally:
            os.close(fd)

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def events(self, session_id: str) -> list[dict]:
        path = self._log_path(session_id)
        if not path.exists():
            raise KeyError(session_id)
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    # -- state transitions ---------------------------------------------------

    def _initial_samples(self, prior: Prior, config: SessionConfig,
                         seed: int) -> PopulationSamples:
        rng = np.random.default_rng(seed)
        return PopulationSamples(prior.sample(rng, config.num_samples))

    def _resample(self, session: Session, seed: int) -> PopulationSamples:
        cfg = MHConfig(seed=seed, thinning=session.config.mh_thinning)
        return sample_posterior(session.data, session.prior,
                                session.config.num_samples, cfg)

    def _next_query(self, session: Session, seed: int) -> Query:
        space = session.config.query_space()
        if not session.config.adaptive:
            return random_query(space, np.random.default_rng(seed))
        cfg = SynthesisConfig(restarts=session.config.synthesis_restarts, seed=seed)
        return synthesize_query(session.samples, space, cfg)

    def create_session(self, user_label: str, prior: Prior, config: SessionConfig,
                       seed: int | None) -> Session:
        session_id = uuid.uuid4().hex
        base_seed = int(seed) if seed is not None else int.from_bytes(
            os.urandom(4), "big")
        now = time.time()
        session = Session(session_id=session_id, user_label=user_label,
                          prior=prior, config=config, seed=base_seed,
                          created_at=now, updated_at=now)
        sample_seed = _mh_seed(base_seed, 0)
        session.samples = self._initial_samples(prior, config, sample_seed)
        query_seed = _query_seed(base_seed, 0)
        query = self._next_query(session, query_seed)
        session.pending = PendingQuery(query_id=uuid.uuid4().hex, offer=query.offer)
        self._append_events(session, [
            {"kind": "session-created", "timestamp": now,
             "payload": {"user_label": user_label, "prior": prior.to_dict(),
                         "config": config.to_dict(), "seed": base_seed}},
            {"kind": "posterior-updated", "timestamp": now,
             "payload": {"step": 0, "seed": sample_seed,
                         "count": config.num_samples}},
            {"kind": "query-issued", "timestamp": now,
             "payload": {"step": 0, "seed": query_seed,
                         "query_id": session.pending.query_id,
                         "offer": session.pending.offer.to_dict()}},
        ])
        with self._registry_lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise KeyError(session_id) from None

    def submit_choice(self, session_id: str, query_id: str, chosen: int) -> Session:
        """Record a choice, refresh the posterior, and issue the next query.

        Serialized per session; the pending query id acts as an optimistic
        concurrency token, so exactly one submission per issued query wins.
        """
        session = self.get(session_id)
        with self.lock(session_id):
            if session.pending is None:
                raise StaleQueryError("session has no pending query")
            if session.pending.query_id != query_id:
                raise StaleQueryError("query id is stale or unknown")
            offer = session.pending.offer
            if not 0 <= chosen <= offer.n:
                raise InvalidChoiceError(
                    f"chosen index {chosen} out of range 0..{offer.n}")
            if chosen != 0 and chosen in dominated_set(offer):
                raise InvalidChoiceError(f"option {chosen} is dominated")
            datum = ChoiceDatum(offer=offer, chosen=chosen)
            session.data.append(datum)
            step = session.answered
            now = time.time()
            sample_seed = _mh_seed(session.seed, step)
            session.samples = self._resample(session, sample_seed)
            events = [
                {"kind": "choice-recorded", "timestamp": now,
                 "payload": {"step": step, "query_id": query_id, "chosen": chosen,
                             "offer": offer.to_dict()}},
                {"kind": "posterior-updated", "timestamp": now,
                 "payload": {"step": step, "seed": sample_seed,
                             "count": session.config.num_samples}},
            ]
            if step < session.config.budget:
                query_seed = _query_seed(session.seed, step)
                query = self._next_query(session, query_seed)
                session.pending = PendingQuery(query_id=uuid.uuid4().hex,
                                               offer=query.offer)
                events.append(
                    {"kind": "query-issued", "timestamp": now,
                     "payload": {"step": step, "seed": query_seed,
                                 "query_id": session.pending.query_id,
                                 "offer": session.pending.offer.to_dict()}})
            else:
                session.pending = None
            session.updated_at = now
            self._append_events(session, events)
            return session

    def replay(self, session_id: str) -> Session:
        """Rebuild a session from its event log.

        Stochastic steps rerun with the seeds stored in the events, so the
        rebuilt posterior samples match the live ones exactly.
        """
        events = self.events(session_id)
        session: Session | None = None
        for event in events:
            kind = event["kind"]
            payload = event["payload"]
            if kind == "session-created":
                session = Session(
                    session_id=session_id,
                    user_label=payload["user_label"],
                    prior=Prior.from_dict(payload["prior"]),
                    config=SessionConfig.from_dict(payload["config"]),
                    seed=int(payload["seed"]),
                    created_at=event["timestamp"],
                    updated_at=event["timestamp"],
                )
            elif session is None:
                raise ValueError(f"event log {session_id} does not start with creation")
            elif kind == "choice-recorded":
                offer = RouteOffer.from_dict(payload["offer"])
                session.data.append(ChoiceDatum(offer=offer,
                                                chosen=int(payload["chosen"])))
                session.pending = None
                session.updated_at = event["timestamp"]
            elif kind == "posterior-updated":
                seed = int(payload["seed"])
                if int(payload["step"]) == 0:
                    session.samples = self._initial_samples(
                        session.prior, session.config, seed)
                else:
                    session.samples = self._resample(session, seed)
            elif kind == "query-issued":
                session.pending = PendingQuery(
                    query_id=payload["query_id"],
                    offer=RouteOffer.from_dict(payload["offer"]))
            elif kind == "exported":
                pass
            session.seq = event["seq"]
        if session is None:
            raise ValueError(f"event log {session_id} is empty")
        return session

    def export_population(self, session_ids: list[str]) -> tuple[Path, str]:
        """Pool posterior samples across sessions into population JSONL."""
        if not session_ids:
            raise ValueError("no sessions selected for export")
        stacks = []
        sessions = []
        for sid in session_ids:
            session = self.get(sid)
            stacks.append(session.samples.values)
            sessions.append(session)
        pooled = PopulationSamples(np.vstack(stacks))
        content = population_jsonl(pooled)
        name = f"population_{uuid.uuid4().hex[:12]}.jsonl"
        path = self.exports_dir / name
        path.write_text(content)
        now = time.time()
        for session in sessions:
            with self.lock(session.session_id):
                self._append_events(session, [
                    {"kind": "exported", "timestamp": now,
                     "payload": {"path": str(path),
                                 "sessions": list(session_ids)}}])
        return path, content


class StaleQueryError(ValueError):
    pass


class InvalidChoiceError(ValueError):
    pass


# -- HTTP layer ---------------------------------------------------------------


class SessionConfigBody(BaseModel):
    num_samples: int = 100
    budget: int = 10
    n_options: int = 3
    latency_range: tuple[float, float] = (0.5, 4.0)
    price_range: tuple[float, float] = (0.0, 5.0)
    alt_latency: float = 2.0
    synthesis_restarts: int = 40
    mh_thinning: int = 20
    adaptive: bool = True


class PriorBody(BaseModel):
    lower: tuple[float, float, float] = (0.0, 0.0, 0.0)
    upper: tuple[float, float, float] = (3.0, 3.0, 3.0)


class CreateSessionBody(BaseModel):
    user_label: str
    seed: int | None = None
    config: SessionConfigBody | None = None
    prior: PriorBody | None = None


class ChoiceBody(BaseModel):
    query_id: str
    chosen: int


class ExportBody(BaseModel):
    session_ids: list[str]


def _query_doc(session: Session) -> dict | None:
    if session.pending is None:
        return None
    offer = session.pending.offer
    return {
        "query_id": session.pending.query_id,
        "options": [{"latency": float(l), "price": float(p)}
                    for l, p in zip(offer.latencies, offer.prices)],
        "alt_latency": float(offer.alt_latency),
    }


def _session_doc(session: Session) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": session.session_id,
        "user_label": session.user_label,
        "answered": session.answered,
        "budget": session.config.budget,
        "done": session.pending is None,
        "pending_query": _query_doc(session),
        "posterior": session.posterior_stats(),
    }


def create_app(data_dir: str | Path | None = None,
               static_dir: str | Path | None = None) -> FastAPI:
    """Build the elicitation app.

    ``data_dir`` falls back to the ELICIT_DATA_DIR env var, then ./elicit-data.
    If ``static_dir`` (or ELICIT_STATIC_DIR) points at a built frontend, it is
    served under /app.
    """
    if data_dir is None:
        data_dir = os.environ.get("ELICIT_DATA_DIR", "elicit-data")
    store = SessionStore(data_dir)
    app = FastAPI(title="mixedroads elicitation service", version=__version__)
    app.state.store = store

    @app.get("/health")
    def health() -> dict:
        return {"schema_version": SCHEMA_VERSION, "status": "ok",
                "version": __version__,
                "sessions": len(store._sessions)}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        try:
            config = (SessionConfig(**body.config.model_dump())
                      if body.config else SessionConfig())
            prior = (Prior(lower=body.prior.lower, upper=body.prior.upper)
                     if body.prior else Prior())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session = store.create_session(body.user_label, prior, config, body.seed)
        return _session_doc(session)

    def _get_session(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return _session_doc(_get_session(session_id))

    @app.get("/sessions/{session_id}/query")
    def get_query(session_id: str) -> dict:
        session = _get_session(session_id)
        doc = {
            "schema_version": SCHEMA_VERSION,
            "session_id": session.session_id,
            "done": session.pending is None,
            "progress": {"answered": session.answered,
                         "budget": session.config.budget},
        }
        query = _query_doc(session)
        if query is not None:
            doc.update(query)
        else:
            doc["query_id"] = None
        return doc

    @app.post("/sessions/{session_id}/choice")
    def post_choice(session_id: str, body: ChoiceBody) -> dict:
        _get_session(session_id)
        try:
            session = store.submit_choice(session_id, body.query_id, body.chosen)
        except StaleQueryError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except InvalidChoiceError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _session_doc(session)

    @app.get("/sessions/{session_id}/posterior")
    def get_posterior(session_id: str) -> dict:
        session = _get_session(session_id)
        doc = {"schema_version": SCHEMA_VERSION,
               "session_id": session.session_id}
        doc.update(session.posterior_stats())
        doc["download"] = f"/sessions/{session_id}/posterior.jsonl"
        return doc

    @app.get("/sessions/{session_id}/posterior.jsonl",
             response_class=PlainTextResponse)
    def get_posterior_samples(session_id: str) -> str:
        session = _get_session(session_id)
        return population_jsonl(session.samples)

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str) -> dict:
        _get_session(session_id)
        return {"schema_version": SCHEMA_VERSION,
                "events": store.events(session_id)}

    @app.post("/export")
    def export(body: ExportBody) -> dict:
        try:
            path, content = store.export_population(body.session_ids)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"export failed: {exc}")
        return {"schema_version": SCHEMA_VERSION,
                "path": str(path),
                "count": len(content.strip().splitlines()),
                "population_jsonl": content}

    if static_dir is None:
        static_dir = os.environ.get("ELICIT_STATIC_DIR")
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/app", StaticFiles(directory=str(static_dir), html=True),
                  name="frontend")

    return app
