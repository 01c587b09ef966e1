"""Serving gateway: chat pipeline, manual review, metrics, event log.

Every request runs clean -> end-model generate -> (sampled) cloud
reference generate + dual-track evaluation -> accept or escalate. An
escalated answer is pseudo-labeled from the cloud reply, queued for
training, and (in sync mode) the cloud reply is what the caller gets.

All state changes append to a line-delimited event log before the
response returns; ``replay_events`` rebuilds the serving metrics from
nothing but that file, and live metrics must match it field for field.
Each serving run owns a fresh log file and queue file.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backends import generate
from .config import EccConfig
from .corpus import clean_text
from .errors import BackendError, EccError, EventLogError, IllegalTransitionError, UnknownRecordError
from .evolution import (
    EvolutionRecord,
    TrainerFn,
    TrainingQueue,
    decide_action,
    escalate,
    make_pseudo_label,
    noop_trainer,
)
from .promptkit import PromptTemplate, render_messages, render_user
from .scoring import ScorerFn, evaluate_response, resolve_scorers

EVENT_KINDS = (
    "received",
    "answered",
    "end_failure",
    "evaluation_unavailable",
    "evaluated",
    "accepted",
    "escalated",
    "escalation_failed",
    "pseudo_labeled",
    "queued",
    "dispatched",
    "feedback",
    "responded",
)


@dataclass(frozen=True)
class ChatRequest:
    session_id: str
    message: str


@dataclass(frozen=True)
class ChatResponse:
    record_id: str
    reply: str
    served_by: str  # "end" | "cloud"
    breakdown: Optional[object]  # ScoreBreakdown when evaluated
    latency_ms: int


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    payload: dict
    ts: float

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "kind": self.kind, "payload": self.payload, "ts": self.ts},
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class Metrics:
    queries: int
    escalations: int
    escalation_rate: float
    mean_final: float
    served_by: dict[str, int]
    queue_depth: int

    def as_dict(self) -> dict:
        return {
            "queries": self.queries,
            "escalations": self.escalations,
            "escalation_rate": self.escalation_rate,
            "mean_final": self.mean_final,
            "served_by": dict(self.served_by),
            "queue_depth": self.queue_depth,
        }


class EventLog:
    """Append-only event sink with gapless sequence numbers and a single
    serialized appender."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._seq = 0

    def append(self, kind: str, payload: dict) -> Event:
        if kind not in EVENT_KINDS:
            raise EventLogError(f"unknown event kind {kind!r}")
        with self._lock:
            self._seq += 1
            event = Event(seq=self._seq, kind=kind, payload=payload, ts=time.time())
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(event.to_json() + "\n")
                fh.flush()
            return event


def iter_events(path: str | Path):
    """Parse a log file, enforcing gapless seq; yields Event objects."""
    p = Path(path)
    if not p.is_file():
        raise EventLogError(f"event log not found: {p}")
    expected = 1
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                record = json.loads(line)
                event = Event(
                    seq=int(record["seq"]),
                    kind=str(record["kind"]),
                    payload=dict(record["payload"]),
                    ts=float(record["ts"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise EventLogError(f"{p}:{lineno}: corrupt event line ({exc})") from exc
            if event.seq != expected:
                raise EventLogError(
                    f"{p}:{lineno}: sequence gap (expected {expected}, got {event.seq})"
                )
            if event.kind not in EVENT_KINDS:
                raise EventLogError(f"{p}:{lineno}: unknown event kind {event.kind!r}")
            expected += 1
            yield event


def replay_events(path: str | Path) -> Metrics:
    """Rebuild serving metrics purely from the event log."""
    queries = 0
    escalations = 0
    final_sum = 0.0
    evaluated = 0
    served_by = {"end": 0, "cloud": 0}
    queued = 0
    dispatched = 0
    for event in iter_events(path):
        if event.kind == "received":
            queries += 1
        elif event.kind == "escalated":
            escalations += 1
        elif event.kind == "evaluated":
            final_sum += float(event.payload["breakdown"]["final"])
            evaluated += 1
        elif event.kind == "responded":
            served_by[event.payload["served_by"]] = (
                served_by.get(event.payload["served_by"], 0) + 1
            )
        elif event.kind == "queued":
            queued += 1
        elif event.kind == "dispatched":
            dispatched += 1
    return Metrics(
        queries=queries,
        escalations=escalations,
        escalation_rate=escalations / queries if queries else 0.0,
        mean_final=final_sum / evaluated if evaluated else 0.0,
        served_by=served_by,
        queue_depth=max(0, queued - dispatched),
    )


def replay_queue_depth(path: str | Path) -> int:
    return replay_events(path).queue_depth


@dataclass
class _LiveCounters:
    queries: int = 0
    escalations: int = 0
    final_sum: float = 0.0
    evaluated: int = 0
    served_by: dict[str, int] = field(default_factory=lambda: {"end": 0, "cloud": 0})


class Gateway:
    """One serving run: owns the records, the event log, and the queue.

    Constructed once per process; handle_chat / handle_feedback are safe
    to call from concurrent request handlers (a coarse lock serializes
    per-record state changes).
    """

    def __init__(
        self,
        cfg: Optional[EccConfig] = None,
        *,
        template: Optional[PromptTemplate] = None,
        sim_scorer: Optional[ScorerFn] = None,
        rel_scorer: Optional[ScorerFn] = None,
        trainer: Optional[TrainerFn] = None,
        rng: Optional[random.Random] = None,
        log_path: Optional[str | Path] = None,
        queue_path: Optional[str | Path] = None,
    ):
        self.cfg = cfg or EccConfig()
        self.template = template or PromptTemplate(preamble=self.cfg.prompt_preamble)
        default_sim, default_rel = resolve_scorers(self.cfg.scorer)
        self.sim_scorer = sim_scorer or default_sim
        self.rel_scorer = rel_scorer or default_rel
        self.trainer = trainer or noop_trainer
        self.rng = rng or random.Random()
        self.log = EventLog(log_path or self.cfg.log_path)
        self.queue = TrainingQueue(queue_path or self.cfg.queue_path)
        self.records: dict[str, EvolutionRecord] = {}
        self._counters = _LiveCounters()
        self._lock = threading.Lock()
        self._next_record = 0

    # -- record bookkeeping -------------------------------------------------

    def _new_record(self, query: str) -> EvolutionRecord:
        with self._lock:
            self._next_record += 1
            record_id = f"r-{self._next_record:06d}"
        record = EvolutionRecord(record_id=record_id, query=query)
        self.records[record_id] = record
        return record

    def get_record(self, record_id: str) -> EvolutionRecord:
        record = self.records.get(record_id)
        if record is None:
            raise UnknownRecordError(f"no record {record_id!r}")
        return record

    # -- chat pipeline ------------------------------------------------------

    def handle_chat(self, req: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        query = clean_text(req.message)
        if not query:
            raise EccError("chat message is empty after cleaning")
        with self._lock:
            self._counters.queries += 1
        record = self._new_record(query)
        self.log.append(
            "received", {"record_id": record.record_id, "session_id": req.session_id, "query": query}
        )

        end_messages = [{"role": "user", "content": render_user(query, self.cfg.generation)}]
        try:
            end_result = generate(self.cfg.end_backend, end_messages, self.cfg.generation)
        except BackendError as exc:
            record.fault = str(exc)
            self.log.append("end_failure", {"record_id": record.record_id, "error": str(exc)})
            raise
        record.end_output = end_result.text
        record.transition("answered")
        self.log.append(
            "answered",
            {
                "record_id": record.record_id,
                "end_output": end_result.text,
                "latency_ms": end_result.latency_ms,
                "backend_id": end_result.backend_id,
            },
        )

        rate = self.cfg.eval.eval_sampling_rate
        sampled = rate >= 1.0 or (rate > 0.0 and self.rng.random() < rate)
        if not sampled:
            return self._respond(record, end_result.text, "end", started)

        try:
            cloud_messages = render_messages(self.template, query, self.cfg.generation)
            cloud_result = generate(self.cfg.cloud_backend, cloud_messages, self.cfg.generation)
        except BackendError as exc:
            record.fault = str(exc)
            self.log.append(
                "evaluation_unavailable", {"record_id": record.record_id, "error": str(exc)}
            )
            return self._respond(record, end_result.text, "end", started)

        breakdown = evaluate_response(
            query,
            end_result.text,
            cloud_result.text,
            self.cfg.eval,
            self.sim_scorer,
            self.rel_scorer,
        )
        record.breakdown = breakdown
        record.transition("evaluated")
        with self._lock:
            self._counters.final_sum += breakdown.final
            self._counters.evaluated += 1
        self.log.append(
            "evaluated", {"record_id": record.record_id, "breakdown": breakdown.as_dict()}
        )

        action = decide_action(breakdown, None, self.cfg.eval.tau)
        if action.kind == "accept":
            record.transition("accepted")
            self.log.append(
                "accepted", {"record_id": record.record_id, "reason": action.reason}
            )
            return self._respond(record, end_result.text, "end", started)

        self._escalate_record(record, action.reason, cloud_text=cloud_result.text)
        if self.cfg.escalation_mode == "sync" and record.escalation_output is not None:
            return self._respond(record, record.escalation_output, "cloud", started)
        return self._respond(record, end_result.text, "end", started)

    def _respond(
        self, record: EvolutionRecord, reply: str, served_by: str, started: float
    ) -> ChatResponse:
        with self._lock:
            self._counters.served_by[served_by] = (
                self._counters.served_by.get(served_by, 0) + 1
            )
        self.log.append(
            "responded",
            {"record_id": record.record_id, "served_by": served_by, "reply": reply},
        )
        return ChatResponse(
            record_id=record.record_id,
            reply=reply,
            served_by=served_by,
            breakdown=record.breakdown,
            latency_ms=max(0, int((time.perf_counter() - started) * 1000)),
        )

    # -- escalation and training path ----------------------------------------

    def _escalate_record(
        self, record: EvolutionRecord, reason: str, cloud_text: Optional[str] = None
    ) -> None:
        """Move a record to escalated and run the pseudo-label chain.

        cloud_text, when given, is the cloud reply already obtained during
        evaluation (one cloud call per request); otherwise the cloud
        backend is asked now.
        """
        record.transition("escalated")
        with self._lock:
            self._counters.escalations += 1
        self.log.append("escalated", {"record_id": record.record_id, "reason": reason})

        if cloud_text is None:
            try:
                result = escalate(
                    record.query, self.cfg.cloud_backend, self.template, self.cfg.generation
                )
                cloud_text = result.text
            except BackendError as exc:
                record.fault = str(exc)
                self.log.append(
                    "escalation_failed", {"record_id": record.record_id, "error": str(exc)}
                )
                return
        record.escalation_output = cloud_text

        try:
            example = make_pseudo_label(record, cloud_text)
        except EccError as exc:
            self.log.append(
                "escalation_failed", {"record_id": record.record_id, "error": str(exc)}
            )
            return
        self.log.append(
            "pseudo_labeled",
            {"record_id": record.record_id, "example": example.export_dict()},
        )
        depth = self.queue.enqueue(example)
        record.transition("queued")
        self.log.append("queued", {"record_id": record.record_id, "depth": depth})
        if depth >= self.cfg.queue_batch_size:
            self.flush_queue(batch_size=self.cfg.queue_batch_size)

    def flush_queue(self, batch_size: Optional[int] = None) -> int:
        """Drain one batch to the trainer; returns the dispatched count."""
        size = batch_size or self.cfg.queue_batch_size
        result = self.queue.drain(size, self.trainer, self.cfg.training)
        for example in result.examples:
            record = self.records.get(example.source_record or "")
            if record is not None and record.state == "queued":
                record.transition("dispatched")
            self.log.append(
                "dispatched",
                {
                    "record_id": example.source_record or "",
                    "job_id": result.job_id or "",
                },
            )
        return result.dispatched

    # -- review and metrics ---------------------------------------------------

    def handle_feedback(self, record_id: str, verdict: str) -> str:
        """Store a manual verdict; dissatisfied re-opens the record through
        the escalation path. Returns the record's new state."""
        record = self.get_record(record_id)
        if record.state not in ("evaluated", "accepted"):
            raise IllegalTransitionError(
                f"record {record_id}: feedback not allowed in state {record.state}"
            )
        record.set_verdict(verdict)
        self.log.append("feedback", {"record_id": record_id, "verdict": verdict})
        if verdict == "satisfied":
            if record.state == "evaluated":
                record.transition("accepted")
                self.log.append(
                    "accepted", {"record_id": record_id, "reason": "human_satisfied_override"}
                )
            return record.state
        self._escalate_record(record, "human_dissatisfied")
        return record.state

    def review_queue(self, page: int = 1, page_size: int = 20) -> tuple[list[EvolutionRecord], int]:
        """Records awaiting a manual verdict, oldest first, paginated."""
        if page < 1 or page_size < 1:
            raise EccError("page and page_size must be >= 1")
        waiting = [
            r
            for r in sorted(self.records.values(), key=lambda r: r.record_id)
            if r.state in ("evaluated", "accepted") and r.human_verdict is None
        ]
        start = (page - 1) * page_size
        return waiting[start : start + page_size], len(waiting)

    def metrics(self) -> Metrics:
        """Live counters; must equal replay_events over this run's log."""
        with self._lock:
            c = self._counters
            return Metrics(
                queries=c.queries,
                escalations=c.escalations,
                escalation_rate=c.escalations / c.queries if c.queries else 0.0,
                mean_final=c.final_sum / c.evaluated if c.evaluated else 0.0,
                served_by=dict(c.served_by),
                queue_depth=self.queue.depth(),
            )
