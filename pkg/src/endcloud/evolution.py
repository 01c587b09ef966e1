"""Online evolutive learning loop.

Every answered query carries an EvolutionRecord through a fixed state
machine. Low-scoring or human-rejected answers escalate to the cloud
model, whose reply becomes a pseudo-label training example; examples
accumulate in a durable on-disk queue and are handed to a trainer in
batches.

States and edges::

    received -> answered -> evaluated -> accepted
                   |            |           |
                   v            v           v  (human dissatisfied)
                escalated <-----+-----------+
                   |
                   v
            pseudo_labeled -> queued -> dispatched

The answered->escalated edge covers runs where evaluation is skipped or
unavailable; accepted->escalated re-opens a record on a dissatisfied
human verdict.

Durability: the queue is an append-only record file plus a consumer
offset file; enqueue persists before acknowledging, drain advances the
offset only after the trainer accepts the batch (at-least-once delivery;
the file sink dedupes repeats by (query, output) at export).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .backends import GenerationResult, generate
from .config import BackendConfig, GenerationParams, TrainingJobSpec
from .corpus import clean_text
from .errors import EccError, IllegalTransitionError
from .promptkit import PromptTemplate, render_messages
from .scoring import ScoreBreakdown, breakdown_from_dict

STATES = (
    "received",
    "answered",
    "evaluated",
    "accepted",
    "escalated",
    "pseudo_labeled",
    "queued",
    "dispatched",
)

ALLOWED_EDGES = frozenset(
    {
        ("received", "answered"),
        ("answered", "evaluated"),
        ("answered", "escalated"),
        ("evaluated", "accepted"),
        ("evaluated", "escalated"),
        ("accepted", "escalated"),
        ("escalated", "pseudo_labeled"),
        ("pseudo_labeled", "queued"),
        ("queued", "dispatched"),
    }
)

VERDICTS = ("satisfied", "dissatisfied")

# States at or past evaluation; a human verdict may only exist here.
_VERDICT_STATES = frozenset(STATES[2:])


@dataclass
class EvolutionRecord:
    record_id: str
    query: str
    end_output: str = ""
    breakdown: Optional[ScoreBreakdown] = None
    human_verdict: Optional[str] = None
    state: str = "received"
    timestamps: dict[str, float] = field(default_factory=dict)
    fault: Optional[str] = None
    escalation_output: Optional[str] = None

    def __post_init__(self) -> None:
        if self.state not in STATES:
            raise IllegalTransitionError(f"unknown state {self.state!r}")
        self.timestamps.setdefault(self.state, time.time())

    def transition(self, new_state: str, ts: Optional[float] = None) -> None:
        if new_state not in STATES:
            raise IllegalTransitionError(f"unknown state {new_state!r}")
        if (self.state, new_state) not in ALLOWED_EDGES:
            raise IllegalTransitionError(
                f"record {self.record_id}: illegal transition {self.state} -> {new_state}"
            )
        self.state = new_state
        self.timestamps[new_state] = time.time() if ts is None else ts

    def set_verdict(self, verdict: str) -> None:
        if verdict not in VERDICTS:
            raise EccError(f"unknown verdict {verdict!r}; expected one of {VERDICTS}")
        if self.state not in _VERDICT_STATES:
            raise IllegalTransitionError(
                f"record {self.record_id}: verdict not allowed in state {self.state}"
            )
        self.human_verdict = verdict

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "query": self.query,
            "end_output": self.end_output,
            "breakdown": self.breakdown.as_dict() if self.breakdown else None,
            "human_verdict": self.human_verdict,
            "state": self.state,
            "timestamps": dict(self.timestamps),
            "fault": self.fault,
            "escalation_output": self.escalation_output,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "EvolutionRecord":
        breakdown = record.get("breakdown")
        return cls(
            record_id=record["record_id"],
            query=record["query"],
            end_output=record.get("end_output", ""),
            breakdown=breakdown_from_dict(breakdown) if breakdown else None,
            human_verdict=record.get("human_verdict"),
            state=record.get("state", "received"),
            timestamps=dict(record.get("timestamps", {})),
            fault=record.get("fault"),
            escalation_output=record.get("escalation_output"),
        )


@dataclass(frozen=True)
class TrainingExample:
    query: str
    output: str
    origin: str  # "cloud_pseudo_label" | "corpus"
    source_record: Optional[str] = None
    created_at: float = field(default_factory=time.time)

    def __post_init__(self) -> None:
        if self.origin not in ("cloud_pseudo_label", "corpus"):
            raise EccError(f"unknown training-example origin {self.origin!r}")
        if not self.query.strip() or not self.output.strip():
            raise EccError("training example query and output must be nonempty")

    def export_dict(self) -> dict:
        return {
            "query": self.query,
            "output": self.output,
            "origin": self.origin,
            "source_record": self.source_record or "",
        }


@dataclass(frozen=True)
class Action:
    kind: str  # "accept" | "escalate"
    reason: str  # "score_below_tau" | "human_dissatisfied" | "score_ok" | "human_satisfied_override"

    def __post_init__(self) -> None:
        consistent = {
            "accept": ("score_ok", "human_satisfied_override"),
            "escalate": ("score_below_tau", "human_dissatisfied"),
        }
        if self.kind not in consistent or self.reason not in consistent[self.kind]:
            raise EccError(f"inconsistent action {self.kind!r}/{self.reason!r}")


def decide_action(
    breakdown: ScoreBreakdown, human_verdict: Optional[str], tau: float
) -> Action:
    """Human verdict wins in both directions; otherwise escalate iff the
    final score is strictly below tau."""
    if human_verdict == "dissatisfied":
        return Action(kind="escalate", reason="human_dissatisfied")
    if human_verdict == "satisfied":
        return Action(kind="accept", reason="human_satisfied_override")
    if breakdown.final < tau:
        return Action(kind="escalate", reason="score_below_tau")
    return Action(kind="accept", reason="score_ok")


def escalate(
    query: str,
    cloud: BackendConfig,
    template: PromptTemplate,
    params: Optional[GenerationParams] = None,
) -> GenerationResult:
    """Ask the cloud model to answer the query with the role-play few-shot
    prompt. The caller owns the record transition and fault annotation."""
    if not clean_text(query):
        raise EccError("cannot escalate an empty query")
    messages = render_messages(template, query, params)
    return generate(cloud, messages, params)


def make_pseudo_label(record: EvolutionRecord, cloud_text: str) -> TrainingExample:
    """Turn an escalated record plus the cloud answer into a training
    example; the record moves to pseudo_labeled."""
    if record.state != "escalated":
        raise IllegalTransitionError(
            f"record {record.record_id}: pseudo-label requires state escalated, is {record.state}"
        )
    output = clean_text(cloud_text)
    if not output:
        record.fault = "empty cloud text; no pseudo-label"
        raise EccError(f"record {record.record_id}: cloud text is empty after cleaning")
    example = TrainingExample(
        query=record.query,
        output=output,
        origin="cloud_pseudo_label",
        source_record=record.record_id,
    )
    record.transition("pseudo_labeled")
    return example


def example_to_json(example: TrainingExample) -> str:
    return json.dumps(example.export_dict(), ensure_ascii=False)


def example_from_json(line: str) -> TrainingExample:
    record = json.loads(line)
    return TrainingExample(
        query=record["query"],
        output=record["output"],
        origin=record["origin"],
        source_record=record.get("source_record") or None,
        created_at=float(record.get("created_at", 0.0)) or time.time(),
    )


TrainerFn = Callable[[TrainingJobSpec, Path], str]


def noop_trainer(spec: TrainingJobSpec, batch_path: Path) -> str:
    """Counts the batch and does nothing else."""
    with Path(batch_path).open("r", encoding="utf-8") as fh:
        count = sum(1 for line in fh if line.strip())
    return f"noop-{count}"


@dataclass
class FileSinkTrainer:
    """Appends each batch to one growing training-set file, skipping
    (query, output) pairs the file already holds."""

    out_path: Path
    jobs: int = 0

    def __post_init__(self) -> None:
        self.out_path = Path(self.out_path)

    @staticmethod
    def _pair_hash(query: str, output: str) -> str:
        return hashlib.sha256(f"{query}\x00{output}".encode("utf-8")).hexdigest()

    def _existing_hashes(self) -> set[str]:
        seen: set[str] = set()
        if self.out_path.is_file():
            with self.out_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    seen.add(self._pair_hash(record["query"], record["output"]))
        return seen

    def __call__(self, spec: TrainingJobSpec, batch_path: Path) -> str:
        seen = self._existing_hashes()
        appended = 0
        self.out_path.parent.mkdir(parents=True, exist_ok=True)
        with Path(batch_path).open("r", encoding="utf-8") as src, self.out_path.open(
            "a", encoding="utf-8"
        ) as dst:
            for line in src:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                key = self._pair_hash(record["query"], record["output"])
                if key in seen:
                    continue
                seen.add(key)
                dst.write(line + "\n")
                appended += 1
            dst.flush()
            os.fsync(dst.fileno())
        self.jobs += 1
        return f"file-sink-{self.jobs}:{self.out_path.name}:+{appended}"


def _make_file_sink(arg: str) -> TrainerFn:
    if not arg:
        raise EccError('file-sink trainer needs a path: "file-sink:<path>"')
    return FileSinkTrainer(Path(arg))


_TRAINERS: dict[str, Callable[[str], TrainerFn]] = {
    "noop": lambda arg: noop_trainer,
    "file-sink": _make_file_sink,
}


def resolve_trainer(name: str) -> TrainerFn:
    """Trainer lookup for the CLI: "noop" or "file-sink:<path>"."""
    kind, _, arg = name.partition(":")
    if kind not in _TRAINERS:
        raise EccError(f"unknown trainer {name!r}; known: {sorted(_TRAINERS)}")
    return _TRAINERS[kind](arg)


@dataclass
class DrainResult:
    dispatched: int
    examples: list[TrainingExample]
    job_id: Optional[str]


class TrainingQueue:
    """Durable FIFO of training examples.

    The queue file accumulates one JSON record per enqueue and is never
    rewritten; a sidecar offset file records how many head records have
    been consumed. Restarting from the two files loses nothing.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.offset_path = self.path.with_name(self.path.name + ".offset")
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def _read_offset(self) -> int:
        if not self.offset_path.is_file():
            return 0
        text = self.offset_path.read_text(encoding="utf-8").strip()
        return int(text) if text else 0

    def _write_offset(self, value: int) -> None:
        fd, tmp = tempfile.mkstemp(dir=str(self.path.parent), prefix=".offset-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(str(value))
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.offset_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _read_all(self) -> list[dict]:
        if not self.path.is_file():
            return []
        records = []
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return records

    def depth(self) -> int:
        return max(0, len(self._read_all()) - self._read_offset())

    def pending(self) -> list[TrainingExample]:
        records = self._read_all()[self._read_offset() :]
        return [example_from_json(json.dumps(r)) for r in records]

    def enqueue(self, example: TrainingExample) -> int:
        """Append one example; returns the new depth. The record is on
        disk before this returns."""
        record = example.export_dict()
        record["created_at"] = example.created_at
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        return self.depth()

    def drain(
        self, batch_size: int, trainer: TrainerFn, spec: Optional[TrainingJobSpec] = None
    ) -> DrainResult:
        """Hand up to batch_size oldest examples to the trainer.

        The offset advances only after the trainer returns, so a trainer
        fault leaves the batch at the queue head (at-least-once).
        """
        if batch_size < 1:
            raise EccError(f"batch_size must be >= 1, got {batch_size}")
        spec = spec or TrainingJobSpec()
        offset = self._read_offset()
        records = self._read_all()
        batch = records[offset : offset + batch_size]
        if not batch:
            return DrainResult(dispatched=0, examples=[], job_id=None)
        examples = [example_from_json(json.dumps(r)) for r in batch]
        fd, tmp = tempfile.mkstemp(
            dir=str(self.path.parent), prefix=".batch-", suffix=".jsonl"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                for example in examples:
                    fh.write(example_to_json(example) + "\n")
            job_id = trainer(spec, Path(tmp))
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        self._write_offset(offset + len(batch))
        return DrainResult(dispatched=len(batch), examples=examples, job_id=job_id)
