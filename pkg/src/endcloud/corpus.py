"""E-commerce dialogue corpus ingestion and session-response extraction.

Three input layouts are supported:

- ``jsonl_generic`` (canonical): one session per line,
  ``{"session_id": "...", "source": "...", "turns": [{"role": "customer"|"agent", "text": "..."}]}``
- ``ecd``: tab-separated, one session-response line:
  ``label\\tutterance\\t...\\tresponse`` with utterances alternating
  customer/agent starting with the customer; only ``label == 1`` rows are
  kept (0 marks a negative-sampled response).
- ``jddc``: tab-separated turn rows ``session_id\\trole\\ttext`` with rows
  of one session contiguous; role accepts customer/agent aliases
  (``Q``/``A``, ``user``/``service``, ``0``/``1``).

Pair export format (one per line, UTF-8):
``{"pair_id": "...", "context": ["..."], "response": "..."}`` where the
context texts alternate roles and end with a customer turn.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import CorpusError

CORPUS_FORMATS = ("ecd", "jddc", "jsonl_generic")
SESSION_SOURCES = ("ecd", "jddc", "generated", "live")

_WS_RUN = re.compile(r"\s+")

_ROLE_ALIASES = {
    "customer": "customer",
    "agent": "agent",
    "q": "customer",
    "a": "agent",
    "user": "customer",
    "service": "agent",
    "0": "customer",
    "1": "agent",
}


def clean_text(raw: str) -> str:
    """Normalize one utterance: drop non-whitespace control characters,
    collapse whitespace runs to single spaces, strip, then compose (NFC).

    Idempotent: clean_text(clean_text(x)) == clean_text(x).
    """
    no_ctrl = "".join(
        ch for ch in raw if not (unicodedata.category(ch) == "Cc" and not ch.isspace())
    )
    collapsed = _WS_RUN.sub(" ", no_ctrl).strip()
    return unicodedata.normalize("NFC", collapsed)


@dataclass(frozen=True)
class Turn:
    role: str  # "customer" | "agent"
    text: str
    index: int


@dataclass(frozen=True)
class DialogueSession:
    session_id: str
    turns: tuple[Turn, ...]
    source: str = "generated"


@dataclass(frozen=True)
class SessionResponsePair:
    """One (context, agent reply) unit; the context ends with a customer turn."""

    context: tuple[Turn, ...]
    response: str
    pair_id: str


@dataclass
class CorpusStats:
    sessions: int = 0
    pairs: int = 0
    dropped: int = 0
    dropped_reasons: dict[str, int] = field(default_factory=dict)
    total_turns: int = 0

    def drop(self, reason: str) -> None:
        self.dropped += 1
        self.dropped_reasons[reason] = self.dropped_reasons.get(reason, 0) + 1

    @property
    def mean_turns_per_session(self) -> float:
        return self.total_turns / self.sessions if self.sessions else 0.0

    def as_dict(self) -> dict:
        return {
            "sessions": self.sessions,
            "pairs": self.pairs,
            "dropped": self.dropped,
            "dropped_reasons": dict(sorted(self.dropped_reasons.items())),
            "mean_turns_per_session": self.mean_turns_per_session,
        }


def _normalize_turns(raw_turns: Iterable[tuple[str, str]]) -> Optional[list[Turn]]:
    """Clean texts and merge consecutive same-role turns.

    Returns None when any turn text is empty after cleaning (the whole
    record is considered malformed).
    """
    merged: list[tuple[str, str]] = []
    for role, text in raw_turns:
        cleaned = clean_text(text)
        if not cleaned:
            return None
        if merged and merged[-1][0] == role:
            merged[-1] = (role, merged[-1][1] + " " + cleaned)
        else:
            merged.append((role, cleaned))
    return [Turn(role=r, text=t, index=i) for i, (r, t) in enumerate(merged)]


def _session_from_raw(
    session_id: str, source: str, raw_turns: list[tuple[str, str]], stats: CorpusStats
) -> Optional[DialogueSession]:
    if not raw_turns:
        stats.drop("no_turns")
        return None
    turns = _normalize_turns(raw_turns)
    if turns is None:
        stats.drop("empty_text")
        return None
    if not turns:
        stats.drop("no_turns")
        return None
    if turns[0].role != "customer":
        stats.drop("starts_with_agent")
        return None
    return DialogueSession(session_id=session_id, turns=tuple(turns), source=source)


def _iter_jsonl_generic(path: Path, stats: CorpusStats) -> Iterator[DialogueSession]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                session_id = str(record.get("session_id") or f"s{lineno}")
                source = record.get("source", "generated")
                raw_turns = [(t["role"], t["text"]) for t in record["turns"]]
                if any(r not in ("customer", "agent") for r, _ in raw_turns):
                    stats.drop("bad_role")
                    continue
            except (json.JSONDecodeError, KeyError, TypeError):
                stats.drop("parse_error")
                continue
            if source not in SESSION_SOURCES:
                source = "generated"
            session = _session_from_raw(session_id, source, raw_turns, stats)
            if session is not None:
                yield session


def _iter_ecd(path: Path, stats: CorpusStats) -> Iterator[DialogueSession]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 3:
                stats.drop("parse_error")
                continue
            label, *utterances = cols
            if label.strip() not in ("0", "1"):
                stats.drop("parse_error")
                continue
            if label.strip() == "0":
                stats.drop("negative_label")
                continue
            # Context utterances alternate customer/agent starting with the
            # customer; the final column is the agent response.
            raw_turns = [
                ("customer" if i % 2 == 0 else "agent", text)
                for i, text in enumerate(utterances[:-1])
            ]
            raw_turns.append(("agent", utterances[-1]))
            session = _session_from_raw(f"ecd-{lineno}", "ecd", raw_turns, stats)
            if session is not None:
                yield session


def _iter_jddc(path: Path, stats: CorpusStats) -> Iterator[DialogueSession]:
    def flush(sid: Optional[str], rows: list[tuple[str, str]]) -> Optional[DialogueSession]:
        if sid is None:
            return None
        return _session_from_raw(sid, "jddc", rows, stats)

    current_id: Optional[str] = None
    rows: list[tuple[str, str]] = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                stats.drop("parse_error")
                continue
            sid, role_raw, text = cols
            role = _ROLE_ALIASES.get(role_raw.strip().lower())
            if role is None:
                stats.drop("bad_role")
                continue
            if sid != current_id:
                session = flush(current_id, rows)
                if session is not None:
                    yield session
                current_id, rows = sid, []
            rows.append((role, text))
    session = flush(current_id, rows)
    if session is not None:
        yield session


def ingest_corpus(
    path: str | Path, format: str = "jsonl_generic"
) -> tuple[Iterator[DialogueSession], CorpusStats]:
    """Stream sessions from a corpus file.

    Returns (iterator, stats); the stats object fills in as the iterator is
    consumed and is complete once it is exhausted. Malformed records are
    counted in stats.dropped and never emitted.
    """
    p = Path(path)
    if format not in CORPUS_FORMATS:
        raise CorpusError(f"unknown corpus format {format!r}; expected one of {CORPUS_FORMATS}")
    if not p.is_file():
        raise CorpusError(f"corpus file not found: {p}")
    stats = CorpusStats()
    iterators = {
        "jsonl_generic": _iter_jsonl_generic,
        "ecd": _iter_ecd,
        "jddc": _iter_jddc,
    }

    def run() -> Iterator[DialogueSession]:
        for session in iterators[format](p, stats):
            stats.sessions += 1
            stats.total_turns += len(session.turns)
            stats.pairs += sum(1 for t in session.turns if t.role == "agent")
            yield session

    return run(), stats


def load_corpus(path: str | Path, format: str = "jsonl_generic") -> tuple[list[DialogueSession], CorpusStats]:
    """Eager variant of ingest_corpus."""
    stream, stats = ingest_corpus(path, format)
    return list(stream), stats


def flatten_session(session: DialogueSession) -> list[SessionResponsePair]:
    """One pair per agent turn; the pair context is every turn before it.

    Consecutive same-role turns are merged first, so contexts always
    alternate roles and end with a customer turn. A session with no agent
    turn yields an empty list.
    """
    turns = _normalize_turns((t.role, t.text) for t in session.turns)
    if not turns:
        return []
    pairs: list[SessionResponsePair] = []
    for i, turn in enumerate(turns):
        if turn.role != "agent" or i == 0:
            continue
        pairs.append(
            SessionResponsePair(
                context=tuple(turns[:i]),
                response=turn.text,
                pair_id=f"{session.session_id}:{len(pairs)}",
            )
        )
    return pairs


def flatten_corpus(sessions: Iterable[DialogueSession]) -> list[SessionResponsePair]:
    pairs: list[SessionResponsePair] = []
    for session in sessions:
        pairs.extend(flatten_session(session))
    return pairs


def split_corpus(
    pairs: list[SessionResponsePair],
    ratios: tuple[float, float, float],
    seed: int,
) -> tuple[list[SessionResponsePair], list[SessionResponsePair], list[SessionResponsePair]]:
    """Disjoint (train, valid, test) partition.

    Sizes follow largest-remainder rounding of the ratio shares (ties go to
    the earlier split); membership is a seeded shuffle, with the original
    order preserved inside each split.
    """
    import random

    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be nonnegative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios} (sum {sum(ratios)})")

    n = len(pairs)
    quotas = [n * r for r in ratios]
    sizes = [int(q) for q in quotas]
    leftover = n - sum(sizes)
    by_remainder = sorted(range(3), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in range(leftover):
        sizes[by_remainder[i % 3]] += 1

    order = list(range(n))
    random.Random(seed).shuffle(order)
    cut1, cut2 = sizes[0], sizes[0] + sizes[1]
    buckets = (sorted(order[:cut1]), sorted(order[cut1:cut2]), sorted(order[cut2:]))
    return tuple([pairs[i] for i in bucket] for bucket in buckets)  # type: ignore[return-value]


def question_of(pair: SessionResponsePair) -> str:
    """The pair's final customer turn text."""
    return pair.context[-1].text


def pair_to_json(pair: SessionResponsePair) -> str:
    return json.dumps(
        {
            "pair_id": pair.pair_id,
            "context": [t.text for t in pair.context],
            "response": pair.response,
        },
        ensure_ascii=False,
    )


def pair_from_json(line: str) -> SessionResponsePair:
    """Rebuild a pair from the export format.

    Roles are implied by position: contexts alternate and end with a
    customer turn.
    """
    record = json.loads(line)
    texts = list(record["context"])
    if not texts:
        raise CorpusError(f"pair {record.get('pair_id')!r} has an empty context")
    k = len(texts)
    turns = tuple(
        Turn(role="customer" if (k - 1 - i) % 2 == 0 else "agent", text=t, index=i)
        for i, t in enumerate(texts)
    )
    return SessionResponsePair(context=turns, response=record["response"], pair_id=str(record["pair_id"]))


def write_pairs(pairs: Iterable[SessionResponsePair], path: str | Path) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(pair_to_json(pair) + "\n")
            count += 1
    return count


def read_pairs(path: str | Path) -> list[SessionResponsePair]:
    p = Path(path)
    if not p.is_file():
        raise CorpusError(f"pair file not found: {p}")
    pairs = []
    with p.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(pair_from_json(line))
    return pairs
