"""Deterministic desk-scale experiments.

- replay_simulation: run a pair corpus through the full serving loop on
  replay backends and report escalation metrics, with the report rebuilt
  from the event log (never from live counters).
- eval_grid: score a set of queries against several end-model variants,
  Table-style: one row per query, one column per variant, winners per row
  with exact ties kept as sets.
- analyze_published_grid: winner extraction over the score grid that
  ships with the package (data/published_grid.tsv).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .backends import generate
from .config import BackendConfig, EccConfig, EvalConfig, GenerationParams
from .corpus import SessionResponsePair, question_of
from .errors import EccError, ReplayMissError
from .evolution import TrainerFn
from .gateway import ChatRequest, Gateway, Metrics, replay_events
from .promptkit import PromptTemplate, render_messages, render_user
from .scoring import ScorerFn, evaluate_response


@dataclass(frozen=True)
class SimulationReport:
    queries: int
    escalations: int
    escalation_rate: float
    mean_final: float
    served_by: dict[str, int]
    wall_ms: int

    def as_dict(self, include_wall: bool = False) -> dict:
        out = {
            "queries": self.queries,
            "escalations": self.escalations,
            "escalation_rate": self.escalation_rate,
            "mean_final": self.mean_final,
            "served_by": dict(sorted(self.served_by.items())),
        }
        if include_wall:
            out["wall_ms"] = self.wall_ms
        return out

    def to_json(self) -> str:
        """Serialized report; wall time is excluded so identical runs
        produce identical bytes."""
        return json.dumps(self.as_dict(), ensure_ascii=False, sort_keys=True)

    def render(self) -> str:
        lines = [
            f"queries          {self.queries}",
            f"escalations      {self.escalations}",
            f"escalation_rate  {self.escalation_rate:.3f}",
            f"mean_final       {self.mean_final:.3f}",
            f"served_by        end={self.served_by.get('end', 0)} cloud={self.served_by.get('cloud', 0)}",
            f"wall_ms          {self.wall_ms}",
        ]
        return "\n".join(lines)


@dataclass
class SimulationResult:
    report: SimulationReport
    live: Metrics
    replayed: Metrics
    gateway: Gateway
    log_path: Path
    queue_path: Path


def run_replay_simulation(
    pairs: Sequence[SessionResponsePair],
    cfg: EccConfig,
    *,
    sim_scorer: Optional[ScorerFn] = None,
    rel_scorer: Optional[ScorerFn] = None,
    template: Optional[PromptTemplate] = None,
    trainer: Optional[TrainerFn] = None,
    log_path: Optional[str | Path] = None,
    queue_path: Optional[str | Path] = None,
) -> SimulationResult:
    """Run every pair's final customer turn through the chat pipeline.

    Backends must be replay or template kind (hermetic); a replay miss
    aborts the run naming the offending query.
    """
    for role, backend in (("end", cfg.end_backend), ("cloud", cfg.cloud_backend)):
        if backend.kind == "http_chat":
            raise EccError(f"{role} backend is http_chat; simulations must be hermetic")
    started = time.perf_counter()
    gateway = Gateway(
        cfg,
        template=template,
        sim_scorer=sim_scorer,
        rel_scorer=rel_scorer,
        trainer=trainer,
        log_path=log_path,
        queue_path=queue_path,
    )
    for pair in pairs:
        query = question_of(pair)
        session_id = pair.pair_id.rsplit(":", 1)[0]
        try:
            gateway.handle_chat(ChatRequest(session_id=session_id, message=query))
        except ReplayMissError as exc:
            raise EccError(f"simulation aborted on query {query!r}: {exc}") from exc
    wall_ms = max(0, int((time.perf_counter() - started) * 1000))
    replayed = replay_events(gateway.log.path)
    report = SimulationReport(
        queries=replayed.queries,
        escalations=replayed.escalations,
        escalation_rate=replayed.escalation_rate,
        mean_final=replayed.mean_final,
        served_by=replayed.served_by,
        wall_ms=wall_ms,
    )
    return SimulationResult(
        report=report,
        live=gateway.metrics(),
        replayed=replayed,
        gateway=gateway,
        log_path=gateway.log.path,
        queue_path=gateway.queue.path,
    )


def replay_simulation(
    pairs: Sequence[SessionResponsePair],
    cfg: EccConfig,
    *,
    sim_scorer: Optional[ScorerFn] = None,
    rel_scorer: Optional[ScorerFn] = None,
    template: Optional[PromptTemplate] = None,
    trainer: Optional[TrainerFn] = None,
    log_path: Optional[str | Path] = None,
    queue_path: Optional[str | Path] = None,
) -> SimulationReport:
    return run_replay_simulation(
        pairs,
        cfg,
        sim_scorer=sim_scorer,
        rel_scorer=rel_scorer,
        template=template,
        trainer=trainer,
        log_path=log_path,
        queue_path=queue_path,
    ).report


def row_winners(labels: Sequence[str], cells: Sequence[float]) -> set[str]:
    """Argmax labels of one row, keeping exact ties together."""
    if not cells or len(labels) != len(cells):
        raise EccError("row shape mismatch")
    best = max(cells)
    return {label for label, cell in zip(labels, cells) if cell == best}


@dataclass(frozen=True)
class GridReport:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    cells: tuple[tuple[float, ...], ...]  # rounded to 3 decimals

    def __post_init__(self) -> None:
        for row in self.cells:
            if len(row) != len(self.columns):
                raise EccError("grid width mismatch")
            if any(not (0.0 <= c <= 1.0) for c in row):
                raise EccError("grid cell out of [0,1]")

    @property
    def row_maxima(self) -> tuple[set[str], ...]:
        return tuple(row_winners(self.columns, row) for row in self.cells)

    def winners(self) -> dict[str, set[str]]:
        return {row: winners for row, winners in zip(self.rows, self.row_maxima)}

    def to_tsv(self) -> str:
        lines = ["query\t" + "\t".join(self.columns)]
        for row, cells in zip(self.rows, self.cells):
            lines.append(row + "\t" + "\t".join(f"{c:.3f}" for c in cells))
        return "\n".join(lines) + "\n"

    def render(self) -> str:
        lines = [self.to_tsv().rstrip("\n"), ""]
        for row, winners in zip(self.rows, self.row_maxima):
            lines.append(f"best for {row!r}: {', '.join(sorted(winners))}")
        return "\n".join(lines)


def eval_grid(
    inputs: Sequence[str],
    variants: Sequence[tuple[str, BackendConfig]],
    cloud: BackendConfig,
    cfg: Optional[EvalConfig] = None,
    *,
    template: Optional[PromptTemplate] = None,
    params: Optional[GenerationParams] = None,
    sim_scorer: Optional[ScorerFn] = None,
    rel_scorer: Optional[ScorerFn] = None,
) -> GridReport:
    """Score every (input, variant) cell against the cloud reference."""
    if not inputs or not variants:
        raise EccError("eval_grid needs at least one input and one variant")
    tpl = template or PromptTemplate()
    p = params or GenerationParams()
    rows = []
    for query in inputs:
        cloud_text = generate(cloud, render_messages(tpl, query, p), p).text
        row = []
        for _, backend in variants:
            end_messages = [{"role": "user", "content": render_user(query, p)}]
            end_text = generate(backend, end_messages, p).text
            breakdown = evaluate_response(
                query, end_text, cloud_text, cfg, sim_scorer, rel_scorer
            )
            row.append(round(breakdown.final, 3))
        rows.append(tuple(row))
    return GridReport(
        rows=tuple(inputs),
        columns=tuple(label for label, _ in variants),
        cells=tuple(rows),
    )


def load_grid(path: str | Path) -> GridReport:
    """Read a grid file: a header of variant labels, then one line per
    query with its scores (tab-separated)."""
    p = Path(path)
    if not p.is_file():
        raise EccError(f"grid file not found: {p}")
    lines = [line.rstrip("\n") for line in p.read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line.strip()]
    if len(lines) < 2:
        raise EccError(f"{p}: grid needs a header and at least one row")
    header = lines[0].split("\t")
    columns = tuple(header[1:]) if len(header) > 1 else tuple(header)
    rows = []
    cells = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split("\t")
        if len(parts) != len(columns) + 1:
            raise EccError(f"{p}:{lineno}: expected {len(columns) + 1} columns, got {len(parts)}")
        rows.append(parts[0])
        try:
            cells.append(tuple(float(x) for x in parts[1:]))
        except ValueError as exc:
            raise EccError(f"{p}:{lineno}: bad score ({exc})") from exc
    return GridReport(rows=tuple(rows), columns=columns, cells=tuple(cells))


def published_grid_path() -> Path:
    """Location of the bundled published score grid."""
    return Path(str(resources.files("endcloud").joinpath("data/published_grid.tsv")))


def sample_dialogue_path() -> Path:
    """Location of the bundled sample dialogue corpus."""
    return Path(str(resources.files("endcloud").joinpath("data/sample_dialogue.jsonl")))


def analyze_published_grid(grid: Optional[GridReport] = None) -> dict[str, set[str]]:
    """Per-row winner sets of the bundled (or given) score grid."""
    g = grid or load_grid(published_grid_path())
    return g.winners()
