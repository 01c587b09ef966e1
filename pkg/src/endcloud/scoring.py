"""Dual-track automated evaluation scores.

Two pluggable scorers feed one composite:

- similarity: how close the end model's answer is to the cloud model's
  answer for the same query (symmetric).
- relevance: how well an answer matches the query (asymmetric; the first
  argument is always the query).

The composite blends similarity with the query/end-answer relevance,
weighted by alpha. When the cloud answer itself matches the query poorly
(relevance below theta, strictly), the relevance track is considered
uninformative and the final score falls back to the similarity alone.

The reference scorer ("ngram-cosine") is the cosine of hashed character
bigram count vectors, with two conventions: equal-after-cleaning nonempty
texts score exactly 1.0, and any empty side scores 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .backends import DEFAULT_EMBED_DIMS, DEFAULT_NGRAM_N, embed
from .config import EvalConfig, ScorerConfig
from .corpus import clean_text
from .errors import ScoringError
from .kernels import cosine_counts

ScorerFn = Callable[[str, str], float]


@dataclass(frozen=True)
class ScoreBreakdown:
    sim: float
    rel_end: float
    rel_cloud: float
    alpha: float
    theta: float
    theta_fallback_applied: bool
    final: float

    def as_dict(self) -> dict:
        return {
            "sim": self.sim,
            "rel_end": self.rel_end,
            "rel_cloud": self.rel_cloud,
            "alpha": self.alpha,
            "theta": self.theta,
            "theta_fallback_applied": self.theta_fallback_applied,
            "final": self.final,
        }

    def rounded(self, ndigits: int = 3) -> dict:
        out = self.as_dict()
        for key in ("sim", "rel_end", "rel_cloud", "final"):
            out[key] = round(out[key], ndigits)
        return out


def breakdown_from_dict(record: dict) -> ScoreBreakdown:
    return ScoreBreakdown(
        sim=float(record["sim"]),
        rel_end=float(record["rel_end"]),
        rel_cloud=float(record["rel_cloud"]),
        alpha=float(record["alpha"]),
        theta=float(record["theta"]),
        theta_fallback_applied=bool(record["theta_fallback_applied"]),
        final=float(record["final"]),
    )


def _ngram_cosine(a: str, b: str) -> float:
    ca, cb = clean_text(a), clean_text(b)
    if not ca or not cb:
        return 0.0
    if ca == cb:
        return 1.0
    va = embed(ca, DEFAULT_NGRAM_N, DEFAULT_EMBED_DIMS)
    vb = embed(cb, DEFAULT_NGRAM_N, DEFAULT_EMBED_DIMS)
    return cosine_counts(va.values, vb.values)


_SCORERS: dict[str, ScorerFn] = {"ngram-cosine": _ngram_cosine}


def register_scorer(name: str, fn: ScorerFn) -> None:
    """Register a scorer under a config-referencable name. A scorer takes
    two strings and returns a real in [0,1]."""
    if not name:
        raise ScoringError("scorer name must be nonempty")
    _SCORERS[name] = fn


def get_scorer(name: str) -> ScorerFn:
    try:
        return _SCORERS[name]
    except KeyError:
        raise ScoringError(
            f"unknown scorer {name!r}; registered: {sorted(_SCORERS)}"
        ) from None


def resolve_scorers(cfg: ScorerConfig) -> tuple[ScorerFn, ScorerFn]:
    """(similarity scorer, relevance scorer) per the config names."""
    return get_scorer(cfg.similarity), get_scorer(cfg.relevance)


def similarity_score(a: str, b: str) -> float:
    """Reference similarity between two answers. Symmetric; 1.0 for equal
    nonempty texts (after cleaning); 0.0 when either side is empty."""
    return _ngram_cosine(a, b)


def relevance_score(query: str, response: str) -> float:
    """Reference query/answer match. First argument is always the query;
    the same range and empty conventions as similarity_score apply."""
    return _ngram_cosine(query, response)


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ScoringError(f"{name} must be in [0,1], got {value!r}")


def combine_scores(
    sim: float, rel_end: float, rel_cloud: float, cfg: Optional[EvalConfig] = None
) -> ScoreBreakdown:
    """Blend the two tracks into the final score.

    final = alpha*sim + (1-alpha)*rel_end, except when rel_cloud < theta
    (strict): then the final IS sim, bit for bit.
    """
    c = cfg or EvalConfig()
    _check_unit("sim", sim)
    _check_unit("rel_end", rel_end)
    _check_unit("rel_cloud", rel_cloud)
    fallback = rel_cloud < c.theta
    if fallback:
        final = sim
    else:
        final = c.alpha * sim + (1.0 - c.alpha) * rel_end
        final = min(1.0, max(0.0, final))
    return ScoreBreakdown(
        sim=sim,
        rel_end=rel_end,
        rel_cloud=rel_cloud,
        alpha=c.alpha,
        theta=c.theta,
        theta_fallback_applied=fallback,
        final=final,
    )


def evaluate_response(
    query: str,
    end_out: str,
    cloud_out: str,
    cfg: Optional[EvalConfig] = None,
    sim_scorer: Optional[ScorerFn] = None,
    rel_scorer: Optional[ScorerFn] = None,
) -> ScoreBreakdown:
    """Score one answered query end to end.

    sim compares the two answers; rel_end and rel_cloud match each answer
    against the query; combine_scores does the rest. Scores carry full
    precision here; rendering layers round to 3 decimals.
    """
    if not clean_text(query):
        raise ScoringError("query is empty after cleaning")
    sim_fn = sim_scorer or similarity_score
    rel_fn = rel_scorer or relevance_score
    sim = sim_fn(end_out, cloud_out)
    rel_end = rel_fn(query, end_out)
    rel_cloud = rel_fn(query, cloud_out)
    return combine_scores(sim, rel_end, rel_cloud, cfg)


@dataclass
class MappingScorer:
    """Scripted scorer for deterministic simulations: looks up the cleaned
    (a, b) pair in a table. Useful to pin exact scores in tests."""

    table: dict[tuple[str, str], float] = field(default_factory=dict)
    default: Optional[float] = None
    symmetric: bool = False

    def set(self, a: str, b: str, score: float) -> "MappingScorer":
        self.table[(clean_text(a), clean_text(b))] = score
        return self

    def __call__(self, a: str, b: str) -> float:
        key = (clean_text(a), clean_text(b))
        if key in self.table:
            return self.table[key]
        if self.symmetric and (key[1], key[0]) in self.table:
            return self.table[(key[1], key[0])]
        if self.default is not None:
            return self.default
        raise ScoringError(f"no scripted score for pair {key!r}")
