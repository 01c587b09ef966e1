"""End-cloud collaboration runtime for AI customer service.

A serving gateway answers chat queries from a local "end" model backend,
scores every answer against a cloud reference (composite similarity +
relevance score with a relevance-gate fallback), escalates low-scoring
answers to the cloud backend, turns cloud answers into pseudo-label
training examples, and feeds them to a trainer interface.
"""

__version__ = "0.1.0"

from .backends import EmbeddingVector, GenerationResult, embed, generate
from .config import (
    BackendConfig,
    EccConfig,
    EvalConfig,
    GenerationParams,
    TrainingJobSpec,
    default_config,
    load_config,
)
from .corpus import (
    CorpusStats,
    DialogueSession,
    SessionResponsePair,
    Turn,
    clean_text,
    flatten_session,
    ingest_corpus,
    split_corpus,
)
from .evolution import (
    Action,
    EvolutionRecord,
    TrainingExample,
    TrainingQueue,
    decide_action,
    escalate,
    make_pseudo_label,
)
from .gateway import ChatRequest, ChatResponse, Gateway, Metrics, replay_events
from .promptkit import FewShotExample, PromptTemplate, build_fewshot_prompt, render_messages
from .scoring import (
    ScoreBreakdown,
    combine_scores,
    evaluate_response,
    relevance_score,
    similarity_score,
)
from .simharness import (
    GridReport,
    SimulationReport,
    analyze_published_grid,
    eval_grid,
    load_grid,
    published_grid_path,
    replay_simulation,
    sample_dialogue_path,
)

__all__ = [
    "__version__",
    "Action",
    "BackendConfig",
    "ChatRequest",
    "ChatResponse",
    "CorpusStats",
    "DialogueSession",
    "EccConfig",
    "EmbeddingVector",
    "EvalConfig",
    "EvolutionRecord",
    "FewShotExample",
    "Gateway",
    "GenerationParams",
    "GenerationResult",
    "GridReport",
    "Metrics",
    "PromptTemplate",
    "ScoreBreakdown",
    "SessionResponsePair",
    "SimulationReport",
    "TrainingExample",
    "TrainingJobSpec",
    "TrainingQueue",
    "Turn",
    "analyze_published_grid",
    "build_fewshot_prompt",
    "clean_text",
    "combine_scores",
    "decide_action",
    "default_config",
    "embed",
    "escalate",
    "eval_grid",
    "evaluate_response",
    "flatten_session",
    "generate",
    "ingest_corpus",
    "load_config",
    "load_grid",
    "published_grid_path",
    "sample_dialogue_path",
    "make_pseudo_label",
    "relevance_score",
    "replay_events",
    "replay_simulation",
    "similarity_score",
    "split_corpus",
]
