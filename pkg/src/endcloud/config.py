"""Central configuration: every tunable the runtime exposes.

The file format is flat ``section.key = value`` text (``#`` comments and
blank lines allowed), one assignment per line:

    eval.alpha = 0.8
    end_backend.kind = replay
    end_backend.fixture_path = fixtures/end.jsonl

Unset keys keep their defaults. ``ECC_CONFIG`` names the default file
path. Secrets are never stored literally: backends carry the *name* of an
environment variable (``api_key_env``) and read it at call time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import ConfigError, ConfigValidationError

TRAINING_METHODS = ("prefix_tuning", "p_tuning_v2", "lora", "none")
BACKEND_KINDS = ("http_chat", "replay", "template")
ESCALATION_MODES = ("sync", "async")

DEFAULT_PREAMBLE = (
    "Assuming that you are an e-commerce customer service agent who is able "
    "to answer the specialized knowledge in e-commerce, has good service "
    "consciousness, and is able to deal with the customer's request "
    "properly, you are asked to play the role of an e-commerce customer "
    "service agent in order to deal with the customers in the following."
)


@dataclass(frozen=True)
class EvalConfig:
    """Automated-evaluation knobs.

    ``alpha`` mixes the similarity score with the query relevance score;
    ``theta`` gates the composite on the cloud answer's own relevance
    (below it, the final score collapses to similarity alone); ``tau`` is
    the escalation threshold on the final score; ``eval_sampling_rate`` is
    the fraction of live requests that are automatically evaluated.
    """

    alpha: float = 0.8
    theta: float = 0.2
    tau: float = 0.5
    eval_sampling_rate: float = 1.0


@dataclass(frozen=True)
class GenerationParams:
    max_length: int = 8192
    top_p: float = 0.8
    temperature: float = 0.6
    max_input_length: int = 256
    max_output_length: int = 512


@dataclass(frozen=True)
class TrainingJobSpec:
    """Fine-tuning job parameters handed to the trainer interface.

    Method-specific knobs always carry their stock defaults so a job spec
    is complete whatever the method; validation flags only knobs that were
    explicitly set in a config file against a mismatching method.
    """

    method: str = "lora"
    fine_tuning_steps: int = 30000
    learning_rate: float = 5e-5
    per_device_batch_size: int = 1
    num_virtual_tokens: Optional[int] = 128
    lora_rank: Optional[int] = 8
    lora_alpha: Optional[int] = 32
    lora_dropout: Optional[float] = 0.1


@dataclass(frozen=True)
class BackendConfig:
    """One model backend: a remote chat endpoint, a replay fixture, or a
    fixed-template stub."""

    kind: str = "template"
    endpoint: str = ""
    model_name: str = "stub"
    api_key_env: str = ""
    timeout_ms: int = 30000
    max_retries: int = 2
    fixture_path: str = ""
    template_text: str = "OK."

    @property
    def backend_id(self) -> str:
        return f"{self.kind}:{self.model_name}"

    def as_replay(self, fixture_path: str, model_name: str = "") -> "BackendConfig":
        """This backend re-pointed at a replay fixture (hermetic twin)."""
        return replace(
            self,
            kind="replay",
            endpoint="",
            fixture_path=fixture_path,
            model_name=model_name or self.model_name,
        )


@dataclass(frozen=True)
class ScorerConfig:
    similarity: str = "ngram-cosine"
    relevance: str = "ngram-cosine"


@dataclass(frozen=True)
class EccConfig:
    eval: EvalConfig = field(default_factory=EvalConfig)
    generation: GenerationParams = field(default_factory=GenerationParams)
    training: TrainingJobSpec = field(default_factory=TrainingJobSpec)
    end_backend: BackendConfig = field(
        default_factory=lambda: BackendConfig(model_name="end-stub", template_text="(end stub reply)")
    )
    cloud_backend: BackendConfig = field(
        default_factory=lambda: BackendConfig(model_name="cloud-stub", template_text="(cloud stub reply)")
    )
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    prompt_n: int = 500
    prompt_preamble: str = DEFAULT_PREAMBLE
    queue_batch_size: int = 64
    escalation_mode: str = "sync"
    auth_token_env: str = ""
    log_path: str = "ecc-events.jsonl"
    queue_path: str = "ecc-queue.jsonl"
    # Dotted keys that were explicitly assigned in the source file; not
    # part of value equality (round-tripping a serialized config re-sets
    # every key).
    explicit_keys: frozenset[str] = field(default_factory=frozenset, compare=False)


@dataclass(frozen=True)
class Violation:
    """One invariant breach found by validate_config."""

    key: str
    value: Any
    constraint: str

    def __str__(self) -> str:
        return f"{self.key}={self.value!r} violates: {self.constraint}"


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_optional_int(raw: str) -> Optional[int]:
    return None if raw.lower() == "none" else int(raw)


def _parse_optional_float(raw: str) -> Optional[float]:
    return None if raw.lower() == "none" else float(raw)


# dotted key -> (section attribute or None for top-level, field name, parser)
_KEY_TABLE: dict[str, tuple[Optional[str], str, Callable[[str], Any]]] = {
    "eval.alpha": ("eval", "alpha", float),
    "eval.theta": ("eval", "theta", float),
    "eval.tau": ("eval", "tau", float),
    "eval.sampling_rate": ("eval", "eval_sampling_rate", float),
    "generation.max_length": ("generation", "max_length", int),
    "generation.top_p": ("generation", "top_p", float),
    "generation.temperature": ("generation", "temperature", float),
    "generation.max_input_length": ("generation", "max_input_length", int),
    "generation.max_output_length": ("generation", "max_output_length", int),
    "training.method": ("training", "method", str),
    "training.fine_tuning_steps": ("training", "fine_tuning_steps", int),
    "training.learning_rate": ("training", "learning_rate", float),
    "training.per_device_batch_size": ("training", "per_device_batch_size", int),
    "training.num_virtual_tokens": ("training", "num_virtual_tokens", _parse_optional_int),
    "training.lora_rank": ("training", "lora_rank", _parse_optional_int),
    "training.lora_alpha": ("training", "lora_alpha", _parse_optional_int),
    "training.lora_dropout": ("training", "lora_dropout", _parse_optional_float),
    "scorer.similarity": ("scorer", "similarity", str),
    "scorer.relevance": ("scorer", "relevance", str),
    "prompt_n": (None, "prompt_n", int),
    "prompt_preamble": (None, "prompt_preamble", str),
    "queue_batch_size": (None, "queue_batch_size", int),
    "escalation_mode": (None, "escalation_mode", str),
    "auth_token_env": (None, "auth_token_env", str),
    "log_path": (None, "log_path", str),
    "queue_path": (None, "queue_path", str),
}

for _role in ("end_backend", "cloud_backend"):
    for _fname, _parser in (
        ("kind", str),
        ("endpoint", str),
        ("model_name", str),
        ("api_key_env", str),
        ("timeout_ms", int),
        ("max_retries", int),
        ("fixture_path", str),
        ("template_text", str),
    ):
        _KEY_TABLE[f"{_role}.{_fname}"] = (_role, _fname, _parser)


def parse_config_text(text: str, source: str = "<string>") -> EccConfig:
    """Parse the flat key-value format into an EccConfig (unvalidated)."""
    sections: dict[str, dict[str, Any]] = {}
    top: dict[str, Any] = {}
    explicit: set[str] = set()
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _KEY_TABLE:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        section, fname, parser = _KEY_TABLE[key]
        try:
            value = parser(raw_value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
        if section is None:
            top[fname] = value
        else:
            sections.setdefault(section, {})[fname] = value
        explicit.add(key)

    cfg = EccConfig(explicit_keys=frozenset(explicit), **top)
    for section, values in sections.items():
        cfg = replace(cfg, **{section: replace(getattr(cfg, section), **values)})
    return cfg


def load_config(path: str | Path) -> EccConfig:
    """Load, parse, and validate a config file.

    Raises ConfigError for a missing/unparseable file and
    ConfigValidationError when any value is out of range.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    cfg = parse_config_text(text, source=str(p))
    violations = validate_config(cfg)
    if violations:
        raise ConfigValidationError(violations)
    return cfg


def default_config() -> EccConfig:
    return EccConfig()


def config_path_from_env() -> Optional[str]:
    return os.environ.get("ECC_CONFIG") or None


def _check_range(out: list[Violation], key: str, value: float, lo: float, hi: float) -> None:
    if not (lo <= value <= hi):
        out.append(Violation(key, value, f"must be in [{lo}, {hi}]"))


def _check_backend(out: list[Violation], role: str, b: BackendConfig) -> None:
    if b.kind not in BACKEND_KINDS:
        out.append(Violation(f"{role}.kind", b.kind, f"must be one of {BACKEND_KINDS}"))
        return
    if b.kind == "http_chat" and not b.endpoint:
        out.append(Violation(f"{role}.endpoint", b.endpoint, "required when kind=http_chat"))
    if b.kind != "http_chat" and b.endpoint:
        out.append(Violation(f"{role}.endpoint", b.endpoint, "only valid when kind=http_chat"))
    if b.kind == "replay" and not b.fixture_path:
        out.append(Violation(f"{role}.fixture_path", b.fixture_path, "required when kind=replay"))
    if b.kind != "replay" and b.fixture_path:
        out.append(Violation(f"{role}.fixture_path", b.fixture_path, "only valid when kind=replay"))
    if b.timeout_ms <= 0:
        out.append(Violation(f"{role}.timeout_ms", b.timeout_ms, "must be > 0"))
    if b.max_retries < 0:
        out.append(Violation(f"{role}.max_retries", b.max_retries, "must be >= 0"))


def validate_config(cfg: EccConfig) -> list[Violation]:
    """Check every invariant; violations are data, not faults."""
    out: list[Violation] = []
    ev = cfg.eval
    _check_range(out, "eval.alpha", ev.alpha, 0.0, 1.0)
    _check_range(out, "eval.theta", ev.theta, 0.0, 1.0)
    _check_range(out, "eval.tau", ev.tau, 0.0, 1.0)
    _check_range(out, "eval.sampling_rate", ev.eval_sampling_rate, 0.0, 1.0)

    gen = cfg.generation
    if gen.max_length < 1:
        out.append(Violation("generation.max_length", gen.max_length, "must be >= 1"))
    if not (0.0 < gen.top_p <= 1.0):
        out.append(Violation("generation.top_p", gen.top_p, "must be in (0, 1]"))
    if gen.temperature < 0.0:
        out.append(Violation("generation.temperature", gen.temperature, "must be >= 0"))
    if gen.max_input_length < 1:
        out.append(Violation("generation.max_input_length", gen.max_input_length, "must be >= 1"))
    if gen.max_output_length < 1:
        out.append(Violation("generation.max_output_length", gen.max_output_length, "must be >= 1"))

    tr = cfg.training
    if tr.method not in TRAINING_METHODS:
        out.append(Violation("training.method", tr.method, f"must be one of {TRAINING_METHODS}"))
    if tr.fine_tuning_steps < 1:
        out.append(Violation("training.fine_tuning_steps", tr.fine_tuning_steps, "must be >= 1"))
    if tr.learning_rate <= 0:
        out.append(Violation("training.learning_rate", tr.learning_rate, "must be > 0"))
    if tr.per_device_batch_size < 1:
        out.append(Violation("training.per_device_batch_size", tr.per_device_batch_size, "must be >= 1"))
    if tr.num_virtual_tokens is not None and tr.num_virtual_tokens < 1:
        out.append(Violation("training.num_virtual_tokens", tr.num_virtual_tokens, "must be >= 1"))
    if tr.lora_rank is not None and tr.lora_rank < 1:
        out.append(Violation("training.lora_rank", tr.lora_rank, "must be >= 1"))
    if tr.lora_alpha is not None and tr.lora_alpha < 1:
        out.append(Violation("training.lora_alpha", tr.lora_alpha, "must be >= 1"))
    if tr.lora_dropout is not None and not (0.0 <= tr.lora_dropout < 1.0):
        out.append(Violation("training.lora_dropout", tr.lora_dropout, "must be in [0, 1)"))

    # Method-specific knobs may only be *explicitly set* for a matching
    # method; stock defaults are fine under any method.
    lora_keys = ("training.lora_rank", "training.lora_alpha", "training.lora_dropout")
    if tr.method != "lora":
        for key in lora_keys:
            if key in cfg.explicit_keys and getattr(tr, key.split(".")[1]) is not None:
                out.append(Violation(key, getattr(tr, key.split(".")[1]), f"only valid when method=lora (method={tr.method})"))
    if tr.method not in ("prefix_tuning", "p_tuning_v2"):
        if "training.num_virtual_tokens" in cfg.explicit_keys and tr.num_virtual_tokens is not None:
            out.append(
                Violation(
                    "training.num_virtual_tokens",
                    tr.num_virtual_tokens,
                    f"only valid when method is prefix_tuning or p_tuning_v2 (method={tr.method})",
                )
            )

    _check_backend(out, "end_backend", cfg.end_backend)
    _check_backend(out, "cloud_backend", cfg.cloud_backend)
    if cfg.end_backend == cfg.cloud_backend:
        out.append(
            Violation(
                "cloud_backend",
                cfg.cloud_backend.backend_id,
                "end and cloud backends must be distinct",
            )
        )

    if cfg.prompt_n < 0:
        out.append(Violation("prompt_n", cfg.prompt_n, "must be >= 0"))
    if not cfg.prompt_preamble.strip():
        out.append(Violation("prompt_preamble", cfg.prompt_preamble, "must be nonempty"))
    if cfg.queue_batch_size < 1:
        out.append(Violation("queue_batch_size", cfg.queue_batch_size, "must be >= 1"))
    if cfg.escalation_mode not in ESCALATION_MODES:
        out.append(Violation("escalation_mode", cfg.escalation_mode, f"must be one of {ESCALATION_MODES}"))
    if not cfg.scorer.similarity:
        out.append(Violation("scorer.similarity", cfg.scorer.similarity, "must be nonempty"))
    if not cfg.scorer.relevance:
        out.append(Violation("scorer.relevance", cfg.scorer.relevance, "must be nonempty"))
    return out


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: EccConfig) -> str:
    """Emit every key in the canonical order; parse_config_text round-trips."""
    lines = []
    for key, (section, fname, _parser) in _KEY_TABLE.items():
        holder = cfg if section is None else getattr(cfg, section)
        lines.append(f"{key} = {_format_value(getattr(holder, fname))}")
    return "\n".join(lines) + "\n"


def config_fields(cfg: EccConfig) -> dict[str, Any]:
    """Flat dotted-key view of a config, mostly for reporting."""
    out = {}
    for key, (section, fname, _parser) in _KEY_TABLE.items():
        holder = cfg if section is None else getattr(cfg, section)
        out[key] = getattr(holder, fname)
    return out


__all__ = [
    "EvalConfig",
    "GenerationParams",
    "TrainingJobSpec",
    "BackendConfig",
    "ScorerConfig",
    "EccConfig",
    "Violation",
    "DEFAULT_PREAMBLE",
    "TRAINING_METHODS",
    "BACKEND_KINDS",
    "parse_config_text",
    "load_config",
    "default_config",
    "config_path_from_env",
    "validate_config",
    "serialize_config",
    "config_fields",
]
