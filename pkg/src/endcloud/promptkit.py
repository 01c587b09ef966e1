"""Few-shot prompt assembly for the end-side chat model.

The system message carries a fixed role preamble followed by numbered
question/answer exemplars drawn from the corpus; the user message carries
the cleaned live query. Both sides are length-budgeted in characters:
the system message must fit ``max_length`` and the user message is
tail-truncated to ``max_input_length``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .config import DEFAULT_PREAMBLE, GenerationParams
from .corpus import SessionResponsePair, clean_text, question_of
from .errors import PromptBudgetError, PromptError

EXAMPLES_HEADER = "Here are some examples for your reference."


@dataclass(frozen=True)
class FewShotExample:
    question: str
    answer: str


@dataclass(frozen=True)
class PromptTemplate:
    preamble: str = DEFAULT_PREAMBLE
    examples: tuple[FewShotExample, ...] = ()

    @property
    def n_examples(self) -> int:
        return len(self.examples)


def example_from_pair(pair: SessionResponsePair) -> FewShotExample:
    return FewShotExample(question=question_of(pair), answer=pair.response)


def build_fewshot_prompt(
    pairs: Sequence[SessionResponsePair],
    n: int,
    preamble: str = DEFAULT_PREAMBLE,
) -> PromptTemplate:
    """Take the first n pairs (corpus order) as exemplars.

    Raises PromptError when fewer than n pairs are available.
    """
    if n < 0:
        raise PromptError(f"example count must be nonnegative, got {n}")
    if len(pairs) < n:
        raise PromptError(f"need {n} examples but only {len(pairs)} pairs are available")
    examples = tuple(example_from_pair(p) for p in pairs[:n])
    return PromptTemplate(preamble=preamble, examples=examples)


def _example_block(i: int, example: FewShotExample) -> str:
    return f"Question No.{i}: {example.question}\nAnswer No.{i}: {example.answer}"


def render_system(template: PromptTemplate) -> str:
    """Preamble, then (when there are exemplars) the header and one
    numbered block per example, all joined by blank lines."""
    if not template.examples:
        return template.preamble
    blocks = [template.preamble, EXAMPLES_HEADER]
    blocks.extend(_example_block(i, ex) for i, ex in enumerate(template.examples, 1))
    return "\n\n".join(blocks)


def fit_template(template: PromptTemplate, max_length: int) -> PromptTemplate:
    """Evict whole examples from the front until the rendered system
    message fits max_length characters. Survivors renumber from 1.

    Raises PromptBudgetError when even the bare preamble does not fit.
    """
    if len(template.preamble) > max_length:
        raise PromptBudgetError(
            f"preamble is {len(template.preamble)} chars; budget is {max_length}"
        )
    current = template
    while len(render_system(current)) > max_length and current.examples:
        current = replace(current, examples=current.examples[1:])
    if len(render_system(current)) > max_length:
        raise PromptBudgetError(
            f"system message is {len(render_system(current))} chars with no examples left; "
            f"budget is {max_length}"
        )
    return current


def render_user(query: str, params: Optional[GenerationParams] = None) -> str:
    """Clean the query and keep its most recent max_input_length chars."""
    p = params or GenerationParams()
    user = clean_text(query)
    if not user:
        raise PromptError("query is empty after cleaning")
    if len(user) > p.max_input_length:
        user = user[-p.max_input_length :]
    return user


def render_messages(
    template: PromptTemplate,
    query: str,
    params: Optional[GenerationParams] = None,
) -> list[dict[str, str]]:
    """Chat messages for one query: [system, user].

    The template is budget-fitted to params.max_length; the cleaned query
    is tail-truncated to params.max_input_length (the most recent
    characters are kept).
    """
    p = params or GenerationParams()
    fitted = fit_template(template, p.max_length)
    return [
        {"role": "system", "content": render_system(fitted)},
        {"role": "user", "content": render_user(query, p)},
    ]


def template_from_pairs(
    pairs: Iterable[SessionResponsePair],
    n: int,
    preamble: str = DEFAULT_PREAMBLE,
    max_length: Optional[int] = None,
) -> PromptTemplate:
    """build_fewshot_prompt + optional immediate budget fit."""
    template = build_fewshot_prompt(list(pairs), n, preamble)
    if max_length is not None:
        template = fit_template(template, max_length)
    return template
