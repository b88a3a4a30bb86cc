"""The crossover operator itself: prompt construction from parents, offspring
extraction from completions, and the composed call against a completion
engine.

A crossover call concatenates parent genotypes into a few-shot prompt,
samples a completion, and parses candidate children back out of the text.
Parent ordering is a first-class policy because autoregressive engines are
sensitive to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .backends import (
    CompletionEngine,
    CompletionRequest,
    EngineError,
    SamplingParams,
    TransportError,
)
from .core import Individual, RngStream, RunLog, NULL_LOG, EVENT_LMX_CALL

ORDER_RANDOM = "random"
ORDER_ASCENDING = "ascending-fitness"
ORDER_DESCENDING = "descending-fitness"
ORDER_GIVEN = "given"

# Default prompt budget: characters, not tokens, since tokenizers are
# engine-specific. 2000 chars is roughly 500 tokens at 4 chars/token.
DEFAULT_CHAR_BUDGET = 2000

# Trimmed completion lines shorter than this are dropped before validation;
# guards against stray blank or punctuation-only lines.
MIN_ITEM_CHARS = 2


class PromptBudgetError(RuntimeError):
    """Prompt would exceed the configured character budget."""


@dataclass
class PromptTemplate:
    """How parents become prompt text.

    The prompt is: header (plus delimiter) if set, then one item per parent
    (``item_prefix + genotype``) joined by the delimiter, then a trailing
    delimiter, then the trailer if set. When ``trailer_starts_child`` is
    true the trailer is the forced opening of the first child (e.g. a
    function signature), so it is prepended to the completion before
    parsing.
    """

    header: Optional[str] = None
    item_prefix: str = ""
    delimiter: str = "\n"
    trailer: Optional[str] = None
    trailer_starts_child: bool = False
    ordering: str = ORDER_RANDOM

    def __post_init__(self) -> None:
        if not self.delimiter:
            raise ValueError("delimiter must be non-empty")
        if self.ordering not in (ORDER_RANDOM, ORDER_ASCENDING, ORDER_DESCENDING, ORDER_GIVEN):
            raise ValueError(f"unknown ordering policy: {self.ordering!r}")


@dataclass
class OffspringParser:
    """How completion text becomes candidate children."""

    validator: Callable[[str], bool] = lambda _: True
    split_delimiter: str = "\n"
    item_prefix: str = ""
    max_children: int = 3
    dedup_against_parents: bool = False

    def __post_init__(self) -> None:
        if self.max_children < 1:
            raise ValueError("max_children must be >= 1")


def order_parents(
    parents: Sequence[Individual], ordering: str, rng: Optional[RngStream]
) -> list[Individual]:
    if ordering == ORDER_GIVEN:
        return list(parents)
    if ordering == ORDER_RANDOM:
        if rng is None:
            raise ValueError("random ordering requires an RNG stream")
        items = list(parents)
        rng.shuffle(items)
        return items
    if any(not p.evaluated for p in parents):
        raise ValueError("fitness-based ordering requires all parents evaluated")
    reverse = ordering == ORDER_DESCENDING
    return sorted(parents, key=lambda p: p.fitness, reverse=reverse)


def format_prompt(
    parents: Sequence[Individual],
    template: PromptTemplate,
    rng: Optional[RngStream] = None,
    char_budget: int = DEFAULT_CHAR_BUDGET,
) -> str:
    """Build the parent prompt; raises PromptBudgetError if over budget."""
    if not parents:
        raise ValueError("parents must be non-empty")
    ordered = order_parents(parents, template.ordering, rng)
    parts: list[str] = []
    if template.header is not None:
        parts.append(template.header)
    parts.extend(template.item_prefix + p.genotype for p in ordered)
    prompt = template.delimiter.join(parts) + template.delimiter
    if template.trailer is not None:
        prompt += template.trailer
    if char_budget is not None and len(prompt) > char_budget:
        raise PromptBudgetError(
            f"prompt is {len(prompt)} chars, budget is {char_budget}"
        )
    return prompt


def _strip_item_prefix(line: str, prefix: str) -> str:
    if not prefix:
        return line
    if line.startswith(prefix):
        return line[len(prefix):].strip()
    bare = prefix.rstrip()
    if bare and line.startswith(bare):
        return line[len(bare):].strip()
    return line


def parse_offspring(
    completion: str,
    parser: OffspringParser,
    parents: Sequence[str] = (),
) -> list[str]:
    """Split a completion into validated candidate children.

    Splits on the parser delimiter, strips the item prefix where present,
    trims whitespace, drops blank or sub-2-char lines, applies the domain
    validator, optionally drops exact parent matches, and truncates to
    max_children. Surviving order follows the completion.
    """
    parent_set = {p.strip() for p in parents}
    children: list[str] = []
    for piece in completion.split(parser.split_delimiter):
        line = _strip_item_prefix(piece.strip(), parser.item_prefix)
        if len(line) < MIN_ITEM_CHARS:
            continue
        if not parser.validator(line):
            continue
        if parser.dedup_against_parents and line in parent_set:
            continue
        children.append(line)
        if len(children) >= parser.max_children:
            break
    return children


def lmx(
    parents: Sequence[Individual],
    engine: CompletionEngine,
    template: PromptTemplate,
    parser: OffspringParser,
    params: SamplingParams,
    rng: Optional[RngStream] = None,
    log: RunLog = NULL_LOG,
    char_budget: int = DEFAULT_CHAR_BUDGET,
    generation: Optional[int] = None,
) -> list[str]:
    """One crossover call: format parents, complete, extract children.

    Budget overruns and engine-internal failures are not fatal: the call is
    skipped, the cause is logged, and an empty child list is returned.
    Transport failures surviving the engine's retries are raised, since an
    unreachable engine dooms the whole run.
    """
    if not parents:
        raise ValueError("parents must be non-empty")
    try:
        prompt = format_prompt(parents, template, rng, char_budget)
    except PromptBudgetError as err:
        log.event(EVENT_LMX_CALL, generation, skipped="budget-exceeded", cause=str(err))
        return []
    try:
        response = engine.complete(CompletionRequest(prompt=prompt, params=params))
    except TransportError:
        # the engine is unreachable even after retries; that is fatal for
        # the whole run, not a per-call skip
        raise
    except EngineError as err:
        log.event(EVENT_LMX_CALL, generation, skipped="engine-error", cause=str(err), prompt=prompt)
        return []
    completion = response.text
    if template.trailer is not None and template.trailer_starts_child and completion:
        completion = template.trailer + completion
    children = parse_offspring(completion, parser, [p.genotype for p in parents])
    log.event(
        EVENT_LMX_CALL,
        generation,
        prompt=prompt,
        completion=response.text,
        children=children,
    )
    return children
