import io

import pytest
from hypothesis import given, settings, strategies as st

from lmxevo.backends import EngineError, CompletionEngine, CompletionResponse, SamplingParams, make_replay_engine, make_umda_mock
from lmxevo.core import Individual, RngStream, RunLog
from lmxevo.exprs import try_parse
from lmxevo.operator import (
    OffspringParser,
    PromptBudgetError,
    PromptTemplate,
    format_prompt,
    lmx,
    parse_offspring,
)

PASS_ALL = OffspringParser(validator=lambda _: True, max_children=10)


def given_template(**kwargs):
    return PromptTemplate(ordering="given", **kwargs)


genotype_texts = st.text(
    alphabet=st.characters(blacklist_characters="\n", blacklist_categories=("Cs", "Cc")),
    min_size=2,
    max_size=12,
).filter(lambda s: s.strip() == s and len(s.strip()) >= 2)


class TestFormatPrompt:
    def test_plain_concatenation(self):
        prompt = format_prompt([Individual("01"), Individual("10")], given_template())
        assert prompt == "01\n10\n"

    def test_ascending_fitness_order(self):
        parents = [
            Individual("a3", fitness=3.0),
            Individual("a1", fitness=1.0),
            Individual("a2", fitness=2.0),
        ]
        prompt = format_prompt(parents, PromptTemplate(ordering="ascending-fitness"))
        assert prompt == "a1\na2\na3\n"

    def test_descending_fitness_order(self):
        parents = [Individual("a1", fitness=1.0), Individual("a2", fitness=2.0)]
        prompt = format_prompt(parents, PromptTemplate(ordering="descending-fitness"))
        assert prompt == "a2\na1\n"

    def test_expression_prompt_header_and_seven_parents(self):
        parents = [Individual(f"x{i} + {i}") for i in range(1, 8)]
        template = given_template(
            header="Below are 10 expressions that approximate the dataset:"
        )
        prompt = format_prompt(parents, template)
        lines = prompt.split("\n")
        assert lines[0] == "Below are 10 expressions that approximate the dataset:"
        assert lines[1:8] == [p.genotype for p in parents]
        assert lines[8] == ""

    def test_trailer_appended_after_final_delimiter(self):
        prompt = format_prompt(
            [Individual("one"), Individual("two")],
            given_template(item_prefix="Prompt: ", trailer="Prompt:"),
        )
        assert prompt == "Prompt: one\nPrompt: two\nPrompt:"

    def test_budget_error(self):
        with pytest.raises(PromptBudgetError):
            format_prompt([Individual("x" * 100)], given_template(), char_budget=50)

    def test_random_order_is_deterministic_per_stream(self):
        parents = [Individual(f"g{i}") for i in range(6)]
        one = format_prompt(parents, PromptTemplate(), RngStream(5, "order"))
        two = format_prompt(parents, PromptTemplate(), RngStream(5, "order"))
        assert one == two

    def test_unevaluated_parents_cannot_sort(self):
        with pytest.raises(ValueError):
            format_prompt(
                [Individual("aa"), Individual("bb")],
                PromptTemplate(ordering="ascending-fitness"),
            )

    @settings(max_examples=50, deadline=None)
    @given(st.lists(genotype_texts, min_size=1, max_size=8), st.integers(0, 2**31))
    def test_random_order_preserves_multiset(self, texts, seed):
        parents = [Individual(t) for t in texts]
        prompt = format_prompt(
            parents, PromptTemplate(), RngStream(seed, "shuffle"), char_budget=10_000
        )
        items = [line for line in prompt.split("\n") if line != ""]
        assert sorted(items) == sorted(texts)


class TestParseOffspring:
    def test_validator_filters(self):
        parser = OffspringParser(validator=lambda s: len(s) == 3 and set(s) <= set("01"))
        assert parse_offspring("110\n011\nxyz", parser) == ["110", "011"]

    def test_cap_three_children(self):
        parser = OffspringParser(validator=lambda _: True, max_children=3)
        assert parse_offspring("aa\nbb\ncc\ndd", parser) == ["aa", "bb", "cc"]

    def test_sub_two_char_lines_dropped(self):
        parser = OffspringParser(validator=lambda _: True, max_children=5)
        assert parse_offspring("a\nbb\n?\ncc", parser) == ["bb", "cc"]

    def test_dedup_against_parents(self):
        parser = OffspringParser(
            validator=lambda _: True, max_children=3, dedup_against_parents=True
        )
        assert parse_offspring("abba", parser, parents=["abba"]) == []

    def test_item_prefix_stripped(self):
        parser = OffspringParser(validator=lambda _: True, item_prefix="Prompt: ")
        assert parse_offspring("Prompt: hello\nPrompt: there", parser) == ["hello", "there"]

    def test_whitespace_trimmed_and_blanks_dropped(self):
        parser = OffspringParser(validator=lambda _: True, max_children=9)
        assert parse_offspring("  aa  \n\n \nbb", parser) == ["aa", "bb"]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(genotype_texts, min_size=1, max_size=6))
    def test_round_trip_through_prompt(self, texts):
        parents = [Individual(t) for t in texts]
        prompt = format_prompt(parents, given_template(), char_budget=100_000)
        parser = OffspringParser(validator=lambda _: True, max_children=len(texts))
        assert parse_offspring(prompt, parser) == texts

    @settings(max_examples=50, deadline=None)
    @given(st.text(max_size=200), st.integers(1, 5))
    def test_never_exceeds_cap_and_respects_validator(self, completion, cap):
        parser = OffspringParser(validator=lambda s: "z" not in s, max_children=cap)
        children = parse_offspring(completion, parser)
        assert len(children) <= cap
        assert all("z" not in c for c in children)


VIOLET_CHILDREN = [
    "sin(2.1*x1)*cos(0.9*x2) + 6.5",
    "1.5*sin(2.1*x1)*cos(0.5*x2)*exp(x1) + 5.5",
    "sin(0.5*x2)*exp(x2) - 5",
]

DISCARDED_TAIL = [
    "x1**2*(x2 - 5)*(2.1*sin(x1)**2*cos(x1) - 1)*exp(-x1)*sin(x1)*cos(x1)",
    "",
    "Answer:",
    "",
]


class TestLmx:
    def test_degenerate_marginals_reproduce_parents(self):
        engine = make_umda_mock(["11", "11"])
        parents = [Individual("11"), Individual("11")]
        parser = OffspringParser(
            validator=lambda s: len(s) == 2 and set(s) <= set("01"), max_children=3
        )
        children = lmx(
            parents, engine, given_template(), parser, SamplingParams(rng_seed=1)
        )
        assert children == ["11", "11", "11"]

    def test_recorded_completion_yields_first_three_valid_expressions(self):
        parents = [Individual(f"x1**{i} + x2") for i in range(1, 8)]
        prompt = format_prompt(parents, given_template(), char_budget=100_000)
        completion = "\n".join(VIOLET_CHILDREN + DISCARDED_TAIL)
        engine = make_replay_engine([(prompt, completion)])
        parser = OffspringParser(validator=lambda s: try_parse(s) is not None, max_children=3)
        children = lmx(
            parents,
            engine,
            given_template(),
            parser,
            SamplingParams(),
            char_budget=100_000,
        )
        assert children == VIOLET_CHILDREN

    def test_empty_completion_yields_no_children(self):
        engine = make_replay_engine([("aa\nbb\n", "")])
        children = lmx(
            [Individual("aa"), Individual("bb")],
            engine,
            given_template(),
            PASS_ALL,
            SamplingParams(),
        )
        assert children == []

    def test_budget_exceeded_is_skipped_and_logged(self):
        buffer = io.StringIO()
        engine = make_umda_mock(["11"])
        children = lmx(
            [Individual("11" * 300)],
            engine,
            given_template(),
            PASS_ALL,
            SamplingParams(),
            log=RunLog(buffer),
            char_budget=100,
        )
        assert children == []
        assert "budget-exceeded" in buffer.getvalue()

    def test_engine_error_is_skipped_and_logged(self):
        class Exploding(CompletionEngine):
            def complete(self, req):
                raise EngineError("synthetic failure")

        buffer = io.StringIO()
        children = lmx(
            [Individual("aa")],
            Exploding(),
            given_template(),
            PASS_ALL,
            SamplingParams(),
            log=RunLog(buffer),
        )
        assert children == []
        assert "engine-error" in buffer.getvalue()

    def test_forced_trailer_prepends_first_child(self):
        class OneLine(CompletionEngine):
            def complete(self, req):
                return CompletionResponse(text=" tail of first\nsecond")

        template = given_template(trailer="def walker():", trailer_starts_child=True)
        children = lmx(
            [Individual("aa")],
            OneLine(),
            template,
            OffspringParser(validator=lambda _: True, max_children=5),
            SamplingParams(),
        )
        assert children == ["def walker(): tail of first", "second"]

    def test_prompt_and_children_are_logged(self):
        buffer = io.StringIO()
        engine = make_umda_mock(["11", "11"])
        lmx(
            [Individual("11"), Individual("11")],
            engine,
            given_template(),
            OffspringParser(validator=lambda s: set(s) <= set("01"), max_children=2),
            SamplingParams(rng_seed=0),
            log=RunLog(buffer),
        )
        record = buffer.getvalue()
        assert '"prompt": "11\\n11\\n"' in record
        assert '"children": ["11", "11"]' in record
