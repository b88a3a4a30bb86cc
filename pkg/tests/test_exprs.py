import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmxevo.core import RngStream
from lmxevo.exprs import (
    Binary,
    Constant,
    ExprParseError,
    Unary,
    Variable,
    depth,
    evaluate,
    expression_size,
    parse_expression,
    random_tree,
    replace_subtree,
    serialize,
    simplify,
    subtree_crossover,
    subtrees,
    try_parse,
)

KNOWN_PARENT_EXPRESSIONS = [
    "sin(1.5*x1)*cos(0.5*x2)",
    "x2**3 + x2**2 + x2 + sin(x2) + sin(x2**2)",
    "1.5*exp(x1) + 5.0*cos(x1)",
    "x1**3*(x2 - 5)*(sin(x1)**2*cos(x1) - 1)*exp(-x1)*sin(x1)*cos(x1)",
    "-2.1*sin(1.3*x2)*cos(9.8*x1) + 2",
    "sin(x2**2)*cos(x2) - 5",
    "exp(-(x1 - 1)**2)/(6.25*(0.4*x1 - 1)**2 + 1.2)",
    "x1*x2/((x2 - 3)**2 + 1)",
    "x2**2/(10000*((x1 - 3)**2 + (x2 - 3)**2 + 4))",
    "x1*x2/((x1 - 3)**2 + (x2 - 3)**2 + 2)",
    "(x2 - 3)/((x2 - 3)**2 + 1)**2",
    "exp(-x1**2)",
    "x1*x2**2/((x1 - 3)**2 + 2)",
]

COMPARISON_LINES = [
    "x1**2 + x1*x2 + 1 < 2.407303205449004",
    "(x1**2 + x1*x2 + 1)**2 < 1.529026864021614135",
    "sqrt(x1**2 + x1*x2 + x2**2 + 1) < 3.425986639014800117",
    "sqrt(x1**2 + x1*x2 + 2*x2**2 + 1) < 1.5",
]


class TestParse:
    def test_single_variable(self):
        assert parse_expression("x1") == Variable(1)

    def test_known_product_structure(self):
        tree = parse_expression("sin(1.5*x1)*cos(0.5*x2)")
        assert tree == Binary(
            "*",
            Unary("sin", Binary("*", Constant(1.5), Variable(1))),
            Unary("cos", Binary("*", Constant(0.5), Variable(2))),
        )

    @pytest.mark.parametrize("text", COMPARISON_LINES)
    def test_comparisons_fail_to_parse(self, text):
        with pytest.raises(ExprParseError):
            parse_expression(text)

    @pytest.mark.parametrize(
        "text", ["", "foo(x1)", "x0", "x", "1 +", "(x1", "x1 x2", "x1 & x2", "sin", "1..2"]
    )
    def test_rejects_garbage(self, text):
        assert try_parse(text) is None

    def test_power_is_right_associative(self):
        assert parse_expression("2**3**2") == Binary(
            "**", Constant(2.0), Binary("**", Constant(3.0), Constant(2.0))
        )

    def test_unary_minus_binds_looser_than_power(self):
        assert parse_expression("-2**2") == Unary(
            "neg", Binary("**", Constant(2.0), Constant(2.0))
        )

    def test_negative_exponent(self):
        assert parse_expression("2**-1") == Binary("**", Constant(2.0), Constant(-1.0))

    def test_negative_literal_folds(self):
        assert parse_expression("-1.5") == Constant(-1.5)

    def test_precedence_of_terms(self):
        assert parse_expression("1 + 2*x1") == Binary(
            "+", Constant(1.0), Binary("*", Constant(2.0), Variable(1))
        )

    def test_whitespace_tolerated(self):
        assert parse_expression("  sin( x1 ) ") == Unary("sin", Variable(1))

    @pytest.mark.parametrize("text", KNOWN_PARENT_EXPRESSIONS)
    def test_known_parent_expressions_parse(self, text):
        assert try_parse(text) is not None


class TestRoundTrip:
    def test_random_trees_round_trip(self):
        rng = RngStream(11, "trees")
        for _ in range(300):
            tree = random_tree(rng, max_depth=6)
            assert parse_expression(serialize(tree)) == tree

    @pytest.mark.parametrize("text", KNOWN_PARENT_EXPRESSIONS)
    def test_reserialization_is_stable(self, text):
        tree = parse_expression(text)
        assert parse_expression(serialize(tree)) == tree

    def test_seventeen_digit_constants_survive(self):
        value = 2.407303205449004
        tree = parse_expression(f"x1 + {value!r}")
        assert parse_expression(serialize(tree)) == tree
        assert tree.right.value == value


class TestEvaluate:
    def test_sum(self):
        out = evaluate(parse_expression("x1+x2"), np.array([[1.0, 2.0]]))
        assert out is not None and out.tolist() == [3.0]

    def test_division_by_zero_invalidates(self):
        assert evaluate(parse_expression("1/x1"), np.array([[0.0], [1.0]])) is None

    def test_sqrt(self):
        out = evaluate(parse_expression("sqrt(x1)"), np.array([[4.0]]))
        assert out.tolist() == [2.0]

    def test_sqrt_of_negative_invalidates(self):
        assert evaluate(parse_expression("sqrt(x1)"), np.array([[-1.0]])) is None

    def test_log_of_nonpositive_invalidates(self):
        assert evaluate(parse_expression("log(x1)"), np.array([[0.0]])) is None

    def test_overflow_invalidates(self):
        assert evaluate(parse_expression("exp(x1)"), np.array([[1e6]])) is None

    def test_non_finite_intermediate_invalidates_even_if_masked(self):
        # 1/x1 is infinite at 0; multiplying by 0 afterwards must not hide it
        assert evaluate(parse_expression("(1/x1)*0"), np.array([[0.0]])) is None

    def test_variable_beyond_columns_invalidates(self):
        assert evaluate(parse_expression("x3"), np.array([[1.0, 2.0]])) is None


class TestExpressionSize:
    @pytest.mark.parametrize(
        "text,size", [("x1", 1), ("x1+x2", 3), ("sin(1.5*x1)*cos(0.5*x2)", 9)]
    )
    def test_node_counts(self, text, size):
        assert expression_size(parse_expression(text)) == size


class TestSimplify:
    def test_constant_folding(self):
        assert simplify(parse_expression("1+2")) == Constant(3.0)

    def test_multiplicative_identity(self):
        assert simplify(parse_expression("x1*1")) == Variable(1)

    def test_zero_annihilates(self):
        assert simplify(parse_expression("sin(x1)+0*x2")) == Unary("sin", Variable(1))

    def test_double_negation(self):
        assert simplify(Unary("neg", Unary("neg", Variable(1)))) == Variable(1)

    def test_power_and_division_identities(self):
        assert simplify(parse_expression("x1**1")) == Variable(1)
        assert simplify(parse_expression("x1/1")) == Variable(1)
        assert simplify(parse_expression("x1+0")) == Variable(1)

    def test_non_finite_fold_left_alone(self):
        tree = parse_expression("exp(1000000)")
        assert simplify(tree) == tree

    def test_zero_times_x_matches_original_pointwise(self):
        original = parse_expression("sin(x1)+0*x2")
        reduced = simplify(original)
        X = np.random.default_rng(3).uniform(-3, 3, size=(100, 2))
        a = evaluate(original, X)
        b = evaluate(reduced, X)
        assert np.allclose(a, b, atol=1e-9)

    def test_simplify_preserves_values_and_size_on_random_trees(self):
        rng = RngStream(23, "simplify")
        points = np.random.default_rng(5).uniform(-2.5, 2.5, size=(100, 2))
        checked = 0
        for _ in range(300):
            tree = random_tree(rng, max_depth=5)
            reduced = simplify(tree)
            assert expression_size(reduced) <= expression_size(tree)
            original_values = evaluate(tree, points)
            if original_values is None:
                continue
            reduced_values = evaluate(reduced, points)
            assert reduced_values is not None
            assert np.allclose(original_values, reduced_values, atol=1e-9)
            checked += 1
        assert checked > 50


class TestStructuralEdits:
    def test_replace_subtree_lands_at_preorder_index(self):
        tree = parse_expression("sin(x1) + x2*cos(x1+2)")
        marker = Variable(9)
        for index in range(expression_size(tree)):
            edited = replace_subtree(tree, index, marker)
            assert subtrees(edited)[index] == marker

    def test_single_node_crossover_returns_donor(self):
        child = subtree_crossover(Variable(1), Variable(2), RngStream(0, "c"))
        assert child == Variable(2)

    def test_self_crossover_is_identity(self):
        x = Variable(1)
        assert subtree_crossover(x, x, RngStream(1, "c")) == x

    def test_depth_cap_returns_first_parent(self):
        deep = Variable(1)
        for _ in range(16):
            deep = Unary("sin", deep)
        assert depth(deep) == 17
        rng = RngStream(2, "c")
        for _ in range(20):
            child = subtree_crossover(deep, deep, rng)
            assert depth(child) <= 17

    def test_crossover_child_parses(self):
        rng = RngStream(3, "c")
        p1 = parse_expression("x1 + sin(x2)")
        p2 = parse_expression("cos(x1)*x2")
        for _ in range(50):
            child = subtree_crossover(p1, p2, rng)
            assert parse_expression(serialize(child)) == child
