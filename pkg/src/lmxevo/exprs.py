"""Math expression trees: grammar, parser, serializer, safe vectorized
evaluation, node counting, constant-folding simplification, and subtree
crossover.

The grammar is a small arithmetic subset: numbers, variables x1..xd, unary
functions (neg, sin, cos, tan, exp, log, sqrt, abs), and binary operators
(+ - * / **) with Python precedence (** right-associative and tighter than
unary minus). Anything else -- comparisons, unknown identifiers, trailing
garbage -- is a parse failure, which downstream code treats as an invalid
genotype rather than an error.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import RngStream

UNARY_OPS = ("neg", "sin", "cos", "tan", "exp", "log", "sqrt", "abs")
BINARY_OPS = ("+", "-", "*", "/", "**")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")

MAX_TREE_DEPTH = 17


class ExprParseError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("constants must be finite")


@dataclass(frozen=True)
class Variable:
    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("variable indices start at 1")


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Constant, Variable, Unary, Binary]


# --- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[+\-*/()])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    text = text.strip()
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            rest = text[pos:].strip()
            raise ExprParseError(f"unexpected input at {rest[:10]!r}")
        if match.lastgroup is not None:
            tokens.append((match.lastgroup, match.group(match.lastgroup)))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]) -> None:
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Optional[tuple[str, str]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise ExprParseError("unexpected end of expression")
        self.pos += 1
        return tok

    def expect(self, value: str) -> None:
        tok = self.take()
        if tok[1] != value:
            raise ExprParseError(f"expected {value!r}, got {tok[1]!r}")

    def additive(self) -> Expr:
        node = self.multiplicative()
        while (tok := self.peek()) and tok[1] in ("+", "-"):
            self.take()
            node = Binary(tok[1], node, self.multiplicative())
        return node

    def multiplicative(self) -> Expr:
        node = self.unary()
        while (tok := self.peek()) and tok[1] in ("*", "/"):
            self.take()
            node = Binary(tok[1], node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok and tok[1] == "-":
            self.take()
            operand = self.unary()
            # fold a leading minus on a literal so serialization round-trips
            if isinstance(operand, Constant):
                return Constant(-operand.value)
            return Unary("neg", operand)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok and tok[1] == "**":
            self.take()
            return Binary("**", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, value = self.take()
        if kind == "number":
            return Constant(float(value))
        if kind == "name":
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.additive()
                self.expect(")")
                return Unary(value, arg)
            var = re.fullmatch(r"x([1-9]\d*)", value)
            if var:
                return Variable(int(var.group(1)))
            raise ExprParseError(f"unknown identifier {value!r}")
        if value == "(":
            inner = self.additive()
            self.expect(")")
            return inner
        raise ExprParseError(f"unexpected token {value!r}")


def parse_expression(text: str) -> Expr:
    tokens = _tokenize(text)
    if not tokens:
        raise ExprParseError("empty expression")
    parser = _Parser(tokens)
    node = parser.additive()
    if parser.peek() is not None:
        raise ExprParseError(f"trailing input at {parser.peek()[1]!r}")
    return node


def try_parse(text: str) -> Optional[Expr]:
    try:
        return parse_expression(text)
    except ExprParseError:
        return None


# --- serialization -----------------------------------------------------------

_BIN_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "**": 4}
_UNARY_PREC = 3
_ATOM_PREC = 5


def _prec(expr: Expr) -> int:
    if isinstance(expr, Binary):
        return _BIN_PREC[expr.op]
    if isinstance(expr, Unary) and expr.op == "neg":
        return _UNARY_PREC
    if isinstance(expr, Constant) and expr.value < 0:
        # renders with a leading minus, so it binds like a unary minus
        return _UNARY_PREC
    return _ATOM_PREC


def _render(expr: Expr, min_prec: int) -> str:
    if isinstance(expr, Constant):
        text = repr(float(expr.value))
        if expr.value < 0 and _prec(expr) < min_prec:
            return f"({text})"
        return text
    if isinstance(expr, Variable):
        return f"x{expr.index}"
    if isinstance(expr, Unary):
        if expr.op == "neg":
            inner = _render(expr.operand, _UNARY_PREC)
            # avoid "--x"; wrap a directly nested minus
            if inner.startswith("-"):
                inner = f"({inner})"
            text = f"-{inner}"
            return f"({text})" if _UNARY_PREC < min_prec else text
        return f"{expr.op}({_render(expr.operand, 0)})"
    prec = _BIN_PREC[expr.op]
    if expr.op == "**":
        # left operand must be an atom; exponent may be a unary chain
        left = _render(expr.left, _ATOM_PREC)
        right = _render(expr.right, _UNARY_PREC)
    else:
        left = _render(expr.left, prec)
        right = _render(expr.right, prec + 1)
    text = f"{left}{expr.op}{right}" if expr.op == "**" else f"{left} {expr.op} {right}"
    return f"({text})" if prec < min_prec else text


def serialize(expr: Expr) -> str:
    """Text form that parses back to a structurally identical tree.

    Constants render via repr(), preserving up to 17 significant digits so
    tuned constants survive round trips.
    """
    return _render(expr, 0)


# --- evaluation --------------------------------------------------------------

_UNARY_FNS = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


class _Invalid(Exception):
    pass


def _eval_node(expr: Expr, X: np.ndarray) -> np.ndarray:
    if isinstance(expr, Constant):
        return np.full(X.shape[0], expr.value, dtype=float)
    if isinstance(expr, Variable):
        if expr.index > X.shape[1]:
            raise _Invalid
        return X[:, expr.index - 1].astype(float)
    if isinstance(expr, Unary):
        value = _UNARY_FNS[expr.op](_eval_node(expr.operand, X))
    else:
        left = _eval_node(expr.left, X)
        right = _eval_node(expr.right, X)
        if expr.op == "+":
            value = left + right
        elif expr.op == "-":
            value = left - right
        elif expr.op == "*":
            value = left * right
        elif expr.op == "/":
            value = left / right
        else:
            value = np.power(left, right)
    if not np.all(np.isfinite(value)):
        raise _Invalid
    return value


def evaluate(expr: Expr, X: np.ndarray) -> Optional[np.ndarray]:
    """Element-wise evaluation over the rows of X.

    Any non-finite intermediate (division by zero, log of a non-positive,
    sqrt of a negative, overflow) marks the whole expression invalid and
    None is returned.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix (rows = samples)")
    with np.errstate(all="ignore"):
        try:
            return _eval_node(expr, X)
        except _Invalid:
            return None


def expression_size(expr: Expr) -> int:
    """Number of nodes in the parse tree; every node kind counts 1."""
    if isinstance(expr, (Constant, Variable)):
        return 1
    if isinstance(expr, Unary):
        return 1 + expression_size(expr.operand)
    return 1 + expression_size(expr.left) + expression_size(expr.right)


def depth(expr: Expr) -> int:
    if isinstance(expr, (Constant, Variable)):
        return 1
    if isinstance(expr, Unary):
        return 1 + depth(expr.operand)
    return 1 + max(depth(expr.left), depth(expr.right))


# --- simplification ----------------------------------------------------------


def _fold_unary(op: str, value: float) -> Optional[float]:
    # fold with the evaluator's own arithmetic so a folded constant is
    # bit-identical to what evaluation of the subtree would have produced
    with np.errstate(all="ignore"):
        result = float(_UNARY_FNS[op](np.float64(value)))
    return result if math.isfinite(result) else None


def _fold_binary(op: str, left: float, right: float) -> Optional[float]:
    a, b = np.float64(left), np.float64(right)
    with np.errstate(all="ignore"):
        if op == "+":
            result = a + b
        elif op == "-":
            result = a - b
        elif op == "*":
            result = a * b
        elif op == "/":
            result = a / b
        else:
            result = np.power(a, b)
    result = float(result)
    return result if math.isfinite(result) else None


def _is_const(expr: Expr, value: float) -> bool:
    return isinstance(expr, Constant) and expr.value == value


def simplify(expr: Expr) -> Expr:
    """Constant folding plus identity elimination.

    Folds operators over all-constant children (left unfolded if the result
    would be non-finite), removes x+0, x*1, x**1, x*0 -> 0, x/1, and double
    negation. The result evaluates identically wherever the original is
    valid, and node count never increases.
    """
    if isinstance(expr, (Constant, Variable)):
        return expr
    if isinstance(expr, Unary):
        operand = simplify(expr.operand)
        if expr.op == "neg" and isinstance(operand, Unary) and operand.op == "neg":
            return operand.operand
        if isinstance(operand, Constant):
            folded = _fold_unary(expr.op, operand.value)
            if folded is not None:
                return Constant(folded)
        return Unary(expr.op, operand)
    left = simplify(expr.left)
    right = simplify(expr.right)
    if isinstance(left, Constant) and isinstance(right, Constant):
        folded = _fold_binary(expr.op, left.value, right.value)
        if folded is not None:
            return Constant(folded)
    if expr.op == "+":
        if _is_const(left, 0.0):
            return right
        if _is_const(right, 0.0):
            return left
    elif expr.op == "-":
        if _is_const(right, 0.0):
            return left
    elif expr.op == "*":
        if _is_const(left, 0.0) or _is_const(right, 0.0):
            return Constant(0.0)
        if _is_const(left, 1.0):
            return right
        if _is_const(right, 1.0):
            return left
    elif expr.op == "/":
        if _is_const(right, 1.0):
            return left
    elif expr.op == "**":
        if _is_const(right, 1.0):
            return left
    return Binary(expr.op, left, right)


# --- structural edits --------------------------------------------------------


def canonical(expr: Expr) -> Expr:
    """Fold a minus applied to a literal into a negative constant.

    The parser always produces this form ("-2.0" is one Constant node), so
    synthesized trees must match it for text round trips to be structural.
    """
    if isinstance(expr, (Constant, Variable)):
        return expr
    if isinstance(expr, Unary):
        operand = canonical(expr.operand)
        if expr.op == "neg" and isinstance(operand, Constant):
            return Constant(-operand.value)
        return Unary(expr.op, operand)
    return Binary(expr.op, canonical(expr.left), canonical(expr.right))


def subtrees(expr: Expr) -> list[Expr]:
    """All subtrees in preorder (the tree itself first)."""
    out = [expr]
    if isinstance(expr, Unary):
        out.extend(subtrees(expr.operand))
    elif isinstance(expr, Binary):
        out.extend(subtrees(expr.left))
        out.extend(subtrees(expr.right))
    return out


def _replace_at(expr: Expr, target_index: int, replacement: Expr) -> tuple[Expr, int]:
    """Rebuild expr with the preorder node at target_index swapped out.

    Returns (new tree, nodes consumed); trees are immutable so untouched
    subtrees are shared.
    """
    if target_index == 0:
        return replacement, expression_size(expr)
    if isinstance(expr, (Constant, Variable)):
        return expr, 1
    if isinstance(expr, Unary):
        child, used = _replace_at(expr.operand, target_index - 1, replacement)
        return Unary(expr.op, child), used + 1
    left, used_left = _replace_at(expr.left, target_index - 1, replacement)
    remaining = target_index - 1 - used_left
    if remaining < 0:
        return Binary(expr.op, left, expr.right), used_left + expression_size(expr.right) + 1
    right, used_right = _replace_at(expr.right, remaining, replacement)
    return Binary(expr.op, left, right), used_left + used_right + 1


def replace_subtree(expr: Expr, index: int, replacement: Expr) -> Expr:
    return _replace_at(expr, index, replacement)[0]


def subtree_crossover(p1: Expr, p2: Expr, rng: RngStream) -> Expr:
    """Swap a uniform random node of p1 for a uniform random subtree of p2.

    Children deeper than the depth cap are rejected and a copy of p1 is
    returned instead.
    """
    cut = rng.randrange(expression_size(p1))
    donor = rng.choice(subtrees(p2))
    child = canonical(replace_subtree(p1, cut, donor))
    if depth(child) > MAX_TREE_DEPTH:
        return p1
    return child


def random_tree(rng: RngStream, max_depth: int = 4, var_count: int = 2) -> Expr:
    """Random grammar-valid tree, used for seeding tests and fuzzing."""
    if max_depth <= 1:
        if rng.uniform() < 0.5:
            return Variable(1 + rng.randrange(var_count))
        return Constant(round(float(rng.gen.uniform(-3.0, 3.0)), 3))
    roll = rng.uniform()
    if roll < 0.25:
        return random_tree(rng, 1, var_count)
    if roll < 0.45:
        op = rng.choice(UNARY_OPS)
        return canonical(Unary(op, random_tree(rng, max_depth - 1, var_count)))
    op = rng.choice(BINARY_OPS)
    return Binary(
        op,
        random_tree(rng, max_depth - 1, var_count),
        random_tree(rng, max_depth - 1, var_count),
    )
