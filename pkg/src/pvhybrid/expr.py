"""Immutable expression trees used as the GP genotype.

Trees are nested frozen dataclasses.  Evaluation is vectorised over rows with
numpy; the scalar :func:`evaluate` is the batch path applied to a single row,
which is what makes the two bit-identical.

Every operator is total on finite inputs: division, log and sqrt are
protected, and every node's output is clipped to ``[-VALUE_BOUND,
VALUE_BOUND]`` so that products of huge operands cannot overflow.
"""

from __future__ import annotations

import enum
import math
import re
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ArityError, InputShapeError, ParseError, SymbolError

PROTECT_EPS = 1e-6
VALUE_BOUND = 1e100


class OpKind(enum.Enum):
    ADD = ("+", 2)
    SUB = ("-", 2)
    MUL = ("*", 2)
    DIV = ("/", 2)
    NEG = ("neg", 1)
    SIN = ("sin", 1)
    COS = ("cos", 1)
    LOG = ("log", 1)
    SQRT = ("sqrt", 1)

    @property
    def symbol(self) -> str:
        return self.value[0]

    @property
    def arity(self) -> int:
        return self.value[1]


SYMBOLS = {k.symbol: k for k in OpKind}
BINARY_OPS = tuple(k for k in OpKind if k.arity == 2)
UNARY_OPS = tuple(k for k in OpKind if k.arity == 1)


@dataclass(frozen=True)
class Operator:
    kind: OpKind
    children: tuple

    def __post_init__(self):
        if len(self.children) != self.kind.arity:
            raise ArityError(
                f"'{self.kind.symbol}' takes {self.kind.arity} argument(s), "
                f"got {len(self.children)}",
                0,
            )


@dataclass(frozen=True)
class Variable:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise InputShapeError(f"variable index must be >= 0, got {self.index}")


@dataclass(frozen=True, eq=False)
class Constant:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError(f"constant must be finite, got {self.value!r}")

    def _bits(self):
        return struct.pack("<d", float(self.value))

    # exact bit comparison: 0.0 and -0.0 are different constants
    def __eq__(self, other):
        if not isinstance(other, Constant):
            return NotImplemented
        return self._bits() == other._bits()

    def __hash__(self):
        return hash(("const", self._bits()))


ExprNode = Union[Operator, Variable, Constant]


@dataclass(frozen=True)
class ExprTree:
    root: ExprNode
    input_dim: int

    def __post_init__(self):
        if self.input_dim < 1:
            raise InputShapeError("input_dim must be positive")
        for node in iter_nodes(self.root):
            if isinstance(node, Variable) and node.index >= self.input_dim:
                raise InputShapeError(
                    f"variable x{node.index} out of range for input_dim {self.input_dim}"
                )

    def __str__(self):
        return print_sexpr(self)


def op(kind: OpKind, *children: ExprNode) -> Operator:
    return Operator(kind, tuple(children))


# ---------------------------------------------------------------------------
# structural queries


def iter_nodes(node: ExprNode) -> Iterator[ExprNode]:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Operator):
            stack.extend(reversed(n.children))


def node_count(node: ExprNode) -> int:
    return sum(1 for _ in iter_nodes(node))


def depth(node: ExprNode) -> int:
    if isinstance(node, Operator):
        return 1 + max(depth(c) for c in node.children)
    return 0


def size_and_depth(tree: ExprTree | ExprNode) -> tuple[int, int]:
    root = tree.root if isinstance(tree, ExprTree) else tree
    return node_count(root), depth(root)


def subtree_at(node: ExprNode, index: int) -> ExprNode:
    for i, n in enumerate(iter_nodes(node)):
        if i == index:
            return n
    raise IndexError(index)


def replace_subtree(node: ExprNode, index: int, new: ExprNode) -> ExprNode:
    """Return a copy of ``node`` whose pre-order ``index``-th subtree is ``new``."""

    def rec(n, offset):
        # returns (rebuilt node, size of n)
        if offset == index:
            return new, node_count(n)
        if not isinstance(n, Operator):
            return n, 1
        pos = offset + 1
        kids = []
        for c in n.children:
            rebuilt, size = rec(c, pos)
            kids.append(rebuilt)
            pos += size
        return Operator(n.kind, tuple(kids)), pos - offset

    return rec(node, 0)[0]


def node_kinds(node: ExprNode) -> list:
    """Kind labels used for structural comparisons: OpKind, 'var' or 'const'."""
    out = []
    for n in iter_nodes(node):
        if isinstance(n, Operator):
            out.append(n.kind)
        elif isinstance(n, Variable):
            out.append("var")
        else:
            out.append("const")
    return out


# ---------------------------------------------------------------------------
# evaluation


def _protected_div(a, b):
    safe = np.abs(b) >= PROTECT_EPS
    out = np.ones_like(a)
    np.divide(a, b, out=out, where=safe)
    return out


def _protected_log(a):
    return np.log(np.maximum(np.abs(a), PROTECT_EPS))


def _protected_sqrt(a):
    return np.sqrt(np.abs(a))


_UNARY = {
    OpKind.NEG: np.negative,
    OpKind.SIN: np.sin,
    OpKind.COS: np.cos,
    OpKind.LOG: _protected_log,
    OpKind.SQRT: _protected_sqrt,
}

_BINARY = {
    OpKind.ADD: np.add,
    OpKind.SUB: np.subtract,
    OpKind.MUL: np.multiply,
    OpKind.DIV: _protected_div,
}


def _bound(v):
    return np.clip(v, -VALUE_BOUND, VALUE_BOUND)


def _eval_node(node: ExprNode, X: np.ndarray) -> np.ndarray:
    if isinstance(node, Constant):
        return np.full(X.shape[0], node.value, dtype=np.float64)
    if isinstance(node, Variable):
        return _bound(X[:, node.index])
    args = [_eval_node(c, X) for c in node.children]
    if node.kind.arity == 1:
        return _bound(_UNARY[node.kind](args[0]))
    return _bound(_BINARY[node.kind](args[0], args[1]))


def evaluate_batch(tree: ExprTree, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, tree.input_dim)
    if X.ndim != 2 or X.shape[1] != tree.input_dim:
        raise InputShapeError(
            f"expected an n x {tree.input_dim} matrix, got shape {X.shape}"
        )
    # operands are bounded, so overflow lands on inf and is clipped back
    with np.errstate(over="ignore"):
        return _eval_node(tree.root, X)


def evaluate(tree: ExprTree, row: Sequence[float]) -> float:
    x = np.asarray(row, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != tree.input_dim:
        raise InputShapeError(
            f"expected a row of length {tree.input_dim}, got shape {x.shape}"
        )
    return float(evaluate_batch(tree, x[None, :])[0])


# ---------------------------------------------------------------------------
# s-expressions

_TOKEN = re.compile(rb"\s*(?:(\()|(\))|([^\s()]+))")
_VAR = re.compile(r"x(0|[1-9][0-9]*)\Z")


def _format_const(value: float) -> str:
    return repr(float(value))


def _print_node(node: ExprNode, out: list) -> None:
    if isinstance(node, Constant):
        out.append(_format_const(node.value))
    elif isinstance(node, Variable):
        out.append(f"x{node.index}")
    else:
        out.append("(" + node.kind.symbol)
        for c in node.children:
            out.append(" ")
            _print_node(c, out)
        out.append(")")


def print_sexpr(tree: ExprTree | ExprNode) -> str:
    root = tree.root if isinstance(tree, ExprTree) else tree
    out: list = []
    _print_node(root, out)
    return "".join(out)


def _tokenize(data: bytes):
    pos = 0
    tokens = []
    while pos < len(data):
        m = _TOKEN.match(data, pos)
        if m is None or m.end() == pos:
            break
        if m.lastindex is None:
            break
        start = m.start(m.lastindex)
        tokens.append((m.group(m.lastindex).decode("utf-8"), start))
        pos = m.end()
    return tokens


def _parse_atom(tok: str, offset: int) -> ExprNode:
    m = _VAR.match(tok)
    if m:
        return Variable(int(m.group(1)))
    if tok in SYMBOLS:
        raise ParseError(f"operator '{tok}' used as a terminal", offset)
    try:
        value = float(tok)
    except ValueError:
        raise SymbolError(f"unknown symbol '{tok}'", offset) from None
    if not math.isfinite(value):
        raise SymbolError(f"non-finite constant '{tok}'", offset)
    return Constant(value)


def parse_sexpr(text: str, input_dim: int) -> ExprTree:
    """Parse ``text`` (grammar ``expr := atom | "(" op expr+ ")"``) into a tree."""
    data = text.encode("utf-8")
    tokens = _tokenize(data)
    if not tokens:
        raise ParseError("empty expression", len(data))
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", len(data))
        tok, offset = tokens[pos]
        pos += 1
        if tok == ")":
            raise ParseError("unexpected ')'", offset)
        if tok != "(":
            return _parse_atom(tok, offset)
        if pos >= len(tokens):
            raise ParseError("unexpected end of input after '('", len(data))
        name, name_offset = tokens[pos]
        pos += 1
        if name in ("(", ")"):
            raise ParseError("expected an operator after '('", name_offset)
        kind = SYMBOLS.get(name)
        if kind is None:
            raise SymbolError(f"unknown operator '{name}'", name_offset)
        children = []
        while True:
            if pos >= len(tokens):
                raise ParseError("missing ')'", len(data))
            if tokens[pos][0] == ")":
                pos += 1
                break
            children.append(parse())
        if len(children) != kind.arity:
            raise ArityError(
                f"'{name}' takes {kind.arity} argument(s), got {len(children)}",
                offset,
            )
        return Operator(kind, tuple(children))

    root = parse()
    if pos != len(tokens):
        raise ParseError("trailing input", tokens[pos][1])
    return ExprTree(root, input_dim)
