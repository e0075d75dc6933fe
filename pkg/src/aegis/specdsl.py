"""Safety specification language: parsing, boolean evaluation, quantitative reward.

A specification is built from comparison predicates over affine terms in the
state variables ``x0 .. x{n-1}`` (constants, ``+``, ``-``, ``*``, ``abs``),
combined with ``&`` (conjunction) and ``|`` (disjunction).  Precedence is
comparison > ``&`` > ``|``; parentheses override.

Besides plain boolean evaluation, every spec has a real-valued reward:

    reward(t < t')  = t' - t
    reward(t > t')  = t - t'
    reward(t = t')  = delta * [t == t']
    reward(t != t') = max(reward(t < t'), reward(t > t'))
    reward(t <= t') = max(reward(t < t'), reward(t = t'))
    reward(t >= t') = max(reward(t > t'), reward(t = t'))
    reward(a & b)   = min(reward(a), reward(b))
    reward(a | b)   = max(reward(a), reward(b))

The spec holds on a state iff its reward is strictly positive.  The reward of
a trajectory is the minimum reward over its states, so any single violating
state makes the whole trajectory non-positive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DELTA = 1e-3


class SpecError(ValueError):
    pass


class SpecSyntaxError(SpecError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    pass


@dataclass(frozen=True)
class Const(Term):
    value: float


@dataclass(frozen=True)
class Var(Term):
    index: int


@dataclass(frozen=True)
class Add(Term):
    a: Term
    b: Term


@dataclass(frozen=True)
class Sub(Term):
    a: Term
    b: Term


@dataclass(frozen=True)
class Mul(Term):
    a: Term
    b: Term


@dataclass(frozen=True)
class Neg(Term):
    a: Term


@dataclass(frozen=True)
class Abs(Term):
    a: Term


@dataclass(frozen=True)
class Node:
    pass


COMPARISON_OPS = ("=", "!=", "<=", "<", ">=", ">")


@dataclass(frozen=True)
class Cmp(Node):
    op: str  # one of COMPARISON_OPS
    lhs: Term
    rhs: Term

    def __post_init__(self):
        if self.op not in COMPARISON_OPS:
            raise SpecError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class And(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Or(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class SafetySpec:
    """Parsed specification plus the equality reward constant."""

    root: Node
    delta: float = DEFAULT_DELTA
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.delta <= 0:
            raise SpecError(f"delta must be positive, got {self.delta}")

    @property
    def max_var_index(self) -> int:
        return _max_var(self.root)

    def check_dim(self, state_dim: int) -> None:
        need = self.max_var_index + 1
        if state_dim < need:
            raise SpecError(
                f"spec references x{self.max_var_index} but state has "
                f"dimension {state_dim}"
            )


def _max_var(node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Const):
        return -1
    if isinstance(node, (Neg, Abs)):
        return _max_var(node.a)
    if isinstance(node, (Add, Sub, Mul, And, Or)):
        return max(_max_var(node.a), _max_var(node.b))
    if isinstance(node, Cmp):
        return max(_max_var(node.lhs), _max_var(node.rhs))
    raise TypeError(f"unexpected node {node!r}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op><=|>=|!=|[<>=&|()+\-*]))"
)


def _tokenize(text: str):
    tokens = []  # (kind, value, line, col)
    line = 1
    line_start = 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            nl = text.count("\n", 0, pos)
            raise SpecSyntaxError(
                f"unexpected character {stripped[0]!r}",
                nl + 1,
                pos - (text.rfind("\n", 0, pos) + 1) + 1,
            )
        start = m.start(m.lastgroup)
        line = text.count("\n", 0, start) + 1
        col = start - (text.rfind("\n", 0, start) + 1) + 1
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), line, col))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), line, col))
        else:
            tokens.append(("op", m.group("op"), line, col))
        pos = m.end()
    tokens.append(("eof", None, line, len(text) + 1))
    return tokens


_VAR_RE = re.compile(r"^x(\d+)$")


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, value, line, col = self.peek()
        if kind != "op" or value != op:
            raise SpecSyntaxError(f"expected {op!r}", line, col)
        return self.advance()

    def error(self, message: str):
        _, _, line, col = self.peek()
        raise SpecSyntaxError(message, line, col)

    # boolean layer -----------------------------------------------------

    def parse_or(self) -> Node:
        node = self.parse_and()
        while self.peek()[:2] == ("op", "|"):
            self.advance()
            node = Or(node, self.parse_and())
        return node

    def parse_and(self) -> Node:
        node = self.parse_atom()
        while self.peek()[:2] == ("op", "&"):
            self.advance()
            node = And(node, self.parse_atom())
        return node

    def parse_atom(self) -> Node:
        # A leading '(' is ambiguous between a boolean group and a
        # parenthesised term, so try the comparison first and backtrack.
        saved = self.pos
        try:
            return self.parse_comparison()
        except SpecSyntaxError:
            self.pos = saved
        self.expect_op("(")
        node = self.parse_or()
        self.expect_op(")")
        return node

    def parse_comparison(self) -> Cmp:
        lhs = self.parse_term()
        kind, value, line, col = self.peek()
        if kind != "op" or value not in COMPARISON_OPS:
            raise SpecSyntaxError("expected comparison operator", line, col)
        self.advance()
        rhs = self.parse_term()
        return Cmp(value, lhs, rhs)

    # term layer --------------------------------------------------------

    def parse_term(self) -> Term:
        node = self.parse_product()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.advance()[1]
            rhs = self.parse_product()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def parse_product(self) -> Term:
        node = self.parse_unary()
        while self.peek()[:2] == ("op", "*"):
            self.advance()
            node = Mul(node, self.parse_unary())
        return node

    def parse_unary(self) -> Term:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Term:
        kind, value, line, col = self.peek()
        if kind == "num":
            self.advance()
            return Const(value)
        if kind == "ident":
            self.advance()
            if value == "abs":
                self.expect_op("(")
                inner = self.parse_term()
                self.expect_op(")")
                return Abs(inner)
            m = _VAR_RE.match(value)
            if m is None:
                raise SpecSyntaxError(f"unknown variable name {value!r}", line, col)
            return Var(int(m.group(1)))
        if (kind, value) == ("op", "("):
            self.advance()
            inner = self.parse_term()
            self.expect_op(")")
            return inner
        raise SpecSyntaxError("expected a term", line, col)


def parse_spec(text: str, delta: float = DEFAULT_DELTA) -> SafetySpec:
    """Parse a specification string into a :class:`SafetySpec`."""
    parser = _Parser(_tokenize(text))
    root = parser.parse_or()
    kind, value, line, col = parser.peek()
    if kind != "eof":
        raise SpecSyntaxError(f"unexpected trailing input {value!r}", line, col)
    return SafetySpec(root=root, delta=delta, source=text)


# ---------------------------------------------------------------------------
# Pretty printer (round-trips through parse_spec)
# ---------------------------------------------------------------------------

def _fmt_term(t: Term, parent_prec: int = 0) -> str:
    # precedence: sum 1, product 2, unary 3, atom 4
    if isinstance(t, Const):
        return repr(t.value)
    if isinstance(t, Var):
        return f"x{t.index}"
    if isinstance(t, Abs):
        return f"abs({_fmt_term(t.a, 0)})"
    if isinstance(t, Neg):
        s = f"-{_fmt_term(t.a, 3)}"
        return f"({s})" if parent_prec > 3 else s
    if isinstance(t, (Add, Sub)):
        op = "+" if isinstance(t, Add) else "-"
        s = f"{_fmt_term(t.a, 1)} {op} {_fmt_term(t.b, 2)}"
        return f"({s})" if parent_prec > 1 else s
    if isinstance(t, Mul):
        s = f"{_fmt_term(t.a, 2)} * {_fmt_term(t.b, 3)}"
        return f"({s})" if parent_prec > 2 else s
    raise TypeError(f"unexpected term {t!r}")


def _fmt_node(node: Node, parent_prec: int = 0) -> str:
    # precedence: or 1, and 2, comparison 3
    if isinstance(node, Cmp):
        return f"{_fmt_term(node.lhs)} {node.op} {_fmt_term(node.rhs)}"
    if isinstance(node, And):
        s = f"{_fmt_node(node.a, 2)} & {_fmt_node(node.b, 2)}"
        return f"({s})" if parent_prec > 2 else s
    if isinstance(node, Or):
        s = f"{_fmt_node(node.a, 1)} | {_fmt_node(node.b, 1)}"
        return f"({s})" if parent_prec > 1 else s
    raise TypeError(f"unexpected node {node!r}")


def spec_to_text(spec: SafetySpec) -> str:
    """Render the AST back to parseable text."""
    return _fmt_node(spec.root)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _term_eval(t: Term, x):
    """Evaluate a term on a state vector (d,) or a state batch (n, d)."""
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        return x[..., t.index]
    if isinstance(t, Add):
        return _term_eval(t.a, x) + _term_eval(t.b, x)
    if isinstance(t, Sub):
        return _term_eval(t.a, x) - _term_eval(t.b, x)
    if isinstance(t, Mul):
        return _term_eval(t.a, x) * _term_eval(t.b, x)
    if isinstance(t, Neg):
        return -_term_eval(t.a, x)
    if isinstance(t, Abs):
        return np.abs(_term_eval(t.a, x))
    raise TypeError(f"unexpected term {t!r}")


def _holds_eval(node: Node, x):
    if isinstance(node, Cmp):
        a = _term_eval(node.lhs, x)
        b = _term_eval(node.rhs, x)
        if node.op == "=":
            return a == b
        if node.op == "!=":
            return a != b
        if node.op == "<":
            return a < b
        if node.op == "<=":
            return a <= b
        if node.op == ">":
            return a > b
        return a >= b
    if isinstance(node, And):
        return np.logical_and(_holds_eval(node.a, x), _holds_eval(node.b, x))
    if isinstance(node, Or):
        return np.logical_or(_holds_eval(node.a, x), _holds_eval(node.b, x))
    raise TypeError(f"unexpected node {node!r}")


def _reward_eval(node: Node, x, delta: float):
    if isinstance(node, Cmp):
        a = _term_eval(node.lhs, x)
        b = _term_eval(node.rhs, x)
        if node.op == "<":
            return b - a
        if node.op == ">":
            return a - b
        if node.op == "=":
            return np.where(a == b, delta, 0.0)
        if node.op == "!=":
            return np.maximum(b - a, a - b)
        if node.op == "<=":
            return np.maximum(b - a, np.where(a == b, delta, 0.0))
        return np.maximum(a - b, np.where(a == b, delta, 0.0))
    if isinstance(node, And):
        return np.minimum(_reward_eval(node.a, x, delta),
                          _reward_eval(node.b, x, delta))
    if isinstance(node, Or):
        return np.maximum(_reward_eval(node.a, x, delta),
                          _reward_eval(node.b, x, delta))
    raise TypeError(f"unexpected node {node!r}")


def _as_state(spec: SafetySpec, s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if arr.ndim != 1:
        raise SpecError(f"expected a state vector, got shape {arr.shape}")
    spec.check_dim(arr.shape[0])
    return arr


def holds(spec: SafetySpec, s) -> bool:
    """Boolean evaluation of the spec on a single state."""
    return bool(_holds_eval(spec.root, _as_state(spec, s)))


def safety_reward_state(spec: SafetySpec, s) -> float:
    """Quantitative reward of the spec on a single state."""
    return float(_reward_eval(spec.root, _as_state(spec, s), spec.delta))


def safety_reward_states(spec: SafetySpec, states) -> np.ndarray:
    """Vectorized reward over a (n, d) batch of states."""
    arr = np.asarray(states, dtype=float)
    if arr.ndim != 2:
        raise SpecError(f"expected a state batch, got shape {arr.shape}")
    spec.check_dim(arr.shape[1])
    return np.asarray(_reward_eval(spec.root, arr, spec.delta), dtype=float)


def safety_reward_traj(spec: SafetySpec, traj) -> float:
    """Trajectory reward: the minimum state reward along the trajectory.

    Accepts a Trajectory from envsim or any (n, d) state array.
    """
    states = getattr(traj, "states", traj)
    arr = np.asarray(states, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] == 0:
        raise SpecError("cannot evaluate an empty trajectory")
    return float(np.min(safety_reward_states(spec, arr)))
