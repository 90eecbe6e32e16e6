"""Textual expressions: parsing, printing, substitution and dual-number evaluation.

Grammar (loosest binding first)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right associative
    primary := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^-1`` is ``2^(-1)``.
Expressions are compiled once to a Python closure over the functions of
:mod:`contact_reduce.dual`, so the same code path serves plain floats
and exact derivatives.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import dual
from .errors import DomainError, ParseError

FUNCTIONS = {"sin": 1, "cos": 1, "sqrt": 1, "exp": 1, "log": 1, "abs": 1, "atan2": 2}
CONSTANTS = {"pi": float(np.pi)}


# ----------------------------------------------------------------------
# tree
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    arg: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple
    offset: int = field(default=0, compare=False)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Const) and (node.value < 0 or str(node.value).startswith("-")):
        return 3
    return 5


def _fmt_const(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_text(node) -> str:
    """Minimal-parenthesis rendering that parses back to the same tree."""
    if isinstance(node, Const):
        s = _fmt_const(node.value)
        return s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.arg)
        if _prec(node.arg) < 3 or (isinstance(node.arg, Const) and node.arg.value < 0):
            inner = f"({inner})"
        return "-" + inner
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = to_text(node.left), to_text(node.right)
        if node.op == "^":
            if _prec(node.left) <= 4:
                left = f"({left})"
            if _prec(node.right) < 3:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte(text, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte(text, start)))
        pos = m.end()
    tokens.append(("end", "", _byte(text, n)))
    return tokens


def _byte(text, i):
    return len(text[:i].encode("utf-8"))


class _Parser:
    def __init__(self, text, names):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val, off = self.take()
        if kind != "op" or val != op:
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {op!r}, found {what}", off)

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            _, op, off = self.take()
            node = BinOp(op, node, self.term(), off)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            _, op, off = self.take()
            node = BinOp(op, node, self.unary(), off)
        return node

    def unary(self):
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary(), off)
        return self.power()

    def power(self):
        base = self.primary()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return BinOp("^", base, self.unary(), off)
        return base

    def primary(self):
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val), off)
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if val not in FUNCTIONS:
                    raise ParseError(f"unknown identifier {val!r} (not a function)", off)
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ParseError(
                        f"{val} expects {FUNCTIONS[val]} argument(s), got {len(args)}", off)
                return Call(val, tuple(args), off)
            if val in FUNCTIONS:
                raise ParseError(f"function {val!r} used without arguments", off)
            if val not in self.names and val in CONSTANTS:
                return Const(CONSTANTS[val], off)
            if val not in self.names:
                raise ParseError(f"unknown identifier {val!r}", off)
            return Var(val, off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}", off)


# ----------------------------------------------------------------------
# compilation to a closure
# ----------------------------------------------------------------------

class _Compiler:
    def __init__(self, index):
        self.index = index
        self.where = []

    def w(self, node):
        self.where.append(to_text(node))
        return f"_w[{len(self.where) - 1}]"

    def src(self, node):
        if isinstance(node, Const):
            return repr(float(node.value))
        if isinstance(node, Var):
            return f"_x[{self.index[node.name]}]"
        if isinstance(node, Neg):
            return f"(-{self.src(node.arg)})"
        if isinstance(node, BinOp):
            a, b = self.src(node.left), self.src(node.right)
            if node.op in "+-*":
                return f"({a} {node.op} {b})"
            if node.op == "/":
                return f"_div({a}, {b}, {self.w(node)})"
            return f"_pow({a}, {b}, {self.w(node)})"
        if isinstance(node, Call):
            args = ", ".join(self.src(a) for a in node.args)
            return f"_{node.fn}({args}, {self.w(node)})"
        raise TypeError(node)


_NAMESPACE = {
    "_div": dual.div, "_pow": dual.power, "_sin": dual.sin, "_cos": dual.cos,
    "_sqrt": dual.sqrt, "_exp": dual.exp, "_log": dual.log, "_abs": dual.fabs,
    "_atan2": dual.atan2,
}


def _compile(node, names):
    comp = _Compiler({n: i for i, n in enumerate(names)})
    body = comp.src(node)
    ns = dict(_NAMESPACE)
    ns["_w"] = tuple(comp.where)
    exec(f"def _f(_x):\n    return {body}\n", ns)  # noqa: S102 - generated from a parsed tree
    return ns["_f"]


# ----------------------------------------------------------------------
# public API
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DualValue:
    value: float
    partials: np.ndarray
    names: tuple


class Expression:
    """Parsed expression over declared variables and parameters."""

    def __init__(self, tree, variables: Sequence[str], parameters: Sequence[str] = ()):
        self.tree = tree
        self.variables = tuple(variables)
        self.parameters = tuple(parameters)
        self._names = self.variables + self.parameters
        self._fn = _compile(tree, self._names)

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.tree == other.tree

    def __hash__(self):
        return hash(self.tree)

    @property
    def text(self):
        return to_text(self.tree)

    def free_names(self):
        out = set()

        def walk(n):
            if isinstance(n, Var):
                out.add(n.name)
            elif isinstance(n, Neg):
                walk(n.arg)
            elif isinstance(n, BinOp):
                walk(n.left)
                walk(n.right)
            elif isinstance(n, Call):
                for a in n.args:
                    walk(a)

        walk(self.tree)
        return out

    def _bind(self, point, params):
        if isinstance(point, Mapping):
            try:
                xs = [point[v] for v in self.variables]
            except KeyError as exc:
                raise DomainError(f"missing binding for {exc.args[0]!r}") from None
        else:
            xs = list(point)
            if len(xs) != len(self.variables):
                raise DomainError(
                    f"expected {len(self.variables)} coordinates, got {len(xs)}")
        params = params or {}
        try:
            ps = [params[p] for p in self.parameters]
        except KeyError as exc:
            raise DomainError(f"missing parameter {exc.args[0]!r}") from None
        return xs, ps

    def __call__(self, point, params=None):
        """Evaluate with floats or duals (generic over the number type)."""
        xs, ps = self._bind(point, params)
        return self._fn(xs + [float(p) for p in ps])

    def evaluate(self, point, params=None) -> float:
        return dual.value(self(point, params))

    def eval_with_grad(self, point, params=None) -> DualValue:
        xs, ps = self._bind(point, params)
        xv = np.array([float(x) for x in xs])
        seeded = list(dual.seed(xv, 1))
        out = self._fn(seeded + [float(p) for p in ps])
        if isinstance(out, dual.Dual):
            return DualValue(out.val, np.array(out.grad, dtype=float), self.variables)
        return DualValue(float(out), np.zeros(len(xv)), self.variables)

    def directional_derivative(self, point, direction, params=None) -> float:
        direction = np.asarray(direction, dtype=float)
        if direction.size != len(self.variables):
            raise DomainError("direction length must equal the variable count")
        return float(self.eval_with_grad(point, params).partials @ direction)

    def substitute(self, mapping, variables=None, parameters=None):
        """Replace variables by expressions; returns a new Expression."""
        trees = {k: (v.tree if isinstance(v, Expression) else v) for k, v in mapping.items()}

        def sub(n):
            if isinstance(n, Var):
                return trees.get(n.name, n)
            if isinstance(n, Neg):
                return Neg(sub(n.arg), n.offset)
            if isinstance(n, BinOp):
                return BinOp(n.op, sub(n.left), sub(n.right), n.offset)
            if isinstance(n, Call):
                return Call(n.fn, tuple(sub(a) for a in n.args), n.offset)
            return n

        new_vars = self.variables if variables is None else variables
        new_pars = self.parameters if parameters is None else parameters
        return Expression(sub(self.tree), new_vars, new_pars)


def parse(text: str, variables: Sequence[str], parameters: Sequence[str] = ()) -> Expression:
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    names = set(variables) | set(parameters)
    clash = names & set(FUNCTIONS)
    if clash:
        raise ParseError(f"names shadow built-in functions: {sorted(clash)}", 0)
    tree = _Parser(text, names).parse()
    return Expression(tree, variables, parameters)


def eval_with_grad(e: Expression, point, params=None) -> DualValue:
    return e.eval_with_grad(point, params)


def directional_derivative(e: Expression, point, direction, params=None) -> float:
    return e.directional_derivative(point, direction, params)
