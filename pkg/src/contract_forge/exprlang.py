"""Small arithmetic expression language for payoff definitions.

Scenario files declare payoffs as plain text, e.g. ``(x*theta - y^2)/sqrt(theta)``.
This module provides the tokenizer, a recursive-descent parser, and two
evaluators: a scalar one with precise error reporting and a compiler to
numpy-vectorized closures for the solvers.

Grammar, lowest to highest precedence::

    expr   := term  (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Functions: sqrt, exp, log, abs (one argument); min, max (exactly two).
Variable names match ``[a-z][a-z0-9_]*``. Whitespace is insignificant.
Numbers are decimal literals with an optional exponent. There are no
conditionals; piecewise payoffs belong in tabulated scenario payoffs.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "ParseError",
    "EvalError",
    "parse",
    "evaluate",
    "free_vars",
    "to_source",
    "compile_fn",
]

_FUNCTIONS = {"sqrt": 1, "exp": 1, "log": 1, "abs": 1, "min": 2, "max": 2}


class ParseError(ValueError):
    """Syntax error with the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ValueError):
    """Evaluation failure naming the offending variable or subexpression."""


@dataclass(frozen=True, slots=True)
class Num:
    value: float


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True, slots=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


Expr = Num | Var | Neg | Bin | Call


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)
  | (?P<name>[a-z][a-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))  # type: ignore[arg-type]
        pos = m.end()
    tokens.append(("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        kind, value, offset = self.peek()
        if kind == "op" and value == text:
            self.i += 1
            return
        raise ParseError(f"expected {text!r}, found {value or 'end of input'!r}", offset)

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, offset = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected trailing input {value!r}", offset)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.i += 1
                left = Bin(value, left, self.term())
            else:
                return left

    def term(self) -> Expr:
        left = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.i += 1
                left = Bin(value, left, self.unary())
            else:
                return left

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.i += 1
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.i += 1
            return Bin("^", base, self.unary())  # right associative
        return base

    def atom(self) -> Expr:
        kind, value, offset = self.next()
        if kind == "number":
            return Num(float(value))
        if kind == "name":
            nkind, nvalue, _ = self.peek()
            if nkind == "op" and nvalue == "(":
                return self.call(value, offset)
            return Var(value)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        raise ParseError(f"expected a value, found {value or 'end of input'!r}", offset)

    def call(self, name: str, offset: int) -> Expr:
        if name not in _FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", offset)
        self.expect("(")
        args = [self.expr()]
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == ",":
                self.i += 1
                args.append(self.expr())
            else:
                break
        self.expect(")")
        arity = _FUNCTIONS[name]
        if len(args) != arity:
            raise ParseError(
                f"{name} takes exactly {arity} argument{'s' if arity > 1 else ''}, got {len(args)}",
                offset,
            )
        return Call(name, tuple(args))


def parse(source: str) -> Expr:
    """Parse ``source`` into an AST or raise :class:`ParseError` with an offset."""
    return _Parser(source).parse()


def free_vars(expr: Expr) -> frozenset[str]:
    """Exact set of variable names occurring in ``expr``."""
    match expr:
        case Num():
            return frozenset()
        case Var(name):
            return frozenset((name,))
        case Neg(arg):
            return free_vars(arg)
        case Bin(_, left, right):
            return free_vars(left) | free_vars(right)
        case Call(_, args):
            out: frozenset[str] = frozenset()
            for a in args:
                out |= free_vars(a)
            return out
    raise TypeError(f"not an expression node: {expr!r}")


def to_source(expr: Expr) -> str:
    """Render ``expr`` as parseable text (fully parenthesized)."""
    match expr:
        case Num(value):
            if value == int(value) and abs(value) < 1e16:
                return repr(int(value))
            return repr(value)
        case Var(name):
            return name
        case Neg(arg):
            return f"(-{to_source(arg)})"
        case Bin(op, left, right):
            return f"({to_source(left)}{op}{to_source(right)})"
        case Call(fn, args):
            return f"{fn}({', '.join(to_source(a) for a in args)})"
    raise TypeError(f"not an expression node: {expr!r}")


def _apply_bin(op: str, a: float, b: float, node: Bin) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise EvalError(f"division by zero in {to_source(node)}")
        return a / b
    # power
    if a < 0.0 and b != int(b):
        raise EvalError(f"negative base with non-integer exponent in {to_source(node)}")
    if a == 0.0 and b < 0.0:
        raise EvalError(f"zero base with negative exponent in {to_source(node)}")
    try:
        return float(a**b)
    except OverflowError:
        return math.inf


def evaluate(expr: Expr, ctx: Mapping[str, float]) -> float:
    """Evaluate ``expr`` with IEEE-double arithmetic.

    Raises :class:`EvalError` for unbound variables and domain errors
    (sqrt of a negative, log of a nonpositive, division by zero), naming
    the offending variable or subexpression.
    """
    match expr:
        case Num(value):
            return value
        case Var(name):
            try:
                return float(ctx[name])
            except KeyError:
                raise EvalError(f"unbound variable {name!r}") from None
        case Neg(arg):
            return -evaluate(arg, ctx)
        case Bin(op, left, right):
            return _apply_bin(op, evaluate(left, ctx), evaluate(right, ctx), expr)
        case Call(fn, args):
            vals = [evaluate(a, ctx) for a in args]
            if fn == "sqrt":
                if vals[0] < 0.0:
                    raise EvalError(f"sqrt of negative value in {to_source(expr)}")
                return math.sqrt(vals[0])
            if fn == "log":
                if vals[0] <= 0.0:
                    raise EvalError(f"log of nonpositive value in {to_source(expr)}")
                return math.log(vals[0])
            if fn == "exp":
                try:
                    return math.exp(vals[0])
                except OverflowError:
                    return math.inf
            if fn == "abs":
                return abs(vals[0])
            if fn == "min":
                return min(vals)
            return max(vals)
    raise TypeError(f"not an expression node: {expr!r}")


_NP_FUNCS: dict[str, Callable] = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
}


def compile_fn(expr: Expr, var_names: Sequence[str]) -> Callable[..., np.ndarray | float]:
    """Compile ``expr`` into a closure over numpy arrays.

    The returned callable takes positional arguments matching ``var_names``
    (scalars or broadcastable arrays) and evaluates without Python-level
    dispatch per node. Domain violations produce nan/inf silently; callers
    are expected to audit their domains first (the scalar :func:`evaluate`
    is the strict path).
    """
    missing = free_vars(expr) - set(var_names)
    if missing:
        raise EvalError(f"unbound variable {sorted(missing)[0]!r}")
    index = {name: i for i, name in enumerate(var_names)}

    def build(e: Expr) -> Callable:
        match e:
            case Num(value):
                return lambda args: value
            case Var(name):
                i = index[name]
                return lambda args: args[i]
            case Neg(arg):
                f = build(arg)
                return lambda args: -f(args)
            case Bin(op, left, right):
                fl, fr = build(left), build(right)
                if op == "+":
                    return lambda args: fl(args) + fr(args)
                if op == "-":
                    return lambda args: fl(args) - fr(args)
                if op == "*":
                    return lambda args: fl(args) * fr(args)
                if op == "/":
                    return lambda args: fl(args) / fr(args)
                return lambda args: np.power(fl(args), fr(args))
            case Call(fn, cargs):
                fs = [build(a) for a in cargs]
                if fn in _NP_FUNCS:
                    g = _NP_FUNCS[fn]
                    f0 = fs[0]
                    return lambda args: g(f0(args))
                f0, f1 = fs
                if fn == "min":
                    return lambda args: np.minimum(f0(args), f1(args))
                return lambda args: np.maximum(f0(args), f1(args))
        raise TypeError(f"not an expression node: {e!r}")

    inner = build(expr)

    def fn(*args):
        with np.errstate(all="ignore"):
            return inner(args)

    return fn
