"""Expression trees for metric components and profile functions.

The grammar is deliberately small: sums, products, non-negative integer
powers, unary minus, and the analytic primitives exp/sin/cos.  There is no
division and no non-integer power, which keeps every expression jet-friendly
(closed under the arithmetic of `jets`).

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := atom ('^' int)?
    atom   := number | ident | 'exp(' expr ')' | 'sin(' expr ')'
            | 'cos(' expr ')' | '(' expr ')' | '-' atom

Parsing is by recursive descent; syntax errors carry the byte offset of the
offending token and unknown identifiers are reported by name.  `to_text` is a
printer with the round-trip property parse(to_text(e)) == e (structurally).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .jets import Jet, NonFiniteError, jet_space

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Sum",
    "Prod",
    "Pow",
    "Neg",
    "Exp",
    "Sin",
    "Cos",
    "ParseError",
    "UnknownVariableError",
    "FUNCTION_NAMES",
    "parse",
    "to_text",
    "free_vars",
    "eval_point",
    "eval_jet",
]

FUNCTION_NAMES = ("exp", "sin", "cos")


class ParseError(ValueError):
    """Syntax error; `offset` is the byte offset into the source text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownVariableError(ParseError):
    """An identifier that is neither a chart coordinate nor a function."""

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


@dataclass(frozen=True)
class Expr:
    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Sum(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True)
class Prod(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sin(Expr):
    arg: Expr


@dataclass(frozen=True)
class Cos(Expr):
    arg: Expr


# --------------------------------------------------------------------- lexer
_OPS = set("+-*^()")


def _tokens(text: str):
    i, n = 0, len(text)
    out = []
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            out.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            lit = text[i:j]
            try:
                float(lit)
            except ValueError:
                raise ParseError(f"malformed number {lit!r}", i) from None
            out.append(("num", lit, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("ident", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    out.append(("end", "", n))
    return out


class _Parser:
    def __init__(self, text: str, chart: Sequence[str]):
        self.text = text
        self.chart = frozenset(chart)
        self.toks = _tokens(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str):
        tok = self.take()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def expr(self) -> Expr:
        terms = [self.term()]
        negs = [False]
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            terms.append(self.term())
            negs.append(op == "-")
        if len(terms) == 1:
            return terms[0]
        return Sum(tuple(Neg(t) if s else t for t, s in zip(terms, negs)))

    def term(self) -> Expr:
        factors = [self.factor()]
        while self.peek()[0] == "*":
            self.take()
            factors.append(self.factor())
        if len(factors) == 1:
            return factors[0]
        return Prod(tuple(factors))

    def factor(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                raise ParseError("expected non-negative integer exponent", tok[2])
            return Pow(base, int(tok[1]))
        return base

    def atom(self) -> Expr:
        kind, lit, off = self.take()
        if kind == "num":
            return Const(float(lit))
        if kind == "-":
            inner = self.atom()
            # '-' folds into a bare literal so Const(-c) round-trips.
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        if kind == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "ident":
            if lit in FUNCTION_NAMES:
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return {"exp": Exp, "sin": Sin, "cos": Cos}[lit](inner)
            if lit not in self.chart:
                raise UnknownVariableError(lit, off)
            return Var(lit)
        raise ParseError(f"unexpected token {lit!r}" if lit else "unexpected end of input", off)


def parse(text: str, chart: Sequence[str]) -> Expr:
    """Parse `text` against the coordinate names in `chart`."""
    if not text.strip():
        raise ParseError("empty expression", 0)
    p = _Parser(text, chart)
    e = p.expr()
    kind, lit, off = p.peek()
    if kind != "end":
        raise ParseError(f"trailing input {lit!r}", off)
    return e


# ------------------------------------------------------------------- printer
def _print(e: Expr, ctx: str) -> str:
    # ctx is the syntactic slot: "expr" (sum level), "term", "atom".
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, (Exp, Sin, Cos)):
        name = {Exp: "exp", Sin: "sin", Cos: "cos"}[type(e)]
        return f"{name}({_print(e.arg, 'expr')})"
    if isinstance(e, Neg):
        # '-' binds to a single atom; anything looser needs parentheses.
        inner = e.arg
        if isinstance(inner, (Const, Var, Exp, Sin, Cos, Neg)):
            body = _print(inner, "atom")
        else:
            body = f"({_print(inner, 'expr')})"
        text = f"-{body}"
        return text if ctx in ("expr", "term") else f"({text})"
    if isinstance(e, Pow):
        base = e.base
        if isinstance(base, (Const, Var, Exp, Sin, Cos, Neg)):
            btext = _print(base, "atom")
        else:
            btext = f"({_print(base, 'expr')})"
        return f"{btext}^{e.exponent}"
    if isinstance(e, Prod):
        parts = []
        for f in e.factors:
            # nested sums and products need parens or reparsing flattens them
            if isinstance(f, (Sum, Prod)):
                parts.append(f"({_print(f, 'expr')})")
            else:
                parts.append(_print(f, "term"))
        text = "*".join(parts)
        return text if ctx in ("expr", "term") else f"({text})"
    if isinstance(e, Sum):
        parts = [_print(e.terms[0], "term") if not isinstance(e.terms[0], Sum)
                 else f"({_print(e.terms[0], 'expr')})"]
        for t in e.terms[1:]:
            if isinstance(t, Neg):
                inner = t.arg
                if isinstance(inner, (Const, Var, Exp, Sin, Cos, Neg)):
                    parts.append(f" - {_print(inner, 'atom')}")
                elif isinstance(inner, (Prod, Pow)):
                    parts.append(f" - {_print(inner, 'term')}")
                else:
                    parts.append(f" - ({_print(inner, 'expr')})")
            elif isinstance(t, Sum):
                parts.append(f" + ({_print(t, 'expr')})")
            else:
                parts.append(f" + {_print(t, 'term')}")
        text = "".join(parts)
        return text if ctx == "expr" else f"({text})"
    raise TypeError(f"not an Expr node: {e!r}")


def to_text(e: Expr) -> str:
    """Render `e` so that parse(to_text(e)) reproduces the tree."""
    return _print(e, "expr")


# ---------------------------------------------------------------- evaluation
def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Sum):
        out: frozenset[str] = frozenset()
        for t in e.terms:
            out |= free_vars(t)
        return out
    if isinstance(e, Prod):
        out = frozenset()
        for f in e.factors:
            out |= free_vars(f)
        return out
    if isinstance(e, Pow):
        return free_vars(e.base)
    if isinstance(e, (Neg, Exp, Sin, Cos)):
        return free_vars(e.arg)
    raise TypeError(f"not an Expr node: {e!r}")


def eval_point(e: Expr, env: Mapping[str, float]) -> float:
    """Plain float evaluation at a point (the order-0 jet fast path)."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnknownVariableError(e.name, 0) from None
    if isinstance(e, Sum):
        return math.fsum(eval_point(t, env) for t in e.terms)
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out *= eval_point(f, env)
        return out
    if isinstance(e, Pow):
        return eval_point(e.base, env) ** e.exponent
    if isinstance(e, Neg):
        return -eval_point(e.arg, env)
    if isinstance(e, Exp):
        v = eval_point(e.arg, env)
        if v >= 709.0:
            raise NonFiniteError(f"exp overflow at argument {v}")
        return math.exp(v)
    if isinstance(e, Sin):
        return math.sin(eval_point(e.arg, env))
    if isinstance(e, Cos):
        return math.cos(eval_point(e.arg, env))
    raise TypeError(f"not an Expr node: {e!r}")


def eval_jet(e: Expr, base: Mapping[str, float], active: Sequence[str], order: int) -> Jet:
    """Evaluate `e` as a jet at `base` in the variables `active`.

    Variables outside `active` are frozen at their base values.  The
    coefficient at multi-index m of the result is d^m e(base) / m!.
    """
    space = jet_space(tuple(active), order)
    act = set(space.variables)

    def rec(node: Expr) -> Jet:
        if isinstance(node, Const):
            return space.constant(float(node.value))
        if isinstance(node, Var):
            try:
                v = float(base[node.name])
            except KeyError:
                raise UnknownVariableError(node.name, 0) from None
            if node.name in act:
                return space.variable(node.name, v)
            return space.constant(v)
        if isinstance(node, Sum):
            acc = rec(node.terms[0])
            for t in node.terms[1:]:
                acc = acc + rec(t)
            return acc
        if isinstance(node, Prod):
            acc = rec(node.factors[0])
            for f in node.factors[1:]:
                acc = acc * rec(f)
            return acc
        if isinstance(node, Pow):
            return rec(node.base).pow(node.exponent)
        if isinstance(node, Neg):
            return -rec(node.arg)
        if isinstance(node, Exp):
            return rec(node.arg).exp()
        if isinstance(node, Sin):
            return rec(node.arg).sin()
        if isinstance(node, Cos):
            return rec(node.arg).cos()
        raise TypeError(f"not an Expr node: {node!r}")

    out = rec(e)
    if not np.isfinite(out.coef).all():
        raise NonFiniteError("expression evaluation produced non-finite coefficients")
    return out
