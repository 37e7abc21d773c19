"""Recursive-descent parser for the QoI expression language.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' INTEGER)?
    base   := NUMBER | IDENT | '(' expr ')' | 'sqrt' '(' expr ')'

``-x^2`` is ``-(x^2)``.  Chains of ``+``/``-`` flatten into one weighted
:class:`~proqoi.expr.Sum`; multiplying by a literal becomes
:class:`~proqoi.expr.Scale`; subtrees made only of literals fold to a single
:class:`~proqoi.expr.Const`.
"""
from __future__ import annotations

import math
import re
from typing import Sequence

from .expr import Const, Power, Product, QoiExpr, Quotient, Scale, Sqrt, Sum, Var

__all__ = ["QoiSyntaxError", "parse_qoi"]


class QoiSyntaxError(ValueError):
    """Malformed QoI text.  ``offset`` is a byte offset into the UTF-8 text."""

    def __init__(self, message: str, text: str, char_offset: int):
        self.offset = len(text[:char_offset].encode("utf-8"))
        self.text = text
        super().__init__(f"{message} at byte {self.offset}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise QoiSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = {name: i for i, name in enumerate(names)}
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return QoiSyntaxError(message, self.text, tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] != "op":
            shown = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, found {shown!r}", tok)
        return tok

    def parse(self) -> QoiExpr:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected {tok[1]!r}")
        return node

    def expr(self):
        terms = [self.term()]
        weights = [1.0]
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            terms.append(self.term())
            weights.append(1.0 if op == "+" else -1.0)
        if len(terms) == 1:
            return terms[0]
        if all(isinstance(t, Const) for t in terms):
            total = 0.0
            for w, t in zip(weights, terms):
                total += w * t.value
            return Const(total)
        return Sum(terms, weights)

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.factor()
            node = _multiply(node, rhs) if op == "*" else self._divide(node, rhs)
        return node

    def _divide(self, num, den):
        if isinstance(den, Const) and den.value == 0:
            raise self.error("division by the constant zero", self.tokens[self.pos - 1])
        if isinstance(num, Const) and isinstance(den, Const):
            return Const(num.value / den.value)
        return Quotient(num, den)

    def factor(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            inner = self.factor()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Scale(-1.0, inner)
        node = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            exp_tok = self.take()
            if exp_tok[0] == "op" and exp_tok[1] == "-":
                raise self.error("exponent must be a positive integer", exp_tok)
            if exp_tok[0] != "number":
                raise self.error("expected an integer exponent", exp_tok)
            if not exp_tok[1].isdigit():
                raise self.error(f"exponent must be a positive integer, got {exp_tok[1]}", exp_tok)
            n = int(exp_tok[1])
            if n < 1:
                raise self.error("exponent must be a positive integer, got 0", exp_tok)
            if isinstance(node, Const):
                return Const(node.value ** n)
            return Power(node, n)
        return node

    def base(self):
        tok = self.take()
        kind, value, _ = tok
        if kind == "number":
            return Const(float(value))
        if kind == "ident":
            if value == "sqrt" and self.peek()[1] == "(":
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                if isinstance(arg, Const):
                    if arg.value < 0:
                        raise self.error("square root of a negative constant", tok)
                    return Const(math.sqrt(arg.value))
                return Sqrt(arg)
            if value not in self.names:
                raise self.error(f"unknown identifier {value!r}", tok)
            return Var(self.names[value])
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        shown = value or "end of input"
        raise self.error(f"unexpected {shown!r}", tok)


def _multiply(lhs: QoiExpr, rhs: QoiExpr) -> QoiExpr:
    lconst, rconst = isinstance(lhs, Const), isinstance(rhs, Const)
    if lconst and rconst:
        return Const(lhs.value * rhs.value)
    if lconst or rconst:
        c, other = (lhs, rhs) if lconst else (rhs, lhs)
        if c.value == 0:
            return Const(0.0)
        return Scale(c.value, other)
    return Product(lhs, rhs)


def parse_qoi(text: str, variable_names: Sequence[str]) -> QoiExpr:
    """Parse ``text`` into a QoI tree over ``variable_names``.

    >>> parse_qoi("P / (D * 287.1)", ["P", "D"])
    Quotient(numerator=Var(index=0), denominator=Scale(factor=287.1, child=Var(index=1)))
    """
    return _Parser(text, list(variable_names)).parse()
