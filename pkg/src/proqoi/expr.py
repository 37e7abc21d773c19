"""Expression trees for derivable quantities of interest.

A QoI is built from a small closed set of node types: variables, constants,
scaling by a constant, weighted sums, binary products and quotients, positive
integer powers and square roots.  A reciprocal ``1 / (x + c)`` is not a node
of its own; it is a :class:`Quotient` whose numerator is ``Const(1)`` and
whose denominator is ``Sum([x, Const(c)], [1, 1])``.  See
:func:`radical_offset`.

Trees are immutable and hashable.  Sharing a subtree between two parents is
allowed in Python but has no semantic meaning: every occurrence is treated as
an independent copy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "QoiExpr",
    "Var",
    "Const",
    "Scale",
    "Sum",
    "Product",
    "Quotient",
    "Power",
    "Sqrt",
    "QoiDomainError",
    "evaluate",
    "variables",
    "depth",
    "iter_nodes",
    "radical_offset",
    "to_text",
]


class QoiDomainError(ValueError):
    """A QoI was evaluated outside its domain (negative sqrt, zero divisor)."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class QoiExpr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def children(self) -> tuple[QoiExpr, ...]:
        return ()


@dataclass(frozen=True)
class Var(QoiExpr):
    index: int

    def __post_init__(self):
        if not isinstance(self.index, (int, np.integer)) or self.index < 0:
            raise ValueError(f"variable index must be a non-negative int, got {self.index!r}")


@dataclass(frozen=True)
class Const(QoiExpr):
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"constant must be finite, got {self.value!r}")


@dataclass(frozen=True)
class Scale(QoiExpr):
    factor: float
    child: QoiExpr

    def __post_init__(self):
        if self.factor == 0 or not np.isfinite(self.factor):
            raise ValueError(f"scale factor must be finite and nonzero, got {self.factor!r}")

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Sum(QoiExpr):
    terms: tuple[QoiExpr, ...]
    weights: tuple[float, ...]

    def __init__(self, terms: Sequence[QoiExpr], weights: Sequence[float] | None = None):
        terms = tuple(terms)
        weights = tuple(float(w) for w in (weights if weights is not None else [1.0] * len(terms)))
        if not terms:
            raise ValueError("Sum needs at least one term")
        if len(terms) != len(weights):
            raise ValueError(f"Sum has {len(terms)} terms but {len(weights)} weights")
        if not all(np.isfinite(w) for w in weights):
            raise ValueError("Sum weights must be finite")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "weights", weights)

    def children(self):
        return self.terms


@dataclass(frozen=True)
class Product(QoiExpr):
    left: QoiExpr
    right: QoiExpr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Quotient(QoiExpr):
    numerator: QoiExpr
    denominator: QoiExpr

    def children(self):
        return (self.numerator, self.denominator)


@dataclass(frozen=True)
class Power(QoiExpr):
    child: QoiExpr
    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"power exponent must be a positive integer, got {self.n!r}")

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Sqrt(QoiExpr):
    child: QoiExpr

    def children(self):
        return (self.child,)


def radical_offset(node: QoiExpr) -> tuple[QoiExpr, float] | None:
    """Return ``(x, c)`` if ``node`` has the shape ``1 / (x + c)``, else None."""
    if not isinstance(node, Quotient):
        return None
    num, den = node.numerator, node.denominator
    if not (isinstance(num, Const) and num.value == 1.0):
        return None
    if not (isinstance(den, Sum) and len(den.terms) == 2 and den.weights == (1.0, 1.0)):
        return None
    child, const = den.terms
    if isinstance(const, Const) and not isinstance(child, Const):
        return child, const.value
    return None


def iter_nodes(expr: QoiExpr) -> Iterator[QoiExpr]:
    """Pre-order traversal."""
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def variables(expr: QoiExpr) -> set[int]:
    return {node.index for node in iter_nodes(expr) if isinstance(node, Var)}


def depth(expr: QoiExpr) -> int:
    kids = expr.children()
    return 1 + max((depth(k) for k in kids), default=0)


def evaluate(expr: QoiExpr, values, strict: bool = True):
    """Evaluate ``expr`` at ``values``.

    ``values`` is indexed by variable ordinal; its entries may be scalars or
    equally shaped arrays.  With ``strict`` a negative square-root operand or
    a zero divisor raises :class:`QoiDomainError`; otherwise those points
    evaluate to NaN.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = _eval(expr, values, strict)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _eval(node, values, strict):
    if isinstance(node, Var):
        if node.index >= len(values):
            raise IndexError(f"expression uses variable {node.index} but only {len(values)} given")
        return np.asarray(values[node.index], dtype=np.float64)
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Scale):
        return node.factor * _eval(node.child, values, strict)
    if isinstance(node, Sum):
        total = np.float64(0.0)
        for w, term in zip(node.weights, node.terms):
            if w != 0:
                total = total + w * _eval(term, values, strict)
        return total
    if isinstance(node, Product):
        return _eval(node.left, values, strict) * _eval(node.right, values, strict)
    if isinstance(node, Quotient):
        num = _eval(node.numerator, values, strict)
        den = _eval(node.denominator, values, strict)
        zero = den == 0
        if np.any(zero):
            if strict:
                raise QoiDomainError("division by zero", _first(zero))
            return np.where(zero, np.nan, num / np.where(zero, 1.0, den))
        return num / den
    if isinstance(node, Power):
        return _eval(node.child, values, strict) ** node.n
    if isinstance(node, Sqrt):
        arg = _eval(node.child, values, strict)
        neg = arg < 0
        if np.any(neg):
            if strict:
                raise QoiDomainError(f"square root of negative value {np.min(arg)!r}", _first(neg))
            return np.sqrt(np.where(neg, np.nan, arg))
        return np.sqrt(arg)
    raise TypeError(f"not a QoI node: {node!r}")


def _first(mask) -> int | None:
    if np.ndim(mask) == 0:
        return None
    return int(np.flatnonzero(mask)[0])


_PREC = {Sum: 1, Product: 2, Quotient: 2, Scale: 2, Power: 3}


def to_text(expr: QoiExpr, names: Sequence[str] | None = None) -> str:
    """Render ``expr`` in the QoI DSL.  ``parse_qoi(to_text(e, names), names)``
    rebuilds an equivalent tree (constant folding may merge constants)."""

    def name(i):
        return names[i] if names is not None else f"x{i}"

    def wrap(node, prec):
        text = render(node)
        if _PREC.get(type(node), 4) < prec or (isinstance(node, Const) and node.value < 0):
            return f"({text})"
        return text

    def render(node):
        if isinstance(node, Var):
            return name(node.index)
        if isinstance(node, Const):
            return repr(float(node.value))
        if isinstance(node, Scale):
            return f"{_num(node.factor)} * {wrap(node.child, 3)}"
        if isinstance(node, Sum):
            parts = []
            for k, (w, term) in enumerate(zip(node.weights, node.terms)):
                if w == 1.0:
                    piece = wrap(term, 2)
                elif w == -1.0 and k > 0:
                    parts.append(f"- {wrap(term, 2)}")
                    continue
                else:
                    piece = f"{_num(w)} * {wrap(term, 3)}"
                parts.append(piece if k == 0 else f"+ {piece}")
            return " ".join(parts)
        if isinstance(node, Product):
            return f"{wrap(node.left, 2)} * {wrap(node.right, 3)}"
        if isinstance(node, Quotient):
            return f"{wrap(node.numerator, 2)} / {wrap(node.denominator, 3)}"
        if isinstance(node, Power):
            return f"{wrap(node.child, 4)}^{node.n}"
        if isinstance(node, Sqrt):
            return f"sqrt({render(node.child)})"
        raise TypeError(f"not a QoI node: {node!r}")

    return render(expr)


def _num(x: float) -> str:
    text = repr(float(x))
    return f"({text})" if x < 0 else text
