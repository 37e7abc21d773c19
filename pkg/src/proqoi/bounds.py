"""Certified sup-error propagation through QoI trees.

Every function here answers the same question: given a reconstructed value
``x`` whose original is known to lie within ``eps`` of it, how far can the
function value move?  The answer is an upper bound on
``sup |f(x') - f(x)|`` over ``|x' - x| <= eps``; ``math.inf`` means no finite
bound is available (e.g. the box around a divisor contains zero).

All bound functions accept scalars or numpy arrays and broadcast.  Each result
is inflated by a few units of roundoff so that the bound computed in floating
point stays above the exact real-arithmetic bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import (
    Const,
    Power,
    Product,
    QoiDomainError,
    QoiExpr,
    Quotient,
    Scale,
    Sqrt,
    Sum,
    Var,
    radical_offset,
)

__all__ = [
    "UNBOUNDED",
    "PointContext",
    "bound_power",
    "bound_sqrt",
    "bound_radical",
    "bound_weighted_sum",
    "bound_product",
    "bound_quotient",
    "propagate",
    "propagate_arrays",
    "guard_factor",
    "sqrt_clamp_tolerance",
]

UNBOUNDED = math.inf
_U = np.finfo(np.float64).eps


def guard_factor(ops: int = 4) -> float:
    """Relative inflation applied to a bound built from ``ops`` rounded steps.

    Twice the first-order roundoff, so second-order terms are covered too.
    """
    return 1.0 + 2 * max(4, ops) * _U


_G4 = guard_factor(4)


def sqrt_clamp_tolerance(bound):
    """Negative square-root operands down to ``-tol`` are treated as zero."""
    return 1e-12 * (1.0 + bound)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _f(x):
    return np.asarray(x, dtype=np.float64)


_SPLIT = 134217729.0  # 2**27 + 1
# the error-free product is exact when the split cannot overflow and a * b
# stays clear of the subnormal range
_SAFE_OPERAND, _SAFE_P_LO, _SAFE_P_HI = 2.0 ** 990, 2.0 ** -960, 2.0 ** 1000


def _scale_bound(a, b):
    """``a * b`` for ``a >= 0`` rounded up to the next double when the
    round-to-nearest product fell below the exact one.

    The rounding error comes from an error-free product (Dekker split); outside
    the range where that is exact the product is bumped unconditionally.
    """
    b = _f(b)
    with np.errstate(all="ignore"):
        p = a * b
        ah = _SPLIT * a - (_SPLIT * a - a)
        al = a - ah
        bh = _SPLIT * b - (_SPLIT * b - b)
        bl = b - bh
        err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
        safe = (a <= _SAFE_OPERAND) & (b <= _SAFE_OPERAND) & (p >= _SAFE_P_LO) & (p <= _SAFE_P_HI)
        underflow = (p == 0) & (a > 0) & (b > 0)
        bump = underflow | ((p > 0) & np.isfinite(p) & (~safe | (err > 0)))
    return np.where(bump, np.nextafter(p, np.inf), p)


def bound_power(n: int, x, eps):
    """Bound for ``x**n``: sum_{i=1..n} C(n,i) |x|^(n-i) eps^i."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"exponent must be a positive integer, got {n!r}")
    n = int(n)
    x, eps = _f(x), _f(eps)
    with np.errstate(invalid="ignore", over="ignore"):
        out = _power_terms(n, np.abs(x), eps) * guard_factor(2 * n + 2)
        out = np.where(np.isinf(eps), np.inf, out)
    return _out(out)


def _ipow(x, n):
    # left-to-right products; the compiled kernel does the same steps
    if n == 0:
        return np.ones_like(x)
    out = x
    for _ in range(n - 1):
        out = out * x
    return out


def _power_terms(n, ax, eps):
    total = np.zeros(np.broadcast(ax, eps).shape)
    for i in range(1, n + 1):
        total = total + float(math.comb(n, i)) * _ipow(ax, n - i) * _ipow(eps, i)
    return total


def bound_sqrt(x, eps):
    """Bound for ``sqrt(x)``, ``x >= 0``: eps / (sqrt(max(x-eps, 0)) + sqrt(x)).

    At ``x == 0`` the quotient degenerates; the exact supremum ``sqrt(eps)``
    is returned there instead.
    """
    x, eps = _f(x), _f(eps)
    if np.any(x < 0):
        raise QoiDomainError(f"bound_sqrt needs x >= 0, got {np.min(x)!r}")
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        general = eps / (np.sqrt(np.maximum(x - eps, 0.0)) + np.sqrt(x))
        out = np.where(x == 0, np.sqrt(eps), general) * _G4
        out = np.where(eps == 0, 0.0, out)
        out = np.where(np.isinf(eps), np.inf, out)
    return _out(out)


def bound_radical(c, x, eps):
    """Bound for ``1 / (x + c)``: eps / (min(|s-eps|, |s+eps|) |s|), s = x + c.

    Unbounded unless ``s != 0`` and ``eps < |s|``.
    """
    c, x, eps = _f(c), _f(x), _f(eps)
    s = x + c
    return _out(_radical(s, eps))


def _radical(s, eps):
    a = np.abs(s)
    ok = (a > 0) & (eps < a)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = eps / (np.minimum(np.abs(s - eps), np.abs(s + eps)) * a) * _G4
    return np.where(ok, np.where(eps == 0, 0.0, out), np.inf)


def bound_weighted_sum(weights: Sequence[float], eps_vec: Sequence):
    """Bound for ``sum a_i x_i``: sum |a_i| eps_i.  A zero weight ignores its
    term even when that term is unbounded."""
    if len(weights) != len(eps_vec):
        raise ValueError(f"{len(weights)} weights but {len(eps_vec)} bounds")
    return _out(_weighted_sum(weights, [_f(e) for e in eps_vec]))


def _weighted_sum(weights, eps_list):
    total = np.float64(0.0)
    for w, e in zip(weights, eps_list):
        if w == 0:
            continue
        total = total + abs(w) * e
    return total * guard_factor(len(weights) + 1)


def bound_product(x1, eps1, x2, eps2):
    """Bound for ``x1 * x2``: |x1| eps2 + |x2| eps1 + eps1 eps2."""
    x1, eps1, x2, eps2 = _f(x1), _f(eps1), _f(x2), _f(eps2)
    return _out(_product(x1, eps1, x2, eps2))


def _product(x1, e1, x2, e2):
    with np.errstate(invalid="ignore", over="ignore"):
        out = (np.abs(x1) * e2 + np.abs(x2) * e1 + e1 * e2) * _G4
    return np.where(np.isinf(e1) | np.isinf(e2), np.inf, out)


def bound_quotient(x1, eps1, x2, eps2):
    """Bound for ``x1 / x2``:
    (|x1| eps2 + |x2| eps1) / (|x2| min(|x2-eps2|, |x2+eps2|)).

    Unbounded unless ``x2 != 0`` and ``eps2 < |x2|``.
    """
    x1, eps1, x2, eps2 = _f(x1), _f(eps1), _f(x2), _f(eps2)
    return _out(_quotient(x1, eps1, x2, eps2))


def _quotient(x1, e1, x2, e2):
    a2 = np.abs(x2)
    ok = (a2 > 0) & (e2 < a2) & ~np.isinf(e1)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        num = np.abs(x1) * e2 + a2 * e1
        out = num / (a2 * np.minimum(np.abs(x2 - e2), np.abs(x2 + e2))) * _G4
    # an exact zero stays zero even when the divisor underflows
    return np.where(ok, np.where(num == 0, 0.0, out), np.inf)


@dataclass(frozen=True)
class PointContext:
    """Reconstructed values at one point and the error bound of each."""

    values: tuple[float, ...]
    bounds: tuple[float, ...]

    def __init__(self, values: Sequence[float], bounds: Sequence[float]):
        values = tuple(float(v) for v in values)
        bounds = tuple(float(b) for b in bounds)
        if len(values) != len(bounds):
            raise ValueError(f"{len(values)} values but {len(bounds)} bounds")
        if any(b < 0 or math.isnan(b) for b in bounds):
            raise ValueError("error bounds must be nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", bounds)


def propagate(expr: QoiExpr, ctx: PointContext) -> tuple[float, float]:
    """Value of ``expr`` at ``ctx.values`` and a certified bound on how far it
    can move when each variable moves by at most its bound."""
    vals = [np.array([v]) for v in ctx.values]
    bnds = [np.array([b]) for b in ctx.bounds]
    value, bound = propagate_arrays(expr, vals, bnds)
    return float(value[0]), float(bound[0])


def propagate_arrays(expr: QoiExpr, values: Sequence[np.ndarray], bounds: Sequence[np.ndarray]):
    """Point-wise :func:`propagate` over arrays.

    ``values[i]`` and ``bounds[i]`` hold variable ``i`` at every point (bounds
    may be scalars).  Returns ``(value, bound)`` arrays.  A point whose value
    is undefined because a divisor reconstructed to exactly zero gets value
    NaN and bound ``inf`` rather than an error.
    """
    n = max(np.size(v) for v in values) if values else 1
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        v, b = _walk(expr, values, bounds)
    return np.broadcast_to(v, (n,)).astype(np.float64), np.broadcast_to(b, (n,)).astype(np.float64)


def _walk(node, values, bounds):
    if isinstance(node, Var):
        if node.index >= len(values):
            raise IndexError(f"expression uses variable {node.index} but only {len(values)} given")
        return _f(values[node.index]), _f(bounds[node.index])
    if isinstance(node, Const):
        return np.float64(node.value), np.float64(0.0)
    if isinstance(node, Scale):
        v, b = _walk(node.child, values, bounds)
        return node.factor * v, _scale_bound(abs(node.factor), b)
    if isinstance(node, Sum):
        total = np.float64(0.0)
        eps_list = []
        for w, term in zip(node.weights, node.terms):
            v, b = _walk(term, values, bounds)
            if w != 0:
                total = total + w * v
            eps_list.append(b)
        return total, _weighted_sum(node.weights, eps_list)
    if isinstance(node, Product):
        v1, b1 = _walk(node.left, values, bounds)
        v2, b2 = _walk(node.right, values, bounds)
        return v1 * v2, _product(v1, b1, v2, b2)
    if isinstance(node, Quotient):
        rad = radical_offset(node)
        if rad is not None:
            child, c = rad
            v, b = _walk(child, values, bounds)
            s = 1.0 * v + 1.0 * c
            value = np.where(s == 0, np.nan, 1.0 / np.where(s == 0, 1.0, s))
            return value, np.where(np.isinf(b), np.inf, _radical(s, b))
        v1, b1 = _walk(node.numerator, values, bounds)
        v2, b2 = _walk(node.denominator, values, bounds)
        value = np.where(v2 == 0, np.nan, v1 / np.where(v2 == 0, 1.0, v2))
        return value, _quotient(v1, b1, v2, b2)
    if isinstance(node, Power):
        v, b = _walk(node.child, values, bounds)
        out = _power_terms(node.n, np.abs(v), b) * guard_factor(2 * node.n + 2)
        return _ipow(v, node.n), np.where(np.isinf(b), np.inf, out)
    if isinstance(node, Sqrt):
        v, b = _walk(node.child, values, bounds)
        finite = ~np.isinf(b)
        neg = v < 0
        bad = neg & finite & (v < -sqrt_clamp_tolerance(b))
        if np.any(bad):
            idx = int(np.flatnonzero(np.atleast_1d(bad))[0])
            shown = float(np.broadcast_to(v, np.shape(np.atleast_1d(bad)))[idx])
            raise QoiDomainError(f"square root of negative value {shown!r}", idx)
        x = np.where(neg, 0.0, v)
        general = b / (np.sqrt(np.maximum(x - b, 0.0)) + np.sqrt(x))
        out = np.where(x == 0, np.sqrt(b), general) * _G4
        out = np.where(b == 0, 0.0, out)
        out = np.where(finite, out, np.inf)
        return np.sqrt(x), out
    raise TypeError(f"not a QoI node: {node!r}")
