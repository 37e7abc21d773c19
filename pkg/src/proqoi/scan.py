"""Point-wise QoI value/bound scan with a compiled fast path.

:class:`CompiledQoi` flattens a tree into a postfix program.  The program runs
in the Cython kernel ``proqoi._kernels`` when it is importable; otherwise the
numpy tree walker in :mod:`proqoi.bounds` does the same job.  Set
``PROQOI_PURE=1`` to force the numpy path and ``PROQOI_THREADS`` to cap the
number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import propagate_arrays
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

__all__ = ["CompiledQoi", "BACKEND", "available_backends", "scan_qoi"]

OP_VAR, OP_CONST, OP_SCALE, OP_SUM, OP_PRODUCT, OP_QUOTIENT, OP_RADICAL, OP_POWER, OP_SQRT = range(9)

try:
    if os.environ.get("PROQOI_PURE"):
        raise ImportError("pure mode requested")
    from . import _kernels
except ImportError:
    _kernels = None

BACKEND = "cython" if _kernels is not None else "numpy"

_MIN_CHUNK = 1 << 15


def available_backends() -> list[str]:
    return ["cython", "numpy"] if _kernels is not None else ["numpy"]


def _thread_count() -> int:
    env = os.environ.get("PROQOI_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class CompiledQoi:
    """A QoI tree plus its postfix program."""

    expr: QoiExpr
    slots: tuple[int, ...] = field(init=False)
    ops: np.ndarray = field(init=False, repr=False)
    arg0: np.ndarray = field(init=False, repr=False)
    arg1: np.ndarray = field(init=False, repr=False)
    consts: np.ndarray = field(init=False, repr=False)
    stack_size: int = field(init=False)

    def __post_init__(self):
        ops, a0, a1, consts = [], [], [], []
        slot_of: dict[int, int] = {}

        def const(value):
            consts.append(float(value))
            return len(consts) - 1

        def emit(op, x=0, y=0):
            ops.append(op)
            a0.append(x)
            a1.append(y)

        # returns stack depth needed for the subtree
        def walk(node) -> int:
            if isinstance(node, Var):
                slot = slot_of.setdefault(node.index, len(slot_of))
                emit(OP_VAR, slot)
                return 1
            if isinstance(node, Const):
                emit(OP_CONST, const(node.value))
                return 1
            if isinstance(node, Scale):
                need = walk(node.child)
                emit(OP_SCALE, const(node.factor))
                return need
            if isinstance(node, Sum):
                need = 0
                for k, term in enumerate(node.terms):
                    need = max(need, k + walk(term))
                start = len(consts)
                consts.extend(node.weights)
                emit(OP_SUM, len(node.terms), start)
                return need
            if isinstance(node, Quotient):
                rad = radical_offset(node)
                if rad is not None:
                    child, c = rad
                    need = walk(child)
                    emit(OP_RADICAL, const(c))
                    return need
                need = max(walk(node.numerator), 1 + walk(node.denominator))
                emit(OP_QUOTIENT)
                return need
            if isinstance(node, Product):
                need = max(walk(node.left), 1 + walk(node.right))
                emit(OP_PRODUCT)
                return need
            if isinstance(node, Power):
                need = walk(node.child)
                start = len(consts)
                consts.extend(float(math.comb(node.n, i)) for i in range(1, node.n + 1))
                emit(OP_POWER, int(node.n), start)
                return need
            if isinstance(node, Sqrt):
                need = walk(node.child)
                emit(OP_SQRT)
                return need
            raise TypeError(f"not a QoI node: {node!r}")

        self.stack_size = walk(self.expr)
        self.slots = tuple(sorted(slot_of, key=slot_of.get))
        self.ops = np.asarray(ops, dtype=np.intc)
        self.arg0 = np.asarray(a0, dtype=np.intc)
        self.arg1 = np.asarray(a1, dtype=np.intc)
        self.consts = np.asarray(consts if consts else [0.0], dtype=np.float64)

    def scan(self, values: Sequence, bounds: Sequence, *, backend: str | None = None,
             threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Value and certified bound at every point.

        ``values`` and ``bounds`` are indexed by variable ordinal; entries the
        expression does not use may be ``None``.  Bounds may be scalars.
        """
        backend = backend or BACKEND
        if backend not in available_backends():
            raise ValueError(f"backend {backend!r} not available (have {available_backends()})")
        used = [np.asarray(values[i], dtype=np.float64).ravel() for i in self.slots]
        n = max((u.size for u in used), default=1)
        if n == 0:
            return np.empty(0), np.empty(0)
        workers = max(1, min(threads or _thread_count(), n // _MIN_CHUNK or 1))
        edges = np.linspace(0, n, workers + 1).astype(np.int64)

        if backend == "numpy":
            full_v = [None] * (max(self.slots) + 1 if self.slots else 0)
            full_b = list(full_v)
            for i in self.slots:
                full_v[i] = np.broadcast_to(np.asarray(values[i], dtype=np.float64).ravel(), (n,))
                full_b[i] = np.broadcast_to(np.asarray(bounds[i], dtype=np.float64).ravel(), (n,))

            def run(lo, hi):
                vs = [None if v is None else v[lo:hi] for v in full_v]
                bs = [None if b is None else b[lo:hi] for b in full_b]
                try:
                    return propagate_arrays(self.expr, vs, bs) if self.slots else _const_only(self.expr, hi - lo)
                except QoiDomainError as exc:
                    raise QoiDomainError(str(exc), None if exc.index is None else lo + exc.index) from None

            parts = _map(run, edges, workers)
            return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

        k = len(self.slots)
        vals = np.empty((max(k, 1), n))
        bnds = np.zeros((max(k, 1), n))
        for row, i in enumerate(self.slots):
            vals[row] = np.broadcast_to(np.asarray(values[i], dtype=np.float64).ravel(), (n,))
            bnds[row] = np.broadcast_to(np.asarray(bounds[i], dtype=np.float64).ravel(), (n,))
        out_v = np.empty(n)
        out_b = np.empty(n)

        def run_c(lo, hi):
            return _kernels.scan_program(self.ops, self.arg0, self.arg1, self.consts, vals, bnds,
                                         out_v, out_b, int(lo), int(hi), self.stack_size)

        bad = [b for b in _map(run_c, edges, workers) if b >= 0]
        if bad:
            idx = min(bad)
            raise QoiDomainError(f"square root of negative value at point {idx}", idx)
        return out_v, out_b


def _map(fn, edges, workers):
    pairs = list(zip(edges[:-1], edges[1:]))
    if workers == 1:
        return [fn(lo, hi) for lo, hi in pairs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda p: fn(*p), pairs))


def _const_only(expr, n):
    v, b = propagate_arrays(expr, [], [])
    return np.full(n, v[0]), np.full(n, b[0])


def scan_qoi(expr: QoiExpr, values: Sequence, bounds: Sequence, **kwargs):
    """One-shot convenience wrapper around :meth:`CompiledQoi.scan`."""
    return CompiledQoi(expr).scan(values, bounds, **kwargs)
