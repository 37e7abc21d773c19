"""QoI-toleranced progressive retrieval.

The loop:

1. give every variable an initial bound from the tightest relative tolerance
   of the QoIs that use it (:func:`assign_eb`);
2. reconstruct each variable to its bound;
3. scan every point of every QoI for the certified error bound, recording
   the maximum and where it occurs (:func:`estimate_all`);
4. for each QoI still over tolerance, shrink the bounds of its variables by
   a constant factor until the estimate at that worst point fits
   (:func:`reassign_eb`), and go back to 2.

The loop stops when every QoI is within tolerance, or when every variable a
failing QoI depends on is already at the store's full fidelity.

Relative tolerances are measured against the QoI's value range.  During
retrieval that range is unknown; the denominator used here is a certified
lower bound on it, ``max(v - b) - min(v + b)`` over the reconstructed values
``v`` and their error bounds ``b``, so a reported relative estimate is never
smaller than the true relative error bound.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bounds import PointContext, propagate
from .codec.core import RetrievalState, new_state, reconstruct
from .expr import QoiDomainError, QoiExpr, variables
from .parse import parse_qoi
from .scan import CompiledQoi

__all__ = [
    "QoiRequest",
    "QoiEstimate",
    "RetrievalReport",
    "assign_eb",
    "reassign_eb",
    "qoi_range_lower_bound",
    "estimate_all",
    "Retriever",
    "retrieve",
    "NO_RETRIEVAL",
    "REDUCTION_FACTOR",
]

REDUCTION_FACTOR = 1.5
NO_RETRIEVAL = None
_MAX_INNER = 4096


@dataclass(frozen=True)
class QoiRequest:
    """A named QoI with a tolerance, relative to its value range unless
    ``absolute``."""

    name: str
    expr: QoiExpr
    tau: float
    absolute: bool = False

    def __post_init__(self):
        if not self.tau > 0 or math.isinf(self.tau):
            raise ValueError(f"tolerance of {self.name!r} must be positive and finite, got {self.tau!r}")

    @classmethod
    def parse(cls, spec: str, variable_names: Sequence[str], absolute: bool = False) -> "QoiRequest":
        """``"name=expr@tau"``; ``name=`` may be omitted."""
        body, sep, tau = spec.rpartition("@")
        if not sep:
            raise ValueError(f"QoI spec {spec!r} lacks '@<tolerance>'")
        name, eq, text = body.partition("=")
        if not eq:
            name, text = body.strip(), body
        return cls(name.strip(), parse_qoi(text, variable_names), float(tau), absolute)

    def variables(self) -> set[int]:
        return variables(self.expr)


def assign_eb(value_range: float, taus: Iterable[float]):
    """Initial absolute bound for one variable: ``min(1, taus...) * range``,
    or :data:`NO_RETRIEVAL` when no QoI uses the variable."""
    taus = list(taus)
    if not taus:
        return NO_RETRIEVAL
    if value_range < 0:
        raise ValueError(f"value range must be >= 0, got {value_range!r}")
    return min(1.0, *taus) * value_range


def reassign_eb(expr: QoiExpr, point_values: Sequence[float], eps: Sequence[float], tau: float,
                c: float = REDUCTION_FACTOR, floors: Sequence[float] | None = None,
                involved: Iterable[int] | None = None, max_divisions: int = _MAX_INNER):
    """Tighten ``eps`` until the bound of ``expr`` at one point is within the
    absolute tolerance ``tau``.

    Every variable in ``involved`` (default: those ``expr`` uses) is divided
    by ``c`` per round, but never below its entry in ``floors``.  Returns
    ``(new_eps, divisions, attainable)``; ``attainable`` is False when all
    involved variables hit their floors first.
    """
    if not c > 1:
        raise ValueError(f"reduction factor must exceed 1, got {c!r}")
    eps = [float(e) for e in eps]
    floors = [0.0] * len(eps) if floors is None else [float(f) for f in floors]
    involved = sorted(variables(expr) if involved is None else set(involved))
    divisions = 0
    while True:
        _, bound = propagate(expr, PointContext(point_values, eps))
        if bound <= tau:
            return eps, divisions, True
        if all(eps[i] <= floors[i] for i in involved) or divisions >= max_divisions:
            return eps, divisions, False
        for i in involved:
            eps[i] = max(eps[i] / c, floors[i])
        divisions += 1


def qoi_range_lower_bound(values: np.ndarray, bounds: np.ndarray) -> float:
    """A number no larger than the true value range of a QoI whose true
    values lie within ``bounds`` of ``values``."""
    ok = ~np.isnan(values)
    if not np.any(ok):
        return -math.inf
    v, b = values[ok], bounds[ok]
    with np.errstate(invalid="ignore"):
        return float(np.max(v - b) - np.min(v + b))


@dataclass
class QoiEstimate:
    name: str
    estimate: float
    index: int
    absolute_estimate: float
    denominator: float
    tau: float
    absolute: bool

    @property
    def satisfied(self) -> bool:
        return self.estimate <= self.tau


def _relative(abs_est: float, denom: float) -> float:
    if abs_est == 0:
        return 0.0
    if not denom > 0:
        return math.inf
    return abs_est / denom


def estimate_all(requests: Sequence[QoiRequest], values: Sequence[np.ndarray],
                 eps: Sequence[float], masks: Sequence[np.ndarray | None] | None = None,
                 compiled: Sequence[CompiledQoi] | None = None,
                 backend: str | None = None) -> list[QoiEstimate]:
    """Worst-point error estimate of every request.

    ``values[i]`` is variable ``i``'s reconstruction, ``eps[i]`` its bound and
    ``masks[i]`` marks points stored exactly (their bound is 0).  The index
    is the first point attaining the maximum.
    """
    n = max((np.size(v) for v in values if v is not None), default=1)
    masks = masks or [None] * len(values)
    point_bounds = []
    for e, m in zip(eps, masks):
        if e is None:
            point_bounds.append(None)
        elif m is None or not np.any(m):
            point_bounds.append(np.full(n, float(e)))
        else:
            point_bounds.append(np.where(m, 0.0, float(e)))
    compiled = compiled or [CompiledQoi(r.expr) for r in requests]
    out = []
    for req, prog in zip(requests, compiled):
        try:
            val, bnd = prog.scan(values, point_bounds, backend=backend)
        except QoiDomainError as exc:
            pts = {i: float(np.ravel(values[i])[exc.index]) for i in sorted(req.variables())} \
                if exc.index is not None else {}
            raise QoiDomainError(f"QoI {req.name!r} at point {exc.index} with values {pts}: {exc}",
                                 exc.index) from None
        idx = int(np.argmax(bnd)) if bnd.size else 0
        abs_est = float(bnd[idx]) if bnd.size else 0.0
        if req.absolute:
            denom, est = 1.0, abs_est
        else:
            denom = qoi_range_lower_bound(val, bnd)
            est = _relative(abs_est, denom)
        out.append(QoiEstimate(req.name, est, idx, abs_est, denom, req.tau, req.absolute))
    return out


@dataclass
class RetrievalReport:
    satisfied: bool
    iterations: int
    qois: list[QoiEstimate]
    eps: dict[str, float]
    bytes: dict[str, int]
    full_fidelity: dict[str, bool]
    n: int
    unattainable: list[str] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes.values())

    @property
    def bitrate(self) -> float:
        """Retrieved bits per element, over all retrieved variables."""
        k = len(self.bytes)
        return 8.0 * self.total_bytes / (self.n * k) if k else 0.0

    def variable_bitrate(self) -> dict[str, float]:
        return {name: 8.0 * b / self.n for name, b in self.bytes.items()}

    def to_json(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "iterations": self.iterations,
            "n": self.n,
            "bitrate": self.bitrate,
            "total_bytes": self.total_bytes,
            "variables": {
                name: {"eps": self.eps[name], "bytes": self.bytes[name],
                       "bitrate": 8.0 * self.bytes[name] / self.n,
                       "full_fidelity": self.full_fidelity[name]}
                for name in self.eps
            },
            "qois": [
                {**asdict(q), "satisfied": q.satisfied, "estimate": _json_num(q.estimate),
                 "absolute_estimate": _json_num(q.absolute_estimate),
                 "denominator": _json_num(q.denominator)}
                for q in self.qois
            ],
            "unattainable": self.unattainable,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)

    def write_trace(self, path) -> None:
        if not self.trace:
            return
        keys = list(self.trace[0])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.trace)


def _json_num(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


class Retriever:
    """A retrieval session over one store.

    Reconstruction state persists between :meth:`run` calls, so a sequence
    of tightening requests never reads a segment twice.
    """

    def __init__(self, store, variable_names: Sequence[str] | None = None,
                 c: float = REDUCTION_FACTOR, max_iterations: int = 1000,
                 backend: str | None = None):
        self.store = store
        self.names = list(variable_names) if variable_names is not None else list(store.names)
        self.c = c
        self.max_iterations = max_iterations
        self.backend = backend
        self.states: dict[str, RetrievalState] = {}
        self._masks: dict[str, np.ndarray | None] = {}

    def parse(self, spec: str, absolute: bool = False) -> QoiRequest:
        return QoiRequest.parse(spec, self.names, absolute)

    def state(self, name: str) -> RetrievalState:
        if name not in self.states:
            mask = self.store.mask(name)
            self.states[name] = new_state(self.store.record(name), mask)
            self._masks[name] = None if mask is None else mask.bits
        return self.states[name]

    def values(self, name: str) -> np.ndarray:
        return self.state(name).values

    @property
    def bytes_read(self) -> int:
        return sum(s.bytes_read for s in self.states.values())

    def run(self, requests: Sequence[QoiRequest]) -> RetrievalReport:
        if not requests:
            raise ValueError("no QoI requests")
        nvar = len(self.names)
        for req in requests:
            bad = [i for i in req.variables() if i >= nvar]
            if bad:
                raise ValueError(f"QoI {req.name!r} uses variable {bad[0]} but only {nvar} are declared")
        used = sorted(set().union(*(r.variables() for r in requests)))
        records = {i: self.store.record(self.names[i]) for i in used}
        n = {records[i].n for i in used}
        if len(n) != 1:
            raise ValueError(f"variables have different lengths {sorted(n)}")
        n = n.pop()

        eps: list[float | None] = [None] * nvar
        for i in used:
            taus = [r.tau if not r.absolute else 1.0 for r in requests if i in r.variables()]
            eps[i] = assign_eb(records[i].value_range, taus)
        floors = [records[i].floor if i in records else 0.0 for i in range(nvar)]
        compiled = [CompiledQoi(r.expr) for r in requests]
        trace = []
        unattainable: set[str] = set()
        ests = []
        iteration = 0
        while True:
            iteration += 1
            for i in used:
                st = reconstruct(self.state(self.names[i]), self.store, eps[i])
                eps[i] = st.achieved_bound
            vals = [self.states[self.names[i]].values if i in records else None for i in range(nvar)]
            masks = [self._masks.get(self.names[i]) for i in range(nvar)]
            ests = estimate_all(requests, vals, eps, masks, compiled, self.backend)
            trace.append(self._trace_row(iteration, used, eps, ests))
            failing = [k for k, e in enumerate(ests) if not e.satisfied]
            if not failing or iteration >= self.max_iterations:
                break
            changed = False
            for k in failing:
                req, est = requests[k], ests[k]
                involved = sorted(req.variables())
                if all(self.states[self.names[i]].at_full_fidelity for i in involved):
                    continue
                divisions = self._divisions_needed(req, est, vals, masks, eps, floors, involved)
                for i in involved:
                    before = eps[i]
                    for _ in range(divisions):
                        eps[i] = max(eps[i] / self.c, floors[i])
                    changed |= eps[i] < before
            if not changed:
                break
        for req, est in zip(requests, ests):
            if not est.satisfied and all(self.states[self.names[i]].at_full_fidelity
                                         for i in req.variables()):
                unattainable.add(req.name)
        return RetrievalReport(
            satisfied=all(e.satisfied for e in ests),
            iterations=iteration,
            qois=ests,
            eps={self.names[i]: eps[i] for i in used},
            bytes={self.names[i]: self.states[self.names[i]].bytes_read for i in used},
            full_fidelity={self.names[i]: self.states[self.names[i]].at_full_fidelity for i in used},
            n=n,
            unattainable=sorted(unattainable),
            trace=trace,
        )

    def _divisions_needed(self, req, est, vals, masks, eps, floors, involved) -> int:
        """Rounds of division by ``c`` that bring the worst point within tolerance.

        Variables stored exactly at that point carry bound 0 there and are
        left out of the point-wise search; every involved variable is then
        divided the same number of times.
        """
        if req.absolute:
            tau_abs = req.tau
        elif est.denominator > 0 and math.isfinite(est.denominator):
            tau_abs = req.tau * est.denominator
        else:
            return 1  # no usable scale for the tolerance yet: shrink once and rescan
        j = est.index
        point = [float(v[j]) if v is not None else 0.0 for v in vals]
        exact = {i for i in involved if masks[i] is not None and masks[i][j]}
        point_eps = [0.0 if (e is None or i in exact) else e for i, e in enumerate(eps)]
        point_floors = [0.0 if i in exact else f for i, f in enumerate(floors)]
        live = [i for i in involved if i not in exact]
        _, divisions, _ = reassign_eb(req.expr, point, point_eps, tau_abs, self.c,
                                      point_floors, live)
        return max(divisions, 1)

    def _trace_row(self, iteration, used, eps, ests):
        row = {"iteration": iteration}
        for i in used:
            row[f"eps_{self.names[i]}"] = eps[i]
        for e in ests:
            row[f"est_{e.name}"] = e.estimate
        row["bytes"] = sum(self.states[self.names[i]].bytes_read for i in used)
        return row


def retrieve(store, requests: Sequence[QoiRequest] | Sequence[str],
             variable_names: Sequence[str] | None = None, **kwargs):
    """One-shot retrieval.  Returns ``(values by name, report)``."""
    session = Retriever(store, variable_names, **kwargs)
    reqs = [session.parse(r) if isinstance(r, str) else r for r in requests]
    report = session.run(reqs)
    return {name: session.values(name) for name in report.eps}, report
