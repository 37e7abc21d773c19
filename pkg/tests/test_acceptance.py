"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they happen; the summary section at the end of any run lists them all.
"""
import math
import time

import numpy as np
import pytest

from codec_helpers import make_store, prefix_errors
from oracles import LD, box_samples, brute_sup_1d, brute_sup_nd, ld_eval, reference_slack, within_bound
from proqoi import (GE_FORMULAS, PointContext, QoiRequest, Retriever, Var, bound_power, bound_product,
                    bound_quotient, bound_radical, bound_sqrt, bound_weighted_sum, build_mask,
                    estimate_all, evaluate, parse_qoi, propagate, reassign_eb)
from proqoi.codec import VariableData, new_state, reconstruct
from proqoi.harness import default_schedule, one_shot_bytes, qoi_check, refactor_all, sweep, synth
from trees import random_tree

CODECS = ("bitplane", "delta", "snapshot")
SWEEP_QOIS = [("VTOT", GE_FORMULAS["VTOT"]), ("T", GE_FORMULAS["T"]),
              ("product", "Vx*Vy"), ("quotient", "Vx/D")]


def _flow(n=20_000, seed=7):
    return synth("sinusoid-mix", n, seed=seed)


@pytest.fixture(scope="module")
def sweeps():
    fields = _flow()
    names = [v.name for v in fields]
    original = [v.values for v in fields]
    stores, rows = {}, {}
    for codec in CODECS:
        stores[codec] = refactor_all(fields, codec)
        rows[codec] = sweep(stores[codec], SWEEP_QOIS, names, default_schedule(), original=original)
    return fields, stores, rows


# 1. single-operation soundness against dense grids

def _theorem_cases(rng, kind):
    """(certified bound, brute-force sup, reference scale); sup is inf when
    the operation's precondition fails."""
    x = float(rng.uniform(-10, 10))
    eps = float(rng.uniform(0, 3)) * rng.choice([1e-3, 1e-1, 1.0])
    if kind == "power":
        n = int(rng.integers(1, 7))
        return (bound_power(n, x, eps), *brute_sup_1d(lambda t: t ** n, x, eps, with_scale=True))
    if kind == "sqrt":
        x = abs(x)
        return (bound_sqrt(x, eps), *brute_sup_1d(np.sqrt, x, eps, lo=0.0, with_scale=True))
    if kind == "radical":
        c = float(rng.uniform(-10, 10))
        if abs(x + c) <= eps:
            return bound_radical(c, x, eps), math.inf, 0.0
        return (bound_radical(c, x, eps),
                *brute_sup_1d(lambda t: 1 / (t + LD(c)), x, eps, with_scale=True))
    xs = rng.uniform(-10, 10, 3)
    es = rng.uniform(0, 2, 3) * rng.choice([1e-3, 1e-1, 1.0])
    if kind == "sum":
        w = rng.uniform(-4, 4, 3)
        f = lambda a, b, c: LD(w[0]) * a + LD(w[1]) * b + LD(w[2]) * c
        return (bound_weighted_sum(w, es), *brute_sup_nd(f, xs, es, 21, with_scale=True))
    if kind == "product":
        return (bound_product(xs[0], es[0], xs[1], es[1]),
                *brute_sup_nd(lambda a, b: a * b, xs[:2], es[:2], 101, with_scale=True))
    if abs(xs[1]) <= es[1]:
        return bound_quotient(xs[0], es[0], xs[1], es[1]), math.inf, 0.0
    return (bound_quotient(xs[0], es[0], xs[1], es[1]),
            *brute_sup_nd(lambda a, b: a / b, xs[:2], es[:2], 101, with_scale=True))


def test_criterion_1_single_operation_soundness(acceptance):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    failures = {}
    for kind in ("power", "sqrt", "radical", "sum", "product", "quotient"):
        bad = 0
        for _ in range(1000):
            certified, brute, scale = _theorem_cases(rng, kind)
            if math.isinf(brute):
                bad += not math.isinf(certified)
            elif not certified >= brute - reference_slack(scale):
                bad += 1
        failures[kind] = bad
    elapsed = time.perf_counter() - start
    ok = not any(failures.values()) and elapsed < 60
    acceptance(1, "single-operation bounds dominate brute-force sup", ok,
               f"6x1000 cases, failures {failures}, {elapsed:.1f}s")
    assert ok


# 2. tight examples

def test_criterion_2_tightness_witnesses(acceptance):
    pairs = {
        "power": (bound_power(2, 3.0, 0.1), brute_sup_1d(lambda x: x * x, 3.0, 0.1)),
        "sqrt": (bound_sqrt(4.0, 1.0), brute_sup_1d(np.sqrt, 4.0, 1.0)),
        "radical": (bound_radical(1.0, 1.0, 0.5), brute_sup_1d(lambda x: 1 / (x + 1), 1.0, 0.5)),
        "quotient": (bound_quotient(1.0, 0.1, 2.0, 0.1),
                     brute_sup_nd(lambda a, b: a / b, [1.0, 2.0], [0.1, 0.1], 101)),
    }
    closed = {"power": 0.61, "sqrt": 2 - math.sqrt(3), "radical": 1 / 6, "quotient": 0.3 / 3.8}
    worst = max(max(abs(c - b) / b, abs(c - closed[k]) / closed[k]) for k, (c, b) in pairs.items())
    ok = worst <= 1e-12
    acceptance(2, "tight examples equal brute-force sup", ok, f"max rel diff {worst:.2e}")
    assert ok


# 3. composed trees

def test_criterion_3_composition_soundness(acceptance):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    violations = checked = bounded = 0
    for _ in range(500):
        nvars = int(rng.integers(1, 5))
        expr = random_tree(rng, 5, nvars)
        xs = rng.uniform(-4, 4, nvars)
        es = rng.uniform(1e-4, 0.3, nvars) * (1 + np.abs(xs))
        center, bound = propagate(expr, PointContext(list(xs), list(es)))
        checked += 1
        if not math.isfinite(bound):
            continue
        bounded += 1
        samples = box_samples(rng, xs, es, 100_000)
        moved = ld_eval(expr, samples)
        truth = ld_eval(expr, [LD(x) for x in xs])
        if not within_bound(moved, truth, bound):
            violations += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 300
    acceptance(3, "composed bounds dominate 1e5 in-box perturbations", ok,
               f"{checked} trees ({bounded} finite bounds), {violations} violations, {elapsed:.1f}s")
    assert ok


# 4. prefix conformance

def _arrays():
    rng = np.random.default_rng(4)
    t = np.linspace(0, 1, 1_000_000)
    return [
        VariableData("smooth1e6", np.sin(40 * t) + 0.3 * np.cos(7 * t)),
        VariableData("noise", rng.normal(size=200_000)),
        VariableData("uniform", rng.uniform(-1e3, 1e3, 50_000)),
        VariableData("tiny", rng.normal(scale=1e-9, size=10_000)),
        VariableData("huge", rng.normal(1e12, 1e9, size=10_000)),
        VariableData("step", np.repeat([0.0, 5.0, -3.0, 2.5], 5_000)),
        VariableData("spikes", np.where(rng.random(30_000) < 0.001, 1e4, rng.normal(size=30_000))),
        VariableData("ramp", np.linspace(-7, 7, 4_097)),
        VariableData("constant", np.full(1_000, 3.25)),
        VariableData("flow", _flow(100_000, seed=3)[0].values),
    ]


def test_criterion_4_prefix_conformance(acceptance):
    problems = []
    for codec in CODECS:
        for var in _arrays():
            rec, prefixes = prefix_errors(var, codec)
            for k, (bound, err, _) in enumerate(prefixes):
                if err > bound:
                    problems.append(f"{codec}/{var.name} prefix {k}: {err:.3e} > {bound:.3e}")
            bounds = [b for b, _, _ in prefixes]
            if any(a <= b for a, b in zip(bounds, bounds[1:])):
                problems.append(f"{codec}/{var.name}: bounds not strictly decreasing")
            state = new_state(rec)
            _, store = make_store(var, codec)
            reconstruct(state, store, 0.0)
            final = float(np.max(np.abs(state.values - var.values)))
            if not (state.at_full_fidelity and final <= rec.floor):
                problems.append(f"{codec}/{var.name}: full retrieval error {final:.3e} floor {rec.floor:.3e}")
    ok = not problems
    acceptance(4, "every prefix within its nominal bound; full retrieval reaches the floor", ok,
               f"3 codecs x 10 arrays, {len(problems)} problems" + (f": {problems[:3]}" if problems else ""))
    assert ok, problems


# 5. guarantee chain

def test_criterion_5_guarantee_chain(acceptance, sweeps):
    _, _, rows = sweeps
    all_rows = [r for codec in CODECS for r in rows[codec]]
    satisfied = [r for r in all_rows if r.satisfied]
    broken = [r for r in satisfied if not (r.max_actual <= r.max_estimated <= r.requested_tau)]
    ok = not broken and len(all_rows) == 3 * 4 * 20
    acceptance(5, "actual <= estimated <= tau on every satisfied sweep row", ok,
               f"{len(satisfied)}/{len(all_rows)} rows satisfied, {len(broken)} exceptions")
    assert ok


# 6. byte ordering

def test_criterion_6_progressive_efficiency(acceptance, sweeps):
    _, stores, rows = sweeps
    independent = sum(r.bytes for r in rows["snapshot"])
    delta = sum(r.bytes for r in rows["delta"])
    rowwise = all(a.bytes >= b.bytes for a, b in zip(rows["snapshot"], rows["delta"]))
    drift = 0.0
    for codec in ("delta", "bitplane"):
        for qoi, _ in SWEEP_QOIS:
            last = [r for r in rows[codec] if r.qoi == qoi][-1]
            once = one_shot_bytes(stores[codec], last.eps)
            drift = max(drift, abs(last.bytes - once) / once)
    ok = independent >= delta and drift < 0.01
    acceptance(6, "independent >= delta bytes; incremental equals one-shot", ok,
               f"independent {independent} vs delta {delta} bytes (row-wise {rowwise}), "
               f"max incremental/one-shot drift {drift:.2%}")
    assert ok


# 7. reassign trace and iteration bound

def test_criterion_7_reassign_trace(acceptance, sweeps):
    trace, eps = [], 0.9
    while True:
        trace.append(eps)
        if propagate(Var(0), PointContext([1.0], [eps]))[1] <= 0.5:
            break
        eps /= 1.5
    new, divisions, done = reassign_eb(Var(0), [1.0], [0.9], 0.5, c=1.5)
    trace_ok = (np.allclose(trace, [0.9, 0.6, 0.4], rtol=1e-15, atol=0) and divisions == 2 and done
                and new[0] == trace[-1])
    fields, stores, _ = sweeps
    names = [v.name for v in fields]
    worst = 0.0
    for codec in CODECS:
        for qname, text in SWEEP_QOIS:
            session = Retriever(stores[codec], names)
            report = session.run([QoiRequest(qname, parse_qoi(text, names), 1e-6)])
            limit = 1 + sum(math.ceil(max(0.0, math.log(stores[codec].record(v).init_bound
                                                          / stores[codec].record(v).floor, 1.5)))
                            for v in report.eps)
            worst = max(worst, report.iterations / limit)
    ok = trace_ok and worst <= 1
    acceptance(7, "reassign trace 0.9 -> 0.6 -> 0.4 and iterations within bound", ok,
               f"trace {[round(e, 12) for e in trace]}, max iterations/limit {worst:.2f}")
    assert ok


# 8. builtin QoIs against closed forms

def test_criterion_8_builtin_qoi_fidelity(acceptance):
    worst = qoi_check(10_000, seed=0)
    ok = max(worst.values()) <= 1e-12
    acceptance(8, "builtin QoI trees match closed forms", ok,
               f"10000 states, max rel deviation {max(worst.values()):.2e}")
    assert ok


# 9. masks

def test_criterion_9_mask_correctness(acceptance):
    fields = synth("zero-patch-velocity", 50_000, seed=9)
    names = [v.name for v in fields]
    mask = build_mask(fields)
    expr = parse_qoi(GE_FORMULAS["VTOT"], names)
    nonzero_values = nonzero_bounds = prefixes = 0
    for codec in CODECS:
        store = refactor_all(fields, codec, names)
        for v in fields:
            _, steps = prefix_errors(v, codec, mask)
            for _, _, values in steps:
                prefixes += 1
                nonzero_values += int(np.count_nonzero(values[mask.bits]))
        session = Retriever(store, names)
        for tau in (1e-1, 1e-3, 1e-5):
            session.run([QoiRequest("VTOT", expr, tau)])
            vals = [session.values(n)[mask.bits] for n in names]
            eps = [session.states[n].achieved_bound for n in names]
            masks = [np.ones(mask.count, dtype=bool)] * 3
            (est,) = estimate_all([QoiRequest("VTOT", expr, tau, absolute=True)], vals, eps, masks)
            nonzero_bounds += est.absolute_estimate != 0.0
            nonzero_values += int(np.count_nonzero(np.concatenate(vals)))
    ok = nonzero_values == 0 and nonzero_bounds == 0
    acceptance(9, "masked points are exact zeros and add no QoI error", ok,
               f"{mask.count} masked points, {prefixes} prefixes, {nonzero_values} nonzero values, "
               f"{nonzero_bounds} nonzero estimates")
    assert ok


# 10. size reduction

def test_criterion_10_size_reduction(acceptance):
    fields = _flow(100_000, seed=1)
    names = [v.name for v in fields]
    store = refactor_all(fields, "bitplane")
    rows = sweep(store, SWEEP_QOIS, names, [1e-5], original=[v.values for v in fields])
    factors = {r.qoi: r.reduction_factor for r in rows}
    ok = all(r.satisfied and r.reduction_factor > 1 for r in rows)
    acceptance(10, "bitplane retrieval at tau=1e-5 reads fewer bytes than the originals", ok,
               ", ".join(f"{k} {v:.2f}x" for k, v in factors.items()))
    assert ok
