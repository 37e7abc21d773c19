"""Datasets, synthetic fields, refactoring helpers and evaluation sweeps."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec.core import VariableData, build_mask, new_state, reconstruct, refactor_variable
from .codec.store import MemoryStore, write_store
from .expr import evaluate
from .ge import GE_VARIABLES, builtin_ge_qois, ge_closed_form
from .parse import parse_qoi
from .retrieve import QoiRequest, Retriever

__all__ = [
    "DatasetError",
    "VariableFile",
    "DatasetSpec",
    "ingest",
    "write_dataset",
    "load_dataset",
    "SYNTH_KINDS",
    "synth",
    "default_schedule",
    "parse_schedule",
    "refactor_all",
    "SweepRow",
    "sweep",
    "write_sweep_csv",
    "one_shot_bytes",
    "actual_qoi_error",
    "qoi_check",
    "random_ge_states",
]

SYNTH_KINDS = ("sinusoid-mix", "smoothed-noise", "zero-patch-velocity")
SWEEP_COLUMNS = ("codec", "qoi", "requested_tau", "max_estimated", "max_actual", "bitrate", "bytes",
                 "iterations", "reduction_factor", "satisfied")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class VariableFile:
    name: str
    path: str
    count: int | None = None
    dims: tuple[int, ...] = ()
    precision: int = 64
    byteorder: str = "<"

    @property
    def dtype(self) -> np.dtype:
        if self.precision not in (32, 64):
            raise DatasetError(f"precision must be 32 or 64, got {self.precision}")
        if self.byteorder not in "<>":
            raise DatasetError(f"byte order must be '<' or '>', got {self.byteorder!r}")
        return np.dtype(f"{self.byteorder}f{self.precision // 8}")


@dataclass(frozen=True)
class DatasetSpec:
    variables: tuple[VariableFile, ...]


def _expected_count(vf: VariableFile) -> int | None:
    if vf.dims:
        return int(np.prod(vf.dims))
    return vf.count


def ingest(spec: DatasetSpec) -> list[VariableData]:
    """Load raw binary arrays, widening 32-bit input to float64."""
    out = []
    for vf in spec.variables:
        path = Path(vf.path)
        if not path.is_file():
            raise DatasetError(f"{path}: no such file")
        dtype = vf.dtype
        size = path.stat().st_size
        count = _expected_count(vf)
        if count is None:
            if size % dtype.itemsize:
                raise DatasetError(f"{path}: {size} bytes is not a multiple of {dtype.itemsize}")
            count = size // dtype.itemsize
        if size != count * dtype.itemsize:
            raise DatasetError(f"{path}: expected {count * dtype.itemsize} bytes "
                               f"({count} x {dtype.itemsize}), found {size}")
        raw = np.fromfile(path, dtype=dtype, count=count)
        values = raw.astype(np.float64)
        if np.isnan(values).any():
            raise DatasetError(f"{path}: NaN at index {int(np.flatnonzero(np.isnan(values))[0])}")
        if not np.isfinite(values).all():
            raise DatasetError(f"{path}: infinite value at index "
                               f"{int(np.flatnonzero(~np.isfinite(values))[0])}")
        out.append(VariableData(vf.name, values, tuple(vf.dims) or (count,)))
    return out


def write_dataset(directory, variables: Sequence[VariableData]) -> Path:
    """``<dir>/<name>.bin`` (float64, little-endian) plus ``dataset.json``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for var in variables:
        fname = f"{var.name}.bin"
        var.values.astype("<f8").tofile(root / fname)
        entries.append({"name": var.name, "file": fname, "count": var.n, "dims": list(var.dims),
                        "precision": 64, "byteorder": "<"})
    (root / "dataset.json").write_text(json.dumps({"variables": entries}, indent=1), encoding="utf-8")
    return root


def load_dataset(directory, names: Iterable[str] | None = None) -> list[VariableData]:
    root = Path(directory)
    meta_path = root / "dataset.json"
    if not meta_path.is_file():
        raise DatasetError(f"{root}: no dataset.json")
    doc = json.loads(meta_path.read_text(encoding="utf-8"))
    wanted = None if names is None else list(names)
    files = []
    for e in doc["variables"]:
        if wanted is not None and e["name"] not in wanted:
            continue
        files.append(VariableFile(e["name"], str(root / e["file"]), int(e["count"]),
                                  tuple(e.get("dims", ())), int(e.get("precision", 64)),
                                  e.get("byteorder", "<")))
    if wanted is not None:
        missing = set(wanted) - {f.name for f in files}
        if missing:
            raise DatasetError(f"{root}: no variable(s) {sorted(missing)}")
        files.sort(key=lambda f: wanted.index(f.name))
    return ingest(DatasetSpec(tuple(files)))


def _sinusoids(rng, t, terms, amp):
    out = np.zeros_like(t)
    for _ in range(terms):
        freq = rng.uniform(1.0, 40.0)
        phase = rng.uniform(0, 2 * np.pi)
        out += rng.uniform(0.2, 1.0) * np.sin(2 * np.pi * freq * t + phase)
    return amp * out / terms


def _smoothed(rng, n, amp, width):
    width = max(3, min(width, n))
    noise = rng.standard_normal(n + width)
    kernel = np.hanning(width + 2)[1:-1]
    kernel /= kernel.sum()
    sm = np.convolve(noise, kernel, mode="valid")[:n]
    return amp * sm / max(float(np.max(np.abs(sm))), 1e-300)


def synth(kind: str, n: int, seed: int = 0, zero_fraction: float = 0.1) -> list[VariableData]:
    """Deterministic stand-ins for flow data.

    ``sinusoid-mix`` and ``smoothed-noise`` give the five fields
    ``Vx, Vy, Vz, P, D`` with positive pressure and density;
    ``zero-patch-velocity`` gives ``Vx, Vy, Vz`` that are all exactly zero on
    one contiguous run of about ``zero_fraction * n`` points.
    """
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown kind {kind!r} (choose from {', '.join(SYNTH_KINDS)})")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    if kind == "smoothed-noise":
        width = max(8, n // 200)
        vel = [_smoothed(rng, n, 250.0, width) + rng.uniform(-50, 50) for _ in range(3)]
        p = 1.0e5 + _smoothed(rng, n, 2.0e4, width)
        d = 1.2 + _smoothed(rng, n, 0.4, width)
    else:
        vel = [_sinusoids(rng, t, 5, 300.0) + rng.uniform(-50, 50) for _ in range(3)]
        p = 1.0e5 + _sinusoids(rng, t, 4, 3.0e4)
        d = 1.2 + _sinusoids(rng, t, 4, 0.5)
    if kind == "zero-patch-velocity":
        count = int(round(zero_fraction * n))
        start = int(rng.integers(0, n - count + 1)) if count < n else 0
        for v in vel:
            v[start:start + count] = 0.0
        return [VariableData(name, v) for name, v in zip(("Vx", "Vy", "Vz"), vel)]
    return [VariableData(name, x) for name, x in zip(GE_VARIABLES, (*vel, p, d))]


def default_schedule() -> list[float]:
    return [0.1 * 2.0 ** -i for i in range(20)]


def parse_schedule(text: str | None) -> list[float]:
    """``default``, ``start:ratio:count`` or a comma list; must decrease strictly."""
    if not text or text == "default":
        sched = default_schedule()
    elif text.count(":") == 2:
        start, ratio, count = text.split(":")
        sched = [float(start) * float(ratio) ** i for i in range(int(count))]
    else:
        sched = [float(x) for x in text.split(",")]
    if not sched or any(not s > 0 for s in sched) or any(a <= b for a, b in zip(sched, sched[1:])):
        raise ValueError(f"schedule must be positive and strictly decreasing, got {sched}")
    return sched


def refactor_all(variables: Sequence[VariableData], codec: str, mask_vars: Sequence[str] = (),
                 config: dict | None = None, out=None):
    """Refactor every variable; optionally mask points where all of
    ``mask_vars`` are zero.  Writes a store when ``out`` is given, otherwise
    returns an in-memory one."""
    mask = None
    if mask_vars:
        chosen = [v for v in variables if v.name in set(mask_vars)]
        if len(chosen) != len(set(mask_vars)):
            raise DatasetError(f"mask variables {list(mask_vars)} not all present")
        mask = build_mask(chosen)
        if mask.count == 0:
            mask = None
    records, segments, masks = [], {}, {}
    for var in variables:
        m = mask if mask is not None and var.name in set(mask_vars) else None
        rec, segs = refactor_variable(var, codec, m, config)
        records.append(rec)
        segments[var.name] = segs
        if m is not None:
            masks[var.name] = m
    if out is not None:
        write_store(out, records, segments, masks)
    return MemoryStore(records, segments, masks)


def actual_qoi_error(expr, original: Sequence[np.ndarray], recon: Sequence[np.ndarray]) -> float:
    """Max absolute QoI error over the range of the QoI on the original data."""
    with np.errstate(all="ignore"):
        f0 = np.atleast_1d(evaluate(expr, original, strict=False))
        f1 = np.atleast_1d(evaluate(expr, recon, strict=False))
    err = np.abs(f0 - f1)
    ok = ~np.isnan(f0)
    if np.any(np.isnan(f1) & ok):
        return math.inf
    span = float(np.max(f0[ok]) - np.min(f0[ok])) if np.any(ok) else 0.0
    worst = float(np.max(err[ok])) if np.any(ok) else 0.0
    if worst == 0:
        return 0.0
    return worst / span if span > 0 else math.inf


@dataclass
class SweepRow:
    codec: str
    qoi: str
    requested_tau: float
    max_estimated: float
    max_actual: float
    bitrate: float
    bytes: int
    iterations: int
    reduction_factor: float
    satisfied: bool
    eps: dict | None = None

    def csv_fields(self) -> dict:
        return {k: getattr(self, k) for k in SWEEP_COLUMNS}


def sweep(store, qois: Sequence[tuple[str, str]], names: Sequence[str], schedule: Sequence[float],
          original: Sequence[np.ndarray] | None = None, codec_label: str | None = None,
          backend: str | None = None) -> list[SweepRow]:
    """For each QoI, retrieve progressively through ``schedule`` in one session.

    ``max_actual`` is measured against ``original`` when given; otherwise
    against the store's full-fidelity reconstruction.
    """
    names = list(names)
    if original is None:
        original = [_full_fidelity(store, name) for name in names]
    label = codec_label or store.record(names[0]).codec
    rows = []
    for qname, text in qois:
        expr = parse_qoi(text, names)
        session = Retriever(store, names, backend=backend)
        for tau in schedule:
            report = session.run([QoiRequest(qname, expr, tau)])
            recon = [session.values(n) if n in session.states else np.zeros(1) for n in names]
            used = sorted({names.index(v) for v in report.eps})
            orig_used = [original[i] if i in used else None for i in range(len(names))]
            recon_used = [recon[i] if i in used else None for i in range(len(names))]
            actual = actual_qoi_error(expr, orig_used, recon_used)
            total = session.bytes_read
            original_bytes = sum(8 * store.record(n).n for n in report.eps)
            rows.append(SweepRow(
                codec=label, qoi=qname, requested_tau=tau,
                max_estimated=report.qois[0].estimate, max_actual=actual,
                bitrate=8.0 * total / (report.n * len(report.eps)), bytes=total,
                iterations=report.iterations,
                reduction_factor=original_bytes / total if total else math.inf,
                satisfied=report.satisfied, eps=dict(report.eps),
            ))
    return rows


def _full_fidelity(store, name):
    state = new_state(store.record(name), store.mask(name))
    return reconstruct(state, store, 0.0).values


def one_shot_bytes(store, eps: dict) -> int:
    """Bytes a fresh session reads to reach ``eps`` (per variable) directly."""
    total = 0
    for name, e in eps.items():
        state = new_state(store.record(name), store.mask(name))
        total += reconstruct(state, store, e).bytes_read
    return total


def write_sweep_csv(path, rows: Sequence[SweepRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(SWEEP_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow(row.csv_fields())


def random_ge_states(trials: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    vel = [rng.uniform(-500.0, 500.0, trials) for _ in range(3)]
    p = rng.uniform(1e4, 1e6, trials)
    d = rng.uniform(0.1, 5.0, trials)
    return [*vel, p, d]


def qoi_check(trials: int = 10_000, seed: int = 0) -> dict[str, float]:
    """Max relative deviation of each builtin QoI tree from the closed form."""
    state = random_ge_states(trials, seed)
    direct = ge_closed_form(*state)
    out = {}
    for name, expr in builtin_ge_qois().items():
        tree = evaluate(expr, state)
        ref = direct[name]
        out[name] = float(np.max(np.abs(tree - ref) / np.abs(ref)))
    return out

