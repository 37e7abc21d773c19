"""``proqoi`` command line.

Exit status: 0 when every requested QoI is satisfied, 2 when retrieval ends
unsatisfied (or a check fails), 1 on usage and I/O errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .codec import CodecError, SegmentStore, codec_kinds
from .codec.core import VariableData
from .harness import (
    SYNTH_KINDS,
    DatasetError,
    DatasetSpec,
    VariableFile,
    ingest,
    load_dataset,
    parse_schedule,
    qoi_check,
    refactor_all,
    sweep,
    synth,
    write_dataset,
    write_sweep_csv,
)
from .retrieve import QoiRequest, Retriever

EXIT_OK, EXIT_ERROR, EXIT_UNSATISFIED = 0, 1, 2
QOI_CHECK_TOLERANCE = 1e-12


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _dims(text: str) -> tuple[int, ...]:
    parts = text.replace(",", "x").split("x")
    dims = tuple(int(p) for p in parts if p)
    if not dims or any(d <= 0 for d in dims):
        raise DatasetError(f"bad dims {text!r}")
    return dims


def _split_input(text: str) -> tuple[str, tuple[int, ...]]:
    path, sep, dims = text.rpartition(":")
    if sep and dims and all(c.isdigit() or c in "x," for c in dims):
        return path, _dims(dims)
    return text, ()


def _load_inputs(args) -> list[VariableData]:
    if len(args.input) == 1 and Path(_split_input(args.input[0])[0]).is_dir():
        return load_dataset(args.input[0], args.var or None)
    if len(args.var) != len(args.input):
        raise DatasetError(f"{len(args.input)} --input file(s) but {len(args.var)} --var name(s)")
    files = []
    for text, name in zip(args.input, args.var):
        path, dims = _split_input(text)
        files.append(VariableFile(name, path, None, dims, args.precision,
                                  "<" if args.byteorder == "little" else ">"))
    return ingest(DatasetSpec(tuple(files)))


def cmd_refactor(args) -> int:
    variables = _load_inputs(args)
    config = {}
    if args.ladder:
        config["ladder"] = args.ladder
    if args.planes is not None:
        config["planes"] = args.planes
    if args.zlib:
        config["zlib"] = True
    mask_vars = [v for v in (args.mask_zero or "").split(",") if v]
    store = refactor_all(variables, args.codec, mask_vars, config, out=args.out)
    for name, rec in store.records.items():
        print(f"{name}: {rec.codec}, {len(rec.segments)} segments, {rec.total_bytes} bytes, "
              f"floor {rec.floor:.3e}, masked {rec.masked_count}")
    return EXIT_OK


def _store_names(store, vars_arg):
    return [v for v in vars_arg.split(",") if v] if vars_arg else store.names


def cmd_retrieve(args) -> int:
    store = SegmentStore(args.store)
    names = _store_names(store, args.vars)
    session = Retriever(store, names, backend=args.backend)
    requests = [QoiRequest.parse(q, names, args.absolute) for q in args.qoi]
    report = session.run(requests)
    for est in report.qois:
        mark = "ok" if est.satisfied else "FAIL"
        print(f"{est.name}: estimate {est.estimate:.6e} tolerance {est.tau:.6e} {mark}")
    print(f"iterations {report.iterations}, bytes {report.total_bytes}, bitrate {report.bitrate:.4f}")
    if args.report:
        report.write_json(args.report)
    if args.trace:
        report.write_trace(args.trace)
    if args.output:
        write_dataset(args.output, [VariableData(n, session.values(n)) for n in report.eps])
    if report.unattainable:
        print(f"unattainable at full fidelity: {', '.join(report.unattainable)}", file=sys.stderr)
    return EXIT_OK if report.satisfied else EXIT_UNSATISFIED


def _sweep_qoi(text: str) -> tuple[str, str]:
    name, sep, expr = text.partition("=")
    if not sep or not name.strip() or not expr.strip():
        raise ValueError(f"QoI must look like name=expr, got {text!r}")
    if "@" in expr:
        raise ValueError(f"sweep QoIs take no tolerance (the schedule supplies it): {text!r}")
    return name.strip(), expr.strip()


def cmd_sweep(args) -> int:
    store = SegmentStore(args.store)
    names = _store_names(store, args.vars)
    original = None
    if args.original:
        data = {v.name: v.values for v in load_dataset(args.original, names)}
        original = [data[n] for n in names]
    rows = sweep(store, [_sweep_qoi(q) for q in args.qoi], names, parse_schedule(args.schedule),
                 original=original, backend=args.backend)
    write_sweep_csv(args.out, rows)
    failed = sum(not r.satisfied for r in rows)
    print(f"{len(rows)} rows written to {args.out}, {failed} unsatisfied")
    return EXIT_OK if not failed else EXIT_UNSATISFIED


def cmd_qoi_check(args) -> int:
    worst = qoi_check(args.trials, args.seed)
    for name, dev in worst.items():
        print(f"{name}: max relative deviation {dev:.3e}")
    return EXIT_OK if max(worst.values()) <= QOI_CHECK_TOLERANCE else EXIT_UNSATISFIED


def cmd_synth(args) -> int:
    variables = synth(args.kind, args.n, args.seed, args.zero_fraction)
    root = write_dataset(args.out, variables)
    print(f"wrote {', '.join(v.name for v in variables)} ({args.n} points) to {root}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="proqoi", description="Progressive retrieval with QoI error guarantees.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("refactor", help="refactor raw arrays into a progressive store")
    r.add_argument("--input", action="append", required=True,
                   help="raw file as path[:dims] (repeat), or a dataset directory from 'synth'")
    r.add_argument("--var", action="append", default=[], help="variable name per --input")
    r.add_argument("--codec", choices=codec_kinds(), default="bitplane")
    r.add_argument("--ladder", help="snapshot ladder, e.g. 1e-1..1e-10 or 1e-1,1e-3")
    r.add_argument("--planes", type=int, help="bitplane count (bitplane codec)")
    r.add_argument("--zlib", action="store_true", help="deflate bitplane payloads")
    r.add_argument("--precision", type=int, choices=(32, 64), default=64)
    r.add_argument("--byteorder", choices=("little", "big"), default="little")
    r.add_argument("--mask-zero", metavar="VARS",
                   help="comma list; points where all are zero are stored exactly")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_refactor)

    q = sub.add_parser("retrieve", help="retrieve until every QoI meets its tolerance")
    q.add_argument("--store", required=True)
    q.add_argument("--qoi", action="append", required=True, help='"name=expr@tau" (repeat)')
    q.add_argument("--absolute", action="store_true", help="tolerances are absolute")
    q.add_argument("--vars", help="comma list fixing variable order (default: store order)")
    q.add_argument("--trace", help="per-iteration CSV")
    q.add_argument("--report", help="JSON report")
    q.add_argument("--output", help="write reconstructed arrays as a dataset directory")
    q.add_argument("--backend", choices=("cython", "numpy"))
    q.set_defaults(func=cmd_retrieve)

    s = sub.add_parser("sweep", help="progressive tolerance sweep to CSV")
    s.add_argument("--store", required=True)
    s.add_argument("--qoi", action="append", required=True, help='"name=expr" (repeat)')
    s.add_argument("--schedule", default="default",
                   help="'default' (0.1*2^-i, i=0..19), start:ratio:count, or a comma list")
    s.add_argument("--original", help="dataset directory with the original arrays")
    s.add_argument("--vars", help="comma list fixing variable order (default: store order)")
    s.add_argument("--backend", choices=("cython", "numpy"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("qoi-check", help="compare builtin QoI trees with closed forms")
    c.add_argument("--trials", type=int, default=10_000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_qoi_check)

    y = sub.add_parser("synth", help="write a synthetic dataset")
    y.add_argument("--kind", choices=SYNTH_KINDS, default="sinusoid-mix")
    y.add_argument("--n", type=int, default=100_000)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--zero-fraction", type=float, default=0.1)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, CodecError) as exc:
        print(f"proqoi: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
