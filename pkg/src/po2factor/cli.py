"""Command-line interface: ``po2factor <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, fields
from fractions import Fraction

import numpy as np

from . import bench, engine, theory
from .core import DimensionError, InvalidInputError, Po2Error, snr_db
from .factorizer import FactorConfig, as_rate, factorize


def read_matrix(path) -> np.ndarray:
    """Text matrix: first line ``N K``, then ``N`` rows of ``K`` reals."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise InvalidInputError(f"{path}: first line must be 'N K'")
        N, K = int(head[0]), int(head[1])
        vals = np.array(fh.read().split(), dtype=np.float64)
    if vals.size != N * K:
        raise DimensionError(f"{path}: expected {N * K} values, found {vals.size}")
    return vals.reshape(N, K)


def write_matrix(path, M) -> None:
    M = np.asarray(M, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for tok in text.split(","):
        n, _, k = tok.strip().lower().partition("x")
        if not k:
            raise argparse.ArgumentTypeError(f"size {tok!r} is not of the form NxK")
        out.append((int(n), int(k)))
    return out


def _ints(text: str) -> list[int]:
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",")]


def _fracs(text: str) -> list[Fraction]:
    return [Fraction(t.strip()) for t in text.split(",")]


def _cmd_factorize(args) -> int:
    M = read_matrix(args.matrix)
    cfg = FactorConfig(Q=args.q, R=as_rate(args.r), per_column_budget=args.s, seed=args.seed)
    fact = factorize(M, cfg)
    engine.save(fact, args.out, text=args.text)
    ledger = engine.factorization_ledger(fact)
    print(f"{fact.N}x{fact.K} Q={fact.Q} R={fact.config.R} snr_db={snr_db(M, fact.reconstruct()):.4f} "
          f"adds_per_entry={ledger.per_entry:.6f} -> {args.out}")
    return 0


def _cmd_apply(args) -> int:
    fact = engine.load(args.fact)
    x = np.array(sys.stdin.read().split(), dtype=np.float64)
    y, _ = engine.apply_factorization(fact, x)
    sys.stdout.write("".join(f"{v:.17g}\n" for v in y))
    return 0


def _cmd_snr(args) -> int:
    M = read_matrix(args.matrix)
    fact = engine.load(args.fact)
    print(f"{snr_db(M, fact.reconstruct()):.6f}")
    return 0


def _cmd_roundtrip(args) -> int:
    with open(args.fact, "rb") as fh:
        data = fh.read()
    fact = engine.deserialize(data)
    again = engine.serialize(fact, text=data[4:5] == b"T")
    if again != data or engine.deserialize(again) != fact:
        print("roundtrip mismatch", file=sys.stderr)
        return 1
    print(f"ok {len(data)} bytes, Q={fact.Q}")
    return 0


def _cmd_bench(args) -> int:
    kw = dict(trials=args.trials, seed=args.seed, min_entries=args.min_entries)
    if args.q:
        kw["q_values"] = args.q
    if args.rates:
        kw["r_values"] = args.rates
    if args.budgets:
        kw["budgets"] = args.budgets
    if args.table == "table1":
        kw["sizes"] = args.sizes or (list(bench.PUBLISHED_TABLE1) if args.extended else bench.DESK_TABLE1_SIZES)
        result = bench.run_table1(bench.BenchmarkSpec(**kw))
    elif args.table == "table2":
        kw["k_values"] = args.ks or (1024,)
        kw.setdefault("q_values", list(range(1, 8)))
        result = bench.run_table2(bench.BenchmarkSpec(**kw))
    else:
        kw["k_values"] = args.ks or ((256, 1024, 4096, 16384) if args.extended else (256,))
        result = bench.run_table3(bench.BenchmarkSpec(**kw))
    if args.out:
        bench.emit_csv(result, args.out)
    else:
        bench.write_csv(result.records, sys.stdout)
    for note in result.notes if args.verbose else ():
        print(f"note: {note}", file=sys.stderr)
    return 0


def _cmd_theory(args) -> int:
    if args.what == "fig1":
        table = bench.read_csv(args.table) if args.table else bench.PUBLISHED_TABLE1
        bench.emit_fig1(table, args.out or "/dev/stdout")
        return 0
    if args.k is None:
        raise InvalidInputError("theory predict needs --k")
    rep = theory.theory_report(args.k, args.q, float(as_rate(args.r)), N=args.n)
    names = [f.name for f in fields(rep)]
    print(",".join(names))
    print(",".join(repr(v) for v in asdict(rep).values()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="po2factor", description="Sparse power-of-two matrix factorization.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("factorize", help="factorize a text matrix into a PO2F file")
    f.add_argument("matrix")
    f.add_argument("--q", type=int, default=2)
    f.add_argument("--r", default="1")
    f.add_argument("--s", type=int, default=None, help="nonzeros per column of F_2..F_Q")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.add_argument("--text", action="store_true", help="write the line-oriented text format")
    f.set_defaults(func=_cmd_factorize)

    a = sub.add_parser("apply", help="multiply a vector read from stdin")
    a.add_argument("fact")
    a.set_defaults(func=_cmd_apply)

    s = sub.add_parser("snr", help="SNR of a factorization against a matrix")
    s.add_argument("matrix")
    s.add_argument("fact")
    s.set_defaults(func=_cmd_snr)

    b = sub.add_parser("bench", help="reproduce the SNR tables")
    b.add_argument("table", choices=("table1", "table2", "table3"))
    b.add_argument("--trials", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--sizes", type=_sizes)
    b.add_argument("--q", type=_ints, help="e.g. 1-5 or 1,2,4")
    b.add_argument("--rates", type=_fracs, help="e.g. 1,1/2,1/4")
    b.add_argument("--ks", type=_ints)
    b.add_argument("--budgets", type=_fracs)
    b.add_argument("--min-entries", type=int, default=10 ** 5)
    b.add_argument("--extended", action="store_true", help="all published sizes (hours)")
    b.add_argument("--out")
    b.add_argument("-v", "--verbose", action="store_true")
    b.set_defaults(func=_cmd_bench)

    t = sub.add_parser("theory", help="analytic curves and predictions")
    t.add_argument("what", choices=("fig1", "predict"))
    t.add_argument("--table", help="table1 CSV for fig1 markers (default: published values)")
    t.add_argument("--k", type=int)
    t.add_argument("--q", type=int, default=2)
    t.add_argument("--r", default="1")
    t.add_argument("--n", type=int)
    t.add_argument("--out")
    t.set_defaults(func=_cmd_theory)

    r = sub.add_parser("roundtrip", help="check a PO2F file re-serializes bit-exactly")
    r.add_argument("fact")
    r.set_defaults(func=_cmd_roundtrip)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Po2Error, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
