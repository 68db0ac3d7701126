"""Shift-and-add application of po2 factorizations and the PO2F file format.

PO2F layout (all integers little-endian in binary mode)::

    "PO2F" mode(1 byte: 'B' binary | 'T' text) version(u16)
    header:  N u32, K u32, Q u32, R_num i64, R_den i64, seed u64,
             s u32 (0 = unset), e_min i32, e_max i32, zero_threshold f64
    Q factor records:  rows u32, cols u32, nnz u64,
                       nnz x (row u32, col u32, sign i8, exponent i32)

Text mode carries the same fields, one record per line::

    PO2FT 1
    N K Q R_num R_den seed s e_min e_max zero_threshold(float.hex)
    rows cols nnz
    r c s e
    ...
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import (
    DimensionError,
    IndexRangeError,
    InvalidInputError,
    Po2Error,
    Po2Matrix,
    QuantizerConfig,
)
from .factorizer import FactorConfig, Factorization

MAGIC = b"PO2F"
VERSION = 1

_HEADER = struct.Struct("<IIIqqQIiid")
_FACTOR = struct.Struct("<IIQ")
_ENTRY = np.dtype([("r", "<u4"), ("c", "<u4"), ("s", "i1"), ("e", "<i4")])


class FormatError(Po2Error, ValueError):
    """Malformed PO2F data."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class EntryRangeError(FormatError, IndexRangeError):
    pass


@dataclass(frozen=True)
class AdditionLedger:
    """Adder and shifter usage of a product, normalized by the original matrix size."""

    additions: int = 0
    shifts: int = 0
    entries: int = 1

    @property
    def per_entry(self) -> float:
        return self.additions / self.entries

    def __add__(self, other: "AdditionLedger") -> "AdditionLedger":
        if self.entries != other.entries:
            raise DimensionError("ledgers normalized by different matrix sizes")
        return AdditionLedger(self.additions + other.additions, self.shifts + other.shifts, self.entries)


def count_additions(row_nnz) -> int:
    """Adders needed to sum each row's terms: ``sum(max(0, nnz_i - 1))``."""
    row_nnz = np.asarray(row_nnz)
    return int(np.maximum(row_nnz - 1, 0).sum())


def apply_po2(F: Po2Matrix, x, entries: int | None = None) -> tuple[np.ndarray, AdditionLedger]:
    """``F @ x`` using exponent shifts, sign flips and additions only."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (F.cols,):
        raise DimensionError(f"vector length {x.shape[0]} does not match {F.cols} columns")
    terms = np.ldexp(x[F.col_idx], F.exponents)
    terms = np.where(F.signs < 0, -terms, terms)
    y = np.bincount(F.row_idx, weights=terms, minlength=F.rows).astype(np.float64)
    ledger = AdditionLedger(count_additions(F.row_nnz()), F.nnz,
                            F.rows * F.cols if entries is None else entries)
    return y, ledger


def apply_factorization(fact: Factorization, x) -> tuple[np.ndarray, AdditionLedger]:
    """``F_1 (F_2 (... (F_Q x)))``; the ledger is the sum over factors."""
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.shape != (fact.K,):
        raise DimensionError(f"vector length {v.shape[0]} does not match K={fact.K}")
    total = AdditionLedger(entries=fact.N * fact.K)
    for F in reversed(fact.factors):
        v, ledger = apply_po2(F, v, entries=fact.N * fact.K)
        total = total + ledger
    return v, total


def factorization_ledger(fact: Factorization) -> AdditionLedger:
    """Ledger of :func:`apply_factorization` without evaluating a product."""
    entries = fact.N * fact.K
    return AdditionLedger(sum(count_additions(F.row_nnz()) for F in fact.factors),
                          sum(F.nnz for F in fact.factors), entries)


def _header_fields(fact: Factorization) -> tuple:
    cfg = fact.config
    q = cfg.quantizer
    return (fact.N, fact.K, fact.Q, cfg.R.numerator, cfg.R.denominator, cfg.seed,
            cfg.per_column_budget or 0, q.e_min, q.e_max, q.zero_threshold)


def serialize(fact: Factorization, text: bool = False) -> bytes:
    if text:
        return _serialize_text(fact)
    out = [MAGIC, b"B", struct.pack("<H", VERSION), _HEADER.pack(*_header_fields(fact))]
    for F in fact.factors:
        out.append(_FACTOR.pack(F.rows, F.cols, F.nnz))
        rec = np.empty(F.nnz, dtype=_ENTRY)
        rec["r"], rec["c"], rec["s"], rec["e"] = F.row_idx, F.col_idx, F.signs, F.exponents
        out.append(rec.tobytes())
    return b"".join(out)


def _serialize_text(fact: Factorization) -> bytes:
    h = _header_fields(fact)
    lines = [f"PO2FT {VERSION}", " ".join(str(v) for v in h[:-1]) + " " + float(h[-1]).hex()]
    for F in fact.factors:
        lines.append(f"{F.rows} {F.cols} {F.nnz}")
        lines.extend(f"{r} {c} {s} {e}" for r, c, s, e in
                     zip(F.row_idx.tolist(), F.col_idx.tolist(), F.signs.tolist(), F.exponents.tolist()))
    return ("\n".join(lines) + "\n").encode("ascii")


def deserialize(data: bytes) -> Factorization:
    data = bytes(data)
    if data[:4] != MAGIC:
        if len(data) < 4 and MAGIC.startswith(data):
            raise TruncatedError("file ends inside the magic number")
        raise BadMagicError(f"bad magic {data[:4]!r}")
    if len(data) < 5:
        raise TruncatedError("missing format flag")
    mode = data[4:5]
    if mode == b"B":
        return _deserialize_binary(data)
    if mode == b"T":
        return _deserialize_text(data)
    raise FormatError(f"unknown format flag {mode!r}")


def _build(header: tuple, factors: list) -> Factorization:
    N, K, Q, rnum, rden, seed, s, e_min, e_max, zthr = header
    if rden <= 0 or rnum <= 0:
        raise FormatError(f"invalid rate {rnum}/{rden}")
    try:
        cfg = FactorConfig(Q=Q, R=Fraction(rnum, rden), per_column_budget=s or None,
                           quantizer=QuantizerConfig(e_min, e_max, zero_threshold=zthr), seed=seed)
        return Factorization(N, K, tuple(factors), cfg)
    except (InvalidInputError, DimensionError) as exc:
        raise FormatError(str(exc)) from exc


def _matrix(rows, cols, r, c, s, e) -> Po2Matrix:
    if rows < 1 or cols < 1:
        raise FormatError(f"invalid factor shape {rows}x{cols}")
    if len(r) and (np.max(r) >= rows or np.max(c) >= cols):
        raise EntryRangeError(f"entry index outside {rows}x{cols} factor")
    try:
        return Po2Matrix(rows, cols, r, c, s, e)
    except IndexRangeError as exc:
        raise EntryRangeError(str(exc)) from exc
    except (InvalidInputError, DimensionError) as exc:
        raise FormatError(str(exc)) from exc


def _deserialize_binary(data: bytes) -> Factorization:
    pos = 5

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedError(f"need {n} bytes at offset {pos}, file has {len(data)}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise UnsupportedVersionError(f"PO2F version {version} is not supported")
    header = _HEADER.unpack(take(_HEADER.size))
    factors = []
    for _ in range(header[2]):
        rows, cols, nnz = _FACTOR.unpack(take(_FACTOR.size))
        if nnz > rows * cols:
            raise FormatError(f"factor claims {nnz} entries in a {rows}x{cols} matrix")
        rec = np.frombuffer(take(nnz * _ENTRY.itemsize), dtype=_ENTRY)
        factors.append(_matrix(rows, cols, rec["r"].astype(np.int64), rec["c"].astype(np.int64),
                               rec["s"], rec["e"]))
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after last factor")
    return _build(header, factors)


def _deserialize_text(data: bytes) -> Factorization:
    try:
        lines = data.decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise FormatError("text PO2F must be ASCII") from exc
    it = iter(lines)

    def fields(n: int, what: str) -> list[str]:
        try:
            parts = next(it).split()
        except StopIteration:
            raise TruncatedError(f"file ends before {what}") from None
        if len(parts) != n:
            raise FormatError(f"expected {n} fields in {what}, got {len(parts)}")
        return parts

    first = fields(2, "magic line")
    if first[0] != "PO2FT":
        raise BadMagicError(f"bad text magic {first[0]!r}")
    try:
        version = int(first[1])
        if version != VERSION:
            raise UnsupportedVersionError(f"PO2F version {version} is not supported")
        raw = fields(10, "header")
        header = tuple(int(v) for v in raw[:9]) + (float.fromhex(raw[9]),)
        factors = []
        for q in range(header[2]):
            rows, cols, nnz = (int(v) for v in fields(3, f"factor {q + 1} header"))
            if nnz > rows * cols:
                raise FormatError(f"factor claims {nnz} entries in a {rows}x{cols} matrix")
            ent = np.array([[int(v) for v in fields(4, "entry")] for _ in range(nnz)],
                           dtype=np.int64).reshape(nnz, 4)
            factors.append(_matrix(rows, cols, ent[:, 0], ent[:, 1], ent[:, 2], ent[:, 3]))
    except ValueError as exc:
        if isinstance(exc, Po2Error):
            raise
        raise FormatError(f"unparsable number: {exc}") from exc
    if any(line.strip() for line in it):
        raise FormatError("trailing content after last factor")
    return _build(header, factors)


def save(fact: Factorization, path, text: bool = False) -> None:
    Path(path).write_bytes(serialize(fact, text=text))


def load(path) -> Factorization:
    return deserialize(Path(path).read_bytes())
