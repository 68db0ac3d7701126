"""Power-of-two quantization, additive decompositions and SNR metrics.

Every stored matrix entry in this package is ``sign * 2**exponent``; zero is
represented by the absence of an entry. Dense matrices are plain 2-D float64
numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np


class Po2Error(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(Po2Error, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class DegenerateInputError(Po2Error, ValueError):
    """Input for which the requested quantity is undefined (e.g. all zeros)."""


class DimensionError(Po2Error, ValueError):
    """Shape mismatch between operands."""


class OrientationError(DimensionError):
    """Matrix is taller than wide; factorize its transpose instead."""


class IndexRangeError(Po2Error, IndexError):
    """Sparse entry index outside the matrix dimensions."""


@dataclass(frozen=True)
class ScalarPo2:
    sign: int
    exponent: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise InvalidInputError(f"sign must be +1 or -1, got {self.sign!r}")
        if int(self.exponent) != self.exponent:
            raise InvalidInputError(f"exponent must be an integer, got {self.exponent!r}")
        object.__setattr__(self, "exponent", int(self.exponent))

    @property
    def value(self) -> float:
        return float(np.ldexp(float(self.sign), self.exponent))


@dataclass(frozen=True)
class QuantizerConfig:
    """Exponent clamp for the nearest-power-of-two quantizer.

    Magnitudes below ``zero_threshold`` (default ``0.75 * 2**e_min``) quantize
    to zero. The boundary between ``2**(e-1)`` and ``2**e`` sits at
    ``0.75 * 2**e``; a value exactly on it rounds to the larger exponent.
    """

    e_min: int = -126
    e_max: int = 127
    tie_break: str = "up"
    zero_threshold: Optional[float] = None

    def __post_init__(self):
        if self.e_min >= self.e_max:
            raise InvalidInputError(f"need e_min < e_max, got {self.e_min} >= {self.e_max}")
        if self.tie_break != "up":
            raise InvalidInputError("only the 'up' tie-break policy is supported")
        if self.zero_threshold is None:
            object.__setattr__(self, "zero_threshold", float(np.ldexp(0.75, self.e_min)))


DEFAULT_QUANTIZER = QuantizerConfig()


def nearest_exponents(values, e_min: int, e_max: int, zero_threshold: float):
    """Vectorized nearest power-of-two quantization.

    Returns ``(signs, exponents, nonzero)`` arrays broadcast like ``values``.
    ``exponents`` is only meaningful where ``nonzero`` is true.
    """
    v = np.asarray(values, dtype=np.float64)
    a = np.abs(v)
    # a = f * 2**x with f in [0.5, 1); the boundary 0.75 * 2**x splits 2**(x-1) and 2**x
    f, x = np.frexp(a)
    e = np.where(f >= 0.75, x, x - 1)
    e = np.clip(e, e_min, e_max)
    nonzero = a >= zero_threshold
    signs = np.where(v < 0, -1, 1).astype(np.int8)
    return signs, e.astype(np.int32), nonzero


def quantize_values(values, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> np.ndarray:
    """Dense array of quantized values (zeros where the quantizer returns Zero)."""
    signs, e, nz = nearest_exponents(values, cfg.e_min, cfg.e_max, cfg.zero_threshold)
    return np.where(nz, np.ldexp(signs.astype(np.float64), e), 0.0)


def quantize_scalar(v: float, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> Optional[ScalarPo2]:
    """Nearest ``±2**e`` to ``v`` with the sign kept, or ``None`` for Zero."""
    v = float(v)
    if not np.isfinite(v):
        raise InvalidInputError(f"cannot quantize non-finite value {v!r}")
    signs, e, nz = nearest_exponents(v, cfg.e_min, cfg.e_max, cfg.zero_threshold)
    if not nz:
        return None
    return ScalarPo2(int(signs), int(e))


def as_dense(M, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a 2-D finite float64 array."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A[np.newaxis, :]
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


class Po2Matrix:
    """Sparse matrix whose stored entries are exactly ``sign * 2**exponent``.

    Entries are kept in COO form sorted by ``(row, col)``. Instances are
    immutable; the index arrays are read-only.
    """

    __slots__ = ("rows", "cols", "row_idx", "col_idx", "signs", "exponents")

    def __init__(self, rows: int, cols: int, row_idx=(), col_idx=(), signs=(), exponents=()):
        if int(rows) < 1 or int(cols) < 1:
            raise DimensionError(f"Po2Matrix needs positive dimensions, got {rows}x{cols}")
        r = np.asarray(row_idx, dtype=np.int64).ravel()
        c = np.asarray(col_idx, dtype=np.int64).ravel()
        s = np.asarray(signs, dtype=np.int8).ravel()
        e = np.asarray(exponents, dtype=np.int32).ravel()
        if not (len(r) == len(c) == len(s) == len(e)):
            raise DimensionError("entry arrays must have equal length")
        if len(r):
            if r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols:
                raise IndexRangeError(f"entry index out of range for {rows}x{cols} matrix")
            if not np.all(np.abs(s) == 1):
                raise InvalidInputError("signs must be +1 or -1")
            key = r * int(cols) + c
            if np.any(np.diff(key) <= 0):
                order = np.argsort(key, kind="stable")
                key = key[order]
                if np.any(np.diff(key) == 0):
                    raise InvalidInputError("duplicate (row, col) entry")
                r, c, s, e = r[order], c[order], s[order], e[order]
        for arr in (r, c, s, e):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", int(rows))
        object.__setattr__(self, "cols", int(cols))
        object.__setattr__(self, "row_idx", r)
        object.__setattr__(self, "col_idx", c)
        object.__setattr__(self, "signs", s)
        object.__setattr__(self, "exponents", e)

    def __setattr__(self, name, value):
        raise AttributeError("Po2Matrix is immutable")

    @classmethod
    def from_entries(cls, rows: int, cols: int,
                     entries: Iterable[tuple[int, int, ScalarPo2]]) -> "Po2Matrix":
        entries = list(entries)
        return cls(rows, cols,
                   [r for r, _, _ in entries], [c for _, c, _ in entries],
                   [p.sign for _, _, p in entries], [p.exponent for _, _, p in entries])

    @classmethod
    def from_dense(cls, A) -> "Po2Matrix":
        """Build from a dense array whose nonzeros are all exact ``±2**e``."""
        A = as_dense(A)
        r, c = np.nonzero(A)
        vals = A[r, c]
        f, x = np.frexp(np.abs(vals))
        if np.any(f != 0.5):
            raise InvalidInputError("dense matrix has entries that are not powers of two")
        return cls(A.shape[0], A.shape[1], r, c, np.where(vals < 0, -1, 1), x - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return len(self.row_idx)

    def values(self) -> np.ndarray:
        return np.ldexp(self.signs.astype(np.float64), self.exponents)

    def entries(self) -> Iterator[tuple[int, int, ScalarPo2]]:
        for r, c, s, e in zip(self.row_idx, self.col_idx, self.signs, self.exponents):
            yield int(r), int(c), ScalarPo2(int(s), int(e))

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.rows, self.cols))
        A[self.row_idx, self.col_idx] = self.values()
        return A

    def row_nnz(self) -> np.ndarray:
        return np.bincount(self.row_idx, minlength=self.rows)

    def __eq__(self, other):
        if not isinstance(other, Po2Matrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.row_idx, other.row_idx)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.signs, other.signs)
                and np.array_equal(self.exponents, other.exponents))

    def __hash__(self):
        return hash((self.shape, self.row_idx.tobytes(), self.col_idx.tobytes(),
                     self.signs.tobytes(), self.exponents.tobytes()))

    def __repr__(self):
        return f"Po2Matrix({self.rows}x{self.cols}, nnz={self.nnz})"


def quantize_matrix(M, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> Po2Matrix:
    """Entrywise :func:`quantize_scalar`; Zero results are omitted."""
    A = as_dense(M)
    signs, e, nz = nearest_exponents(A, cfg.e_min, cfg.e_max, cfg.zero_threshold)
    r, c = np.nonzero(nz)
    return Po2Matrix(A.shape[0], A.shape[1], r, c, signs[r, c], e[r, c])


@dataclass(frozen=True)
class BitplaneDecomposition:
    """Sign-magnitude sum of binary bitplanes: ``signs * sum_q 2**(Q0-q) * B_q``."""

    Q0: int
    Q: int
    signs: np.ndarray
    bitplanes: list = field(default_factory=list)

    def reconstruct(self) -> np.ndarray:
        mag = np.zeros(self.signs.shape)
        for q, B in enumerate(self.bitplanes, start=1):
            mag += np.ldexp(B.astype(np.float64), self.Q0 - q)
        return self.signs * mag


def standard_additive(M, Q: int) -> BitplaneDecomposition:
    """Truncated binary expansion of ``|M|`` into ``Q`` bitplanes.

    ``Q0`` is chosen so that every ``|m_ij| < 2**Q0``; bits below ``2**(Q0-Q)``
    are dropped (truncation toward zero).
    """
    if Q < 1:
        raise InvalidInputError(f"Q must be >= 1, got {Q}")
    A = as_dense(M)
    peak = np.abs(A).max()
    if peak == 0:
        raise DegenerateInputError("all-zero matrix has no binary scale")
    _, Q0 = np.frexp(peak)
    Q0 = int(Q0)
    scaled = np.ldexp(np.abs(A), -Q0)
    planes = [(np.floor(np.ldexp(scaled, q)) % 2).astype(np.uint8) for q in range(1, Q + 1)]
    signs = np.where(A < 0, -1, 1).astype(np.int8)
    return BitplaneDecomposition(Q0=Q0, Q=Q, signs=signs, bitplanes=planes)


def improved_additive(M, Q: int, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> list[Po2Matrix]:
    """Sum of ``Q`` power-of-two matrices, each quantizing the previous residual."""
    if Q < 1:
        raise InvalidInputError(f"Q must be >= 1, got {Q}")
    A = as_dense(M)
    terms = []
    residual = A.copy()
    for _ in range(Q):
        P = quantize_matrix(residual, cfg)
        terms.append(P)
        residual = residual - P.to_dense()
    return terms


def snr_db(M, A) -> float:
    """``10 log10(||M||_F^2 / ||M - A||_F^2)``; ``inf`` for an exact match."""
    M = np.asarray(M, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if M.shape != A.shape:
        raise DimensionError(f"shape mismatch {M.shape} vs {A.shape}")
    signal = float(np.sum(M * M))
    if signal == 0:
        raise DegenerateInputError("SNR undefined for an all-zero reference")
    noise = float(np.sum((M - A) ** 2))
    if noise == 0:
        return float("inf")
    return 10.0 * np.log10(signal / noise)
