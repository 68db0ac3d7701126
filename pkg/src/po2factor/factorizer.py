"""Multiplicative sparse power-of-two factorization.

A wide ``N x K`` matrix ``M`` is approximated by ``F_1 F_2 ... F_Q`` where
``F_1`` is ``M`` quantized to powers of two and every later factor is a
``K x K`` matrix whose columns are greedy sparse solutions of
``m_k ~ L rho`` with ``L = F_1 ... F_{q-1}``.

The work is done by a batched core (``_factor_chain``) operating on stacks of
matrices, so the benchmark harness and :func:`factorize` share the exact same
arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Optional, Union

import numpy as np

from .core import (
    DEFAULT_QUANTIZER,
    DegenerateInputError,
    DimensionError,
    InvalidInputError,
    OrientationError,
    Po2Matrix,
    QuantizerConfig,
    as_dense,
    nearest_exponents,
)
from .theory import rows_for_aspect

RateLike = Union[Fraction, int, float, str]

# elements per (candidate x target) work array in the greedy core
_CHUNK = 1 << 21


def as_rate(R: RateLike) -> Fraction:
    """Parse a sparsification rate such as ``1``, ``0.5`` or ``"1/3"``."""
    if isinstance(R, Fraction):
        rate = R
    elif isinstance(R, float):
        rate = Fraction(R).limit_denominator(1 << 20)
    else:
        try:
            rate = Fraction(R)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise InvalidInputError(f"cannot parse rate {R!r}") from exc
    if not 0 < rate <= 1:
        raise InvalidInputError(f"rate must lie in (0, 1], got {rate}")
    return rate


@dataclass(frozen=True)
class FactorConfig:
    """Parameters of the multiplicative approximation.

    ``per_column_budget`` is the number of nonzeros per column of ``F_2..F_Q``;
    when left as ``None`` it is derived from ``R`` and the matrix height at
    factorization time.
    """

    Q: int = 2
    R: Fraction = Fraction(1)
    per_column_budget: Optional[int] = None
    quantizer: QuantizerConfig = DEFAULT_QUANTIZER
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "R", as_rate(self.R))
        if int(self.Q) != self.Q or self.Q < 1:
            raise InvalidInputError(f"Q must be a positive integer, got {self.Q!r}")
        if self.per_column_budget is not None and self.per_column_budget < 1:
            raise InvalidInputError("per_column_budget must be >= 1")
        if not 0 <= self.seed < 1 << 64:
            raise InvalidInputError("seed must fit in 64 unsigned bits")

    def total_budget(self, N: int, K: int) -> int:
        """``ceil(R N K)``: nonzero budget of each factor."""
        return math.ceil(self.R * N * K)

    def column_budget(self, N: int, K: int) -> int:
        if self.per_column_budget is not None:
            s = self.per_column_budget
        else:
            rn = self.R * N
            s = math.floor(rn + Fraction(1, 2))
            # per-column rounding must not push nnz(F_q) above ceil(R N K)
            s = min(s, self.total_budget(N, K) // K)
            s = max(1, s)
        if s > K:
            raise InvalidInputError(f"per-column budget {s} exceeds K={K}")
        return s

    def resolved(self, N: int, K: int) -> "FactorConfig":
        return replace(self, per_column_budget=self.column_budget(N, K))


@dataclass(frozen=True)
class Factorization:
    """``F_1 (N x K) @ F_2 (K x K) @ ... @ F_Q (K x K)``."""

    N: int
    K: int
    factors: tuple
    config: FactorConfig

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise DimensionError("factorization needs at least one factor")
        if self.factors[0].shape != (self.N, self.K):
            raise DimensionError(f"F_1 must be {self.N}x{self.K}, got {self.factors[0].shape}")
        for F in self.factors[1:]:
            if F.shape != (self.K, self.K):
                raise DimensionError(f"F_q (q > 1) must be {self.K}x{self.K}, got {F.shape}")

    @property
    def Q(self) -> int:
        return len(self.factors)

    def reconstruct(self) -> np.ndarray:
        A = self.factors[0].to_dense()
        for F in self.factors[1:]:
            A = A @ F.to_dense()
        return A


@dataclass(frozen=True)
class BlockPlan:
    """Contiguous row blocks ``(row_start, row_count)`` covering ``[0, N_total)``."""

    blocks: tuple
    target_rows: int

    @property
    def heights(self) -> list[int]:
        return [n for _, n in self.blocks]


@dataclass
class _Picks:
    """Greedy selections for a batch: arrays shaped ``(B, s, T)``."""

    idx: np.ndarray
    signs: np.ndarray
    exponents: np.ndarray
    nonzero: np.ndarray
    residual: np.ndarray = field(repr=False)
    gain: np.ndarray = field(repr=False)

    def coefficients(self) -> np.ndarray:
        return np.where(self.nonzero, np.ldexp(self.signs.astype(np.float64), self.exponents), 0.0)


def _greedy_block(L, T, s, e_min, e_max):
    B, N, K = L.shape
    Tn = T.shape[2]
    norms = np.einsum("bnk,bnk->bk", L, L)
    usable = norms > 0
    safe = np.where(usable, norms, 1.0)[:, :, None]
    res = T.copy()
    blocked = np.broadcast_to(~usable[:, :, None], (B, K, Tn)).copy()
    idx = np.zeros((B, s, Tn), dtype=np.int64)
    signs = np.ones((B, s, Tn), dtype=np.int8)
    exps = np.zeros((B, s, Tn), dtype=np.int32)
    nonzero = np.zeros((B, s, Tn), dtype=bool)
    gains = np.zeros((B, s, Tn))
    # coefficient alphabet is {0} U {±2^e}; zero wins below 2^(e_min-1)
    zero_thr = float(np.ldexp(1.0, e_min - 1))
    bi = np.arange(B)[:, None]
    ti = np.arange(Tn)[None, :]
    for p in range(s):
        corr = np.matmul(L.transpose(0, 2, 1), res)
        sg, ex, nz = nearest_exponents(corr / safe, e_min, e_max, zero_thr)
        coef = np.where(nz, np.ldexp(sg.astype(np.float64), ex), 0.0)
        # ||r||^2 - ||r - c l_j||^2
        gain = coef * (2.0 * corr - coef * safe)
        gain[blocked] = -np.inf
        j = np.argmax(gain, axis=1)
        ok = np.isfinite(gain[bi, j, ti])
        idx[:, p] = j
        signs[:, p] = sg[bi, j, ti]
        exps[:, p] = ex[bi, j, ti]
        nonzero[:, p] = nz[bi, j, ti] & ok
        gains[:, p] = np.where(nonzero[:, p], gain[bi, j, ti], 0.0)
        blocked[bi, j, ti] = True
        c = np.where(nonzero[:, p], coef[bi, j, ti], 0.0)
        cols = np.take_along_axis(L, np.broadcast_to(j[:, None, :], (B, N, Tn)), axis=2)
        res -= cols * c[:, None, :]
    return idx, signs, exps, nonzero, res, gains


def _solve_columns(L: np.ndarray, T: np.ndarray, s: int, qcfg: QuantizerConfig) -> _Picks:
    """Greedy sparse solutions for every target column of every batch item."""
    B, N, K = L.shape
    Tn = T.shape[2]
    per_item = K * Tn
    parts = []
    if per_item <= _CHUNK:
        step = max(1, _CHUNK // per_item)
        for b0 in range(0, B, step):
            parts.append(_greedy_block(L[b0:b0 + step], T[b0:b0 + step], s, qcfg.e_min, qcfg.e_max))
        out = [np.concatenate(arrs, axis=0) for arrs in zip(*parts)]
    else:
        step = max(1, _CHUNK // K)
        rows = []
        for b in range(B):
            chunk = [_greedy_block(L[b:b + 1], T[b:b + 1, :, t0:t0 + step], s, qcfg.e_min, qcfg.e_max)
                     for t0 in range(0, Tn, step)]
            rows.append([np.concatenate(arrs, axis=2) for arrs in zip(*chunk)])
        out = [np.concatenate(arrs, axis=0) for arrs in zip(*rows)]
    return _Picks(*out)


def _cap_picks(picks: _Picks, budget: int) -> None:
    """Drop the least useful picks so that no factor exceeds ``budget`` nonzeros.

    Only matters when one nonzero per column already overshoots ``ceil(R N K)``;
    picks are ranked by residual reduction, ties by (column, pick) order.
    """
    B, s, Tn = picks.idx.shape
    if s * Tn <= budget:
        return
    key = np.where(picks.nonzero, picks.gain, -np.inf).transpose(0, 2, 1).reshape(B, -1)
    order = np.argsort(-key, axis=1, kind="stable")
    keep = np.zeros((B, s * Tn), dtype=bool)
    np.put_along_axis(keep, order[:, :budget], True, axis=1)
    picks.nonzero &= keep.reshape(B, Tn, s).transpose(0, 2, 1)


def _apply_picks(L: np.ndarray, picks: _Picks) -> np.ndarray:
    """``L @ F`` for the sparse ``F`` described by ``picks``."""
    B, N, _ = L.shape
    _, s, Tn = picks.idx.shape
    coef = picks.coefficients()
    out = np.zeros((B, N, Tn))
    for p in range(s):
        cols = np.take_along_axis(L, np.broadcast_to(picks.idx[:, None, p, :], (B, N, Tn)), axis=2)
        out += cols * coef[:, None, p, :]
    return out


def _first_factor(Ms: np.ndarray, budget: int, qcfg: QuantizerConfig):
    """Quantize and keep the ``budget`` entries largest in original magnitude."""
    B, N, K = Ms.shape
    signs, exps, nz = nearest_exponents(Ms, qcfg.e_min, qcfg.e_max, qcfg.zero_threshold)
    if budget < N * K:
        order = np.argsort(-np.abs(Ms).reshape(B, -1), axis=1, kind="stable")
        keep = np.zeros((B, N * K), dtype=bool)
        np.put_along_axis(keep, order[:, :budget], True, axis=1)
        nz = nz & keep.reshape(B, N, K)
    return signs, exps, nz


def _factor_chain(Ms: np.ndarray, cfg: FactorConfig) -> Iterator[tuple[int, np.ndarray, object]]:
    """Yield ``(q, L_q, stage)`` for ``q = 1..Q`` over a stack ``Ms`` of shape (B, N, K).

    ``L_q`` is the dense product ``F_1 ... F_q`` per batch item; ``stage`` is the
    ``(signs, exponents, nonzero)`` triple for ``q = 1`` and a :class:`_Picks`
    afterwards.
    """
    _, N, K = Ms.shape
    qcfg = cfg.quantizer
    s = cfg.column_budget(N, K)
    first = _first_factor(Ms, cfg.total_budget(N, K), qcfg)
    signs, exps, nz = first
    L = np.where(nz, np.ldexp(signs.astype(np.float64), exps), 0.0)
    yield 1, L, first
    for q in range(2, cfg.Q + 1):
        picks = _solve_columns(L, Ms, s, qcfg)
        _cap_picks(picks, cfg.total_budget(N, K))
        L = _apply_picks(L, picks)
        yield q, L, picks


def _picks_to_matrix(picks: _Picks, b: int, K: int) -> Po2Matrix:
    nz = picks.nonzero[b]
    cols = np.broadcast_to(np.arange(nz.shape[1])[None, :], nz.shape)
    return Po2Matrix(K, K, picks.idx[b][nz], cols[nz], picks.signs[b][nz], picks.exponents[b][nz])


def _basis(L) -> np.ndarray:
    if isinstance(L, Po2Matrix):
        return L.to_dense()
    return as_dense(L, "basis")


def greedy_sparse_column(L, target, s: int, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> Po2Matrix:
    """Decision-directed greedy solution of ``target ~ L @ rho`` with ``nnz(rho) <= s``.

    Each pick scans the unused columns of ``L``, quantizes the least-squares
    coefficient to the nearest value in ``{0, ±2**e}`` and keeps the column whose
    quantized coefficient reduces the residual the most (lowest index on ties).
    Returns ``rho`` as a ``K x 1`` :class:`Po2Matrix`.
    """
    A = _basis(L)
    N, K = A.shape
    t = np.asarray(target, dtype=np.float64).ravel()
    if t.shape != (N,):
        raise DimensionError(f"target must have length {N}, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("target contains non-finite entries")
    if not 1 <= s <= K:
        raise InvalidInputError(f"budget s must lie in [1, {K}], got {s}")
    if not np.any(A):
        raise DegenerateInputError("all columns of the basis are zero")
    picks = _solve_columns(A[None], t[None, :, None], s, cfg)
    nz = picks.nonzero[0, :, 0]
    return Po2Matrix(K, 1, picks.idx[0, :, 0][nz], np.zeros(int(nz.sum()), dtype=np.int64),
                     picks.signs[0, :, 0][nz], picks.exponents[0, :, 0][nz])


def sparsify_po2(F: Po2Matrix, nnz_budget: int, magnitudes=None) -> Po2Matrix:
    """Keep the ``nnz_budget`` largest entries of ``F``.

    Entries are ranked by ``2**exponent`` unless ``magnitudes`` (one value per
    stored entry, in storage order) is given; ties go to the entry that comes
    first in ``(row, col)`` order.
    """
    if nnz_budget < 0:
        raise InvalidInputError("nnz_budget must be non-negative")
    if nnz_budget >= F.nnz:
        return F
    if magnitudes is None:
        key = F.exponents.astype(np.float64)
    else:
        key = np.asarray(magnitudes, dtype=np.float64)
        if key.shape != (F.nnz,):
            raise DimensionError("need one magnitude per stored entry")
    keep = np.sort(np.argsort(-key, kind="stable")[:nnz_budget])
    return Po2Matrix(F.rows, F.cols, F.row_idx[keep], F.col_idx[keep], F.signs[keep], F.exponents[keep])


def factor_step(L, M, cfg: FactorConfig) -> Po2Matrix:
    """Next ``K x K`` factor: one greedy sparse column per column of ``M``."""
    A = _basis(L)
    T = as_dense(M)
    if A.shape != T.shape:
        raise DimensionError(f"L is {A.shape} but M is {T.shape}")
    N, K = A.shape
    if not np.any(A):
        raise DegenerateInputError("all columns of the basis are zero")
    picks = _solve_columns(A[None], T[None], cfg.column_budget(N, K), cfg.quantizer)
    return _picks_to_matrix(picks, 0, K)


def factorize(M, cfg: FactorConfig = FactorConfig()) -> Factorization:
    """Approximate a wide matrix ``M`` (``N <= K``) by ``Q`` sparse po2 factors."""
    A = as_dense(M)
    N, K = A.shape
    if N > K:
        raise OrientationError(f"matrix is {N}x{K} with N > K; factorize the transpose instead")
    cfg = cfg.resolved(N, K)
    factors = []
    for q, _, stage in _factor_chain(A[None], cfg):
        if q == 1:
            signs, exps, nz = (arr[0] for arr in stage)
            r, c = np.nonzero(nz)
            factors.append(Po2Matrix(N, K, r, c, signs[r, c], exps[r, c]))
        else:
            factors.append(_picks_to_matrix(stage, 0, K))
    return Factorization(N, K, tuple(factors), cfg)


def plan_blocks(N_total: int, K: int, R: RateLike = 1) -> BlockPlan:
    """Split ``N_total`` rows into near-equal blocks of about ``log2(K)/R`` rows.

    The block count is ``floor(N_total / h)`` (at least one), so leftover rows
    are absorbed as ``+1`` heights; taller blocks come first.
    """
    if N_total < 1 or K < 2:
        raise InvalidInputError("need N_total >= 1 and K >= 2")
    h = rows_for_aspect(K, as_rate(R))
    count = max(1, N_total // h)
    base, extra = divmod(N_total, count)
    blocks, start = [], 0
    for i in range(count):
        n = base + (1 if i < extra else 0)
        blocks.append((start, n))
        start += n
    return BlockPlan(tuple(blocks), h)


def factorize_blocked(M, cfg: FactorConfig = FactorConfig()) -> list[tuple[tuple[int, int], Factorization]]:
    """Factorize each row block of ``M`` independently."""
    A = as_dense(M)
    N_total, K = A.shape
    plan = plan_blocks(N_total, K, cfg.R)
    return [((start, n), factorize(A[start:start + n], cfg)) for start, n in plan.blocks]


def reconstruct_blocked(parts) -> np.ndarray:
    """Stack block reconstructions from :func:`factorize_blocked` output."""
    return np.vstack([fact.reconstruct() for _, fact in parts])
