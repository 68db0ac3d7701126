"""SNR benchmarks of the multiplicative approximation on iid Gaussian matrices.

Every cell aggregates many independent trials. The reported SNR pools signal
and error power over all trials, ``10 log10(sum ||M||^2 / sum ||M - A||^2)``,
i.e. the error is averaged over every random variable drawn for the cell. Its
standard error comes from the delta method on the ratio of means.

Matrices for trial ``t`` of a cell are drawn from a Philox stream keyed by
``derive_seed(seed, cell_id, t)``, so a cell's result does not depend on which
other cells run or in what order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ._random import derive_seed, philox
from .core import InvalidInputError
from .engine import count_additions
from .factorizer import FactorConfig, _factor_chain, as_rate
from .theory import fig1_markers, info_vs_aspect, rows_for_aspect

# Published SNRs [dB]. Table 1: R = 1, Q = 1..5.
PUBLISHED_TABLE1 = {
    (2, 4): (14.2, 20.6, 24.8, 27.2, 28.6),
    (3, 8): (14.2, 25.1, 32.0, 36.3, 39.1),
    (4, 16): (14.2, 30.0, 42.1, 50.7, 57.1),
    (5, 32): (14.2, 35.6, 54.7, 70.7, 82.7),
    (6, 64): (14.2, 41.3, 67.5, 92.9, 117),
    (7, 128): (14.2, 47.0, 79.4, 112, 144),
    (8, 256): (14.2, 52.6, 90.8, 129, 167),
    (9, 512): (14.2, 58.1, 102, 146, 190),
    (10, 1024): (14.2, 63.5, 113, 162, 212),
    (11, 2048): (14.2, 69.1, 124, 179, 234),
    (12, 4096): (14.2, 74.6, 135, 195, 256),
    (13, 8192): (14.2, 80.1, 146, 212, 278),
    (14, 16384): (14.2, 85.7, 157, 228, 300),
}

# Table 2: K = 1024, N = 10 / R, Q = 1..7.
PUBLISHED_TABLE2 = {
    Fraction(1): (14, 64, 113, 162, 212, 261, 310),
    Fraction(1, 2): (10, 33, 55, 78, 101, 123, 145),
    Fraction(1, 3): (6.7, 21, 35, 49, 63, 78, 92),
    Fraction(1, 4): (5.1, 15, 26, 36, 46, 55, 65),
    Fraction(1, 5): (4.2, 12, 20, 28, 35, 43, 50),
    Fraction(1, 6): (3.6, 10, 16, 23, 29, 34, 40),
    Fraction(1, 7): (3.2, 8.7, 14, 19, 24, 29, 34),
    Fraction(1, 8): (2.9, 7.6, 12, 16, 21, 25, 29),
    Fraction(1, 9): (2.6, 6.8, 11, 14, 18, 21, 25),
    Fraction(1, 10): (2.4, 6.1, 9.6, 13, 16, 19, 22),
    Fraction(1, 11): (2.2, 5.6, 8.6, 12, 14, 17, 20),
    Fraction(1, 12): (2.1, 5.1, 7.9, 11, 13, 15, 18),
}

TABLE3_BUDGETS = (Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(3))

# Table 3: best SNR over the rate grid per additions budget.
PUBLISHED_TABLE3 = {
    256: dict(zip(TABLE3_BUDGETS, (6.3, 8.3, 13, 27, 60, 93))),
    1024: dict(zip(TABLE3_BUDGETS, (7.9, 11, 16, 36, 78, 123))),
    4096: dict(zip(TABLE3_BUDGETS, (10, 13, 21, 45, 98, 152))),
    16384: dict(zip(TABLE3_BUDGETS, (12, 17, 26, 55, 118, 183))),
}

RATE_GRID = tuple(Fraction(1, d) for d in range(1, 13))
DESK_TABLE1_SIZES = ((2, 4), (3, 8), (4, 16), (5, 32), (6, 64), (7, 128))

CSV_COLUMNS = ("N", "K", "Q", "R", "trials", "snr_db", "stderr_db", "adds_per_entry", "nominal_adds")

_TABLE_CODES = {"table1": 1, "table2": 2, "table3": 3}
# matrix entries generated per batch
_BATCH_ENTRIES = 1 << 18


@dataclass
class BenchmarkSpec:
    """What to sweep. ``trials`` is a floor; cells run enough trials to reach
    ``min_entries`` Gaussian entries."""

    sizes: Sequence[tuple[int, int]] = DESK_TABLE1_SIZES
    q_values: Sequence[int] = (1, 2, 3, 4, 5)
    r_values: Sequence[Fraction] = RATE_GRID
    trials: int = 1
    seed: int = 0
    min_entries: int = 10 ** 5
    k_values: Sequence[int] = (1024,)
    budgets: Sequence[Fraction] = TABLE3_BUDGETS

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("trials must be positive")
        if not self.q_values or min(self.q_values) < 1:
            raise InvalidInputError("q_values must be positive integers")
        self.r_values = tuple(as_rate(r) for r in self.r_values)
        self.budgets = tuple(Fraction(b) for b in self.budgets)

    def trials_for(self, N: int, K: int) -> int:
        return max(self.trials, math.ceil(self.min_entries / (N * K)))


@dataclass(frozen=True)
class CellRecord:
    N: int
    K: int
    Q: int
    R: Fraction
    trials: int
    snr_db: float
    stderr_db: float
    adds_per_entry: float
    nominal_adds: Fraction


@dataclass
class BenchmarkResult:
    table: str
    records: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    candidates: list = field(default_factory=list)

    def cell(self, N: int, K: int, Q: int, R=1) -> CellRecord:
        R = as_rate(R)
        for rec in self.records:
            if (rec.N, rec.K, rec.Q, rec.R) == (N, K, Q, R):
                return rec
        raise KeyError((N, K, Q, R))


def gen_gaussian(N: int, K: int, seed: int) -> np.ndarray:
    """iid standard normal ``N x K`` matrix from a Philox stream keyed by ``seed``."""
    return philox(seed).standard_normal((N, K))


def _pooled_snr(signal: np.ndarray, error: np.ndarray) -> tuple[float, float]:
    n = len(signal)
    ms, me = signal.mean(), error.mean()
    snr = 10.0 * math.log10(ms / me) if me > 0 else math.inf
    if n < 2 or me == 0:
        return snr, 0.0
    cov = np.cov(signal, error)
    var_log = (cov[0, 0] / ms ** 2 + cov[1, 1] / me ** 2 - 2.0 * cov[0, 1] / (ms * me)) / n
    return snr, 10.0 / math.log(10.0) * math.sqrt(max(var_log, 0.0))


def _stage_additions(q: int, stage, K: int) -> np.ndarray:
    """Adders used by factor ``q`` for each batch item (engine ledger rule)."""
    if q == 1:
        _, _, nz = stage
        row_nnz = nz.sum(axis=2)
    else:
        B = stage.idx.shape[0]
        flat = stage.idx + (np.arange(B) * K)[:, None, None]
        row_nnz = np.bincount(flat[stage.nonzero], minlength=B * K).reshape(B, K)
    return np.array([count_additions(rows) for rows in row_nnz], dtype=np.float64)


def run_cell(N: int, K: int, R, q_max: int, trials: int, seed: int, cell_id: int) -> list[CellRecord]:
    """Run ``trials`` factorizations of size ``N x K`` and report every ``Q <= q_max``.

    The factor recursion is prefix-consistent, so one run with ``Q = q_max``
    yields the ``Q = 1 .. q_max`` results on identical matrices.
    """
    R = as_rate(R)
    cfg = FactorConfig(Q=q_max, R=R, seed=seed)
    signal = np.empty(trials)
    error = np.empty((trials, q_max))
    adds = np.empty((trials, q_max))
    batch = max(1, _BATCH_ENTRIES // (N * K))
    for t0 in range(0, trials, batch):
        ts = range(t0, min(trials, t0 + batch))
        Ms = np.stack([gen_gaussian(N, K, derive_seed(seed, cell_id, t)) for t in ts])
        sl = slice(t0, t0 + len(ts))
        signal[sl] = np.einsum("bnk,bnk->b", Ms, Ms)
        running = np.zeros(len(ts))
        for q, L, stage in _factor_chain(Ms, cfg):
            D = Ms - L
            error[sl, q - 1] = np.einsum("bnk,bnk->b", D, D)
            running = running + _stage_additions(q, stage, K)
            adds[sl, q - 1] = running
    out = []
    for q in range(1, q_max + 1):
        snr, se = _pooled_snr(signal, error[:, q - 1])
        out.append(CellRecord(N, K, q, R, trials, snr, se,
                              float(adds[:, q - 1].mean()) / (N * K), q * R))
    return out


def _cell_id(table: str, N: int, K: int, R: Fraction) -> int:
    return derive_seed(_TABLE_CODES[table], N, K, R.numerator, R.denominator)


def run_table1(spec: BenchmarkSpec) -> BenchmarkResult:
    """Sizes x Q at ``R = 1``."""
    result = BenchmarkResult("table1")
    q_max = max(spec.q_values)
    for N, K in spec.sizes:
        if N > K:
            result.notes.append(f"{N}x{K}: N > K, skipped")
            continue
        recs = run_cell(N, K, Fraction(1), q_max, spec.trials_for(N, K), spec.seed,
                        _cell_id("table1", N, K, Fraction(1)))
        result.records.extend(r for r in recs if r.Q in spec.q_values)
    return result


def run_table2(spec: BenchmarkSpec) -> BenchmarkResult:
    """Rates x Q at fixed width ``K`` with ``N = log2(K) / R`` rows."""
    result = BenchmarkResult("table2")
    q_max = max(spec.q_values)
    for K in spec.k_values:
        for R in spec.r_values:
            N = rows_for_aspect(K, R)
            if N > K:
                result.notes.append(f"K={K} R={R}: N={N} exceeds K, skipped")
                continue
            recs = run_cell(N, K, R, q_max, spec.trials_for(N, K), spec.seed, _cell_id("table2", N, K, R))
            result.records.extend(r for r in recs if r.Q in spec.q_values)
    return result


def run_table3(spec: BenchmarkSpec) -> BenchmarkResult:
    """Best SNR over the rate grid for each additions budget ``A = Q R``."""
    result = BenchmarkResult("table3")
    for K in spec.k_values:
        for R in spec.r_values:
            qs = []
            for A in spec.budgets:
                Q = A / R
                if Q.denominator != 1 or Q < 1:
                    result.notes.append(f"K={K} A={A} R={R}: Q={Q} is not a positive integer, skipped")
                else:
                    qs.append(int(Q))
            if not qs:
                continue
            N = rows_for_aspect(K, R)
            if N > K:
                result.notes.append(f"K={K} R={R}: N={N} exceeds K, skipped")
                continue
            recs = run_cell(N, K, R, max(qs), spec.trials_for(N, K), spec.seed, _cell_id("table3", N, K, R))
            result.candidates.extend(r for r in recs if r.Q in qs)
        for A in spec.budgets:
            pool = [r for r in result.candidates if r.K == K and r.nominal_adds == A]
            if not pool:
                result.notes.append(f"K={K} A={A}: no feasible rate on the grid")
                continue
            result.records.append(max(pool, key=lambda r: r.snr_db))
    return result


def _fmt(x: float, digits: int) -> str:
    return "inf" if math.isinf(x) else f"{x:.{digits}f}"


def emit_csv(result: BenchmarkResult, path) -> None:
    with open(path, "w", newline="") as fh:
        write_csv(result.records, fh)


def write_csv(records: Iterable[CellRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.N, r.K, r.Q, str(r.R), r.trials, _fmt(r.snr_db, 4), _fmt(r.stderr_db, 4),
                    _fmt(r.adds_per_entry, 6), str(r.nominal_adds)])


def read_csv(path) -> list[CellRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [CellRecord(int(r["N"]), int(r["K"]), int(r["Q"]), Fraction(r["R"]), int(r["trials"]),
                       float(r["snr_db"]), float(r["stderr_db"]), float(r["adds_per_entry"]),
                       Fraction(r["nominal_adds"])) for r in rows]


def fig1_curve() -> list[tuple[float, float]]:
    """``(aspect, I)`` on a log-uniform grid over ``[1, 1e4]`` (8 points per octave)."""
    top = math.log2(1e4)
    aspects = [2.0 ** (j / 8) for j in range(int(top * 8) + 1)] + [1e4]
    return [(a, info_vs_aspect(a)) for a in aspects]


def emit_fig1(table, path) -> None:
    """Write the information curve plus one marker per table size.

    ``table`` is anything :func:`~po2factor.theory.fig1_markers` accepts, e.g.
    a :class:`BenchmarkResult`'s records or :data:`PUBLISHED_TABLE1`.
    """
    if isinstance(table, BenchmarkResult):
        table = table.records
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind", "aspect_ratio", "bits"))
        for a, bits in fig1_curve():
            w.writerow(("curve", repr(float(a)), repr(float(bits))))
        for a, bits in fig1_markers(table):
            w.writerow(("marker", repr(float(a)), repr(float(bits))))

