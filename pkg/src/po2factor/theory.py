"""Analytic side of the factorization: position information, correlation
statistics of random bases, the per-nonzero SNR factor and the SNR predictors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy import integrate, special, stats

from ._random import derive_seed, philox
from .core import DEFAULT_QUANTIZER, InvalidInputError, QuantizerConfig

DB_PER_BIT = 20.0 * math.log10(2.0)

_QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


def binary_entropy(x: float) -> float:
    """``H2(x)`` in bits, with ``0 log 0 = 0``."""
    if not 0.0 <= x <= 1.0:
        raise InvalidInputError(f"probability out of range: {x}")
    if x in (0.0, 1.0):
        return 0.0
    return float(-x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x))


def info_vs_aspect(aspect: float) -> float:
    """Position information per entry, ``a * H2(1/a)``, for aspect ratio ``a = K/N``."""
    if aspect < 1:
        raise InvalidInputError("aspect ratio must be >= 1")
    return aspect * binary_entropy(1.0 / aspect)


def info_per_entry(N: int, K: int) -> float:
    """Bits of support information per entry of an ``N x K`` matrix."""
    if not 1 <= N <= K:
        raise InvalidInputError(f"need 1 <= N <= K, got N={N}, K={K}")
    return (K / N) * binary_entropy(N / K)


def rows_for_aspect(K: int, R) -> int:
    """Block height ``round(log2(K) / R)`` (at least one row)."""
    if K < 2 or R <= 0:
        raise InvalidInputError("need K >= 2 and R > 0")
    return max(1, math.floor(math.log2(K) / R + 0.5))


def _log_partition(N: int) -> float:
    return float(special.betaln(0.5, (N - 1) / 2.0))


def _cos_power_integral(lo: float, hi: float, N: int) -> float:
    # xi = sin(theta) turns (1 - xi^2)^((N-3)/2) dxi into cos(theta)^(N-2) dtheta
    if hi <= lo:
        return 0.0
    val, _ = integrate.quad(lambda t: math.cos(t) ** (N - 2), lo, hi, **_QUAD)
    return val


def corr_cdf(rho: float, N: int) -> float:
    """CDF of the absolute correlation between a fixed and a random direction in R^N."""
    if N < 2:
        raise InvalidInputError("N must be >= 2")
    rho = min(max(float(rho), 0.0), 1.0)
    if rho == 1.0:
        return 1.0
    scale = 2.0 * math.exp(-_log_partition(N))
    return min(1.0, scale * _cos_power_integral(0.0, math.asin(rho), N))


def corr_tail(rho: float, N: int) -> float:
    """``1 - corr_cdf(rho, N)`` computed directly from the upper integral."""
    if N < 2:
        raise InvalidInputError("N must be >= 2")
    rho = min(max(float(rho), 0.0), 1.0)
    scale = 2.0 * math.exp(-_log_partition(N))
    return min(1.0, scale * _cos_power_integral(math.asin(rho), math.pi / 2, N))


def pmax_cdf(rho: float, N: int, K: int) -> float:
    """CDF of the largest of ``K`` independent absolute correlations."""
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    cdf = corr_cdf(rho, N)
    if cdf < 0.5:
        return cdf ** K
    return math.exp(K * math.log1p(-corr_tail(rho, N)))


@dataclass(frozen=True)
class BetaCorrModel:
    """Squared correlations ``g_1^2 / sum g_n^2`` ~ Beta(1/2, (N-1)/2)."""

    N: int
    K: int
    R: float = 1.0

    def __post_init__(self):
        if self.N < 2 or self.K < 2:
            raise InvalidInputError("BetaCorrModel needs N >= 2 and K >= 2")

    def partition_function(self) -> float:
        return math.exp(_log_partition(self.N))

    def density_sq(self, r):
        r = np.asarray(r, dtype=np.float64)
        return stats.beta.pdf(r, 0.5, (self.N - 1) / 2.0)

    def density(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        return 2.0 / self.partition_function() * (1.0 - rho ** 2) ** ((self.N - 3) / 2.0)

    def cdf(self, rho: float) -> float:
        return corr_cdf(rho, self.N)

    def pmax(self, rho: float) -> float:
        return pmax_cdf(rho, self.N, self.K)

    def limit(self) -> float:
        """Step location ``sqrt(1 - 4**-R)`` of the large-K limit of ``pmax``."""
        return math.sqrt(limiting_cos2(self.R))


def sample_max_corr(N: int, K: int, trials: int, seed: int = 0) -> np.ndarray:
    """Monte Carlo draws of ``max_k |<e_1, b_k>| / ||b_k||`` for iid Gaussian ``b_k``."""
    out = np.empty(trials)
    for t in range(trials):
        g = philox(derive_seed(seed, t)).standard_normal((K, N))
        out[t] = np.max(np.abs(g[:, 0]) / np.linalg.norm(g, axis=1))
    return out


def limiting_cos2(R: float) -> float:
    if R <= 0:
        raise InvalidInputError("R must be positive")
    return 1.0 - 4.0 ** (-float(R))


def gamma_constant() -> float:
    """Per-nonzero SNR factor ``3 exp(2 - sqrt(3) pi / 3)``."""
    return 3.0 * math.exp(2.0 - math.sqrt(3.0) * math.pi / 3.0)


def gamma_quadrature() -> float:
    """Log-domain average over a distance error uniform on ``[0, 1/3)``."""
    val, _ = integrate.quad(lambda a: math.log(0.25 + 0.75 * a * a), 0.0, 1.0 / 3.0, **_QUAD)
    return math.exp(-3.0 * val)


def gamma_linear() -> float:
    """Same average taken in the linear domain; evaluates to 18/5."""
    val, _ = integrate.quad(lambda a: 0.25 + 0.75 * a * a, 0.0, 1.0 / 3.0, **_QUAD)
    return 1.0 / (3.0 * val)


def predicted_snr_db(N: float, R: float) -> float:
    """SNR gain per matrix factor, ``gamma ** (N R)``, in dB."""
    return 10.0 * N * float(R) * math.log10(gamma_constant())


def conjectured_snr_db(K: int, Q: int, R: float) -> float:
    """``(R K^2 / log2 K) ** ((Q - 1) R)`` in dB."""
    if K < 2 or Q < 1 or R <= 0:
        raise InvalidInputError("need K >= 2, Q >= 1, R > 0")
    R = float(R)
    return 10.0 * (Q - 1) * R * math.log10(R * K * K / math.log2(K))


def po2_match_prob(cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> float:
    """Probability that two iid standard Gaussians quantize to the same value."""
    e = np.arange(cfg.e_min, cfg.e_max + 1, dtype=np.float64)
    lo = np.ldexp(0.75, e.astype(int))
    lo[0] = cfg.zero_threshold
    hi = np.append(lo[1:], np.inf)
    # mass of each (sign, exponent) bin: half of P(lo <= |x| < hi)
    half = stats.norm.sf(lo) - stats.norm.sf(hi)
    p_zero = 1.0 - 2.0 * stats.norm.sf(cfg.zero_threshold)
    return float(2.0 * np.sum(half ** 2) + p_zero ** 2)


def collision_bound(p: float, N: int, K: int) -> float:
    """Union bound on two identical columns among ``K``: ``p^N K (K-1) / 2``, capped at 1."""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("p must be a probability")
    return min(1.0, p ** N * K * (K - 1) / 2.0)


def fig1_markers(table) -> list[tuple[float, float]]:
    """Largest SNR step between neighbouring resolutions, in bits, per matrix size.

    ``table`` is either a mapping ``{(N, K): [snr_Q1, snr_Q2, ...]}`` or an
    iterable of records with ``N``, ``K``, ``Q`` and ``snr_db`` attributes.
    Returns ``(K / N, bits)`` pairs in first-seen size order.
    """
    rows = _table_rows(table)
    markers = []
    for (N, K), snrs in rows.items():
        if len(snrs) < 2:
            raise InvalidInputError(f"size {N}x{K} needs at least two resolutions")
        gap = max(b - a for a, b in zip(snrs, snrs[1:]))
        markers.append((K / N, gap / DB_PER_BIT))
    return markers


def _table_rows(table) -> dict:
    if isinstance(table, Mapping):
        return {tuple(k): list(v) for k, v in table.items()}
    grouped: dict = {}
    for rec in table:
        grouped.setdefault((rec.N, rec.K), []).append((rec.Q, rec.snr_db))
    return {k: [snr for _, snr in sorted(v)] for k, v in grouped.items()}


@dataclass(frozen=True)
class TheoryReport:
    N: int
    K: int
    Q: int
    R: float
    I: float
    cos2_alpha: float
    sin2_alpha: float
    gamma: float
    predicted_snr_db: float
    conjectured_snr_db: float
    collision_bound: float


def theory_report(K: int, Q: int, R: float = 1.0, N: Optional[int] = None) -> TheoryReport:
    N = rows_for_aspect(K, R) if N is None else N
    cos2 = limiting_cos2(R)
    return TheoryReport(
        N=N, K=K, Q=Q, R=float(R),
        I=info_per_entry(N, K),
        cos2_alpha=cos2,
        sin2_alpha=1.0 - cos2,
        gamma=gamma_constant(),
        predicted_snr_db=predicted_snr_db(N, R),
        conjectured_snr_db=conjectured_snr_db(K, Q, R),
        collision_bound=collision_bound(po2_match_prob(), N, K),
    )
