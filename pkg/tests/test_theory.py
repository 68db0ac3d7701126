import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from po2factor.bench import PUBLISHED_TABLE1
from po2factor.core import DEFAULT_QUANTIZER, InvalidInputError, QuantizerConfig, quantize_values
from po2factor.theory import (
    DB_PER_BIT,
    BetaCorrModel,
    binary_entropy,
    collision_bound,
    conjectured_snr_db,
    corr_cdf,
    corr_tail,
    fig1_markers,
    gamma_constant,
    gamma_linear,
    gamma_quadrature,
    info_per_entry,
    info_vs_aspect,
    limiting_cos2,
    pmax_cdf,
    po2_match_prob,
    predicted_snr_db,
    rows_for_aspect,
    sample_max_corr,
    theory_report,
)


def test_binary_entropy():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-4)
    with pytest.raises(InvalidInputError):
        binary_entropy(1.1)


def test_info_per_entry():
    assert info_per_entry(7, 7) == 0.0
    assert info_per_entry(8, 16) == 2.0
    assert info_per_entry(10, 1024) == pytest.approx(8.11, abs=0.01)
    assert info_vs_aspect(102.4) == pytest.approx(info_per_entry(10, 1024))
    with pytest.raises(InvalidInputError):
        info_per_entry(5, 4)


def test_rows_for_aspect():
    assert rows_for_aspect(1024, 1) == 10
    assert rows_for_aspect(1024, 0.5) == 20
    assert rows_for_aspect(4, 1) == 2


@pytest.mark.parametrize("N", [2, 3, 4, 7, 10, 40, 200])
def test_corr_cdf_matches_incomplete_beta(N):
    for rho in np.linspace(0, 1, 23):
        # rho^2 ~ Beta(1/2, (N-1)/2)
        assert abs(corr_cdf(rho, N) - special.betainc(0.5, (N - 1) / 2, rho ** 2)) <= 1e-10
        assert abs(corr_cdf(rho, N) + corr_tail(rho, N) - 1.0) <= 1e-10


def test_corr_cdf_endpoints():
    assert corr_cdf(0.0, 5) == 0.0
    assert corr_cdf(1.0, 5) == 1.0
    for rho in (0.1, 0.5, 0.9):
        assert corr_cdf(rho, 3) == pytest.approx(rho, abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(2, 300))
def test_corr_cdf_monotone(a, b, N):
    lo, hi = min(a, b), max(a, b)
    assert corr_cdf(lo, N) <= corr_cdf(hi, N) + 1e-12


def test_pmax_examples():
    for rho in (0.2, 0.7):
        assert pmax_cdf(rho, 6, 1) == pytest.approx(corr_cdf(rho, 6), abs=1e-14)
    assert pmax_cdf(1.0, 6, 64) == 1.0
    assert pmax_cdf(0.5, 6, 64) <= corr_cdf(0.5, 6)


def test_pmax_step_sharpening():
    lo, hi = math.sqrt(0.75) - 0.05, math.sqrt(0.75) + 0.05
    below = [pmax_cdf(lo, n, 2 ** n) for n in (6, 10, 14)]
    above = [pmax_cdf(hi, n, 2 ** n) for n in (6, 10, 14)]
    assert below[0] > below[1] > below[2] and below[2] < 0.05
    assert above[0] < above[1] < above[2] and above[2] > 0.95


def test_beta_model():
    m = BetaCorrModel(6, 64, 1.0)
    assert m.partition_function() == pytest.approx(special.beta(0.5, 2.5))
    assert m.limit() == pytest.approx(math.sqrt(0.75))
    from scipy import integrate
    assert integrate.quad(m.density, 0, 1)[0] == pytest.approx(1.0, abs=1e-10)
    assert integrate.quad(m.density_sq, 0, 1)[0] == pytest.approx(1.0, abs=1e-8)
    assert m.cdf(0.4) == corr_cdf(0.4, 6) and m.pmax(0.8) == pmax_cdf(0.8, 6, 64)
    with pytest.raises(InvalidInputError):
        BetaCorrModel(1, 4)


def test_monte_carlo_ks():
    N, K = 6, 64
    x = np.sort(sample_max_corr(N, K, 4000, seed=3))
    F = np.array([pmax_cdf(v, N, K) for v in x])
    n = x.size
    ks = max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))
    assert ks < 0.05


def test_limiting_cos2():
    assert limiting_cos2(1) == 0.75
    assert limiting_cos2(0.5) == 0.5
    assert limiting_cos2(60) == pytest.approx(1.0)


def test_gamma():
    assert abs(gamma_constant() - gamma_quadrature()) <= 1e-9
    assert gamma_constant() == pytest.approx(3.614, abs=5e-4)
    assert 10 * math.log10(gamma_constant()) == pytest.approx(5.58, abs=0.01)
    assert gamma_linear() == pytest.approx(3.6, abs=1e-12)


def test_predicted_snr():
    assert predicted_snr_db(0, 1) == 0.0
    assert predicted_snr_db(10, 1) == pytest.approx(55.8, abs=0.05)
    assert predicted_snr_db(20, 0.5) == pytest.approx(predicted_snr_db(10, 1))


def test_conjectured_snr():
    assert conjectured_snr_db(1024, 1, 1) == 0.0
    assert conjectured_snr_db(1024, 2, 1) == pytest.approx(50.2, abs=0.05)
    assert conjectured_snr_db(4096, 3, 1) > conjectured_snr_db(1024, 3, 1)


def test_po2_match_prob_monte_carlo():
    p = po2_match_prob()
    rng = np.random.default_rng(17)
    n, hits = 10 ** 7, 0
    for _ in range(10):
        a = quantize_values(rng.standard_normal(n // 10))
        b = quantize_values(rng.standard_normal(n // 10))
        hits += int(np.count_nonzero(a == b))
    est = hits / n
    assert abs(est - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_po2_match_prob_narrow_alphabet():
    # with e_max = e_min + 1 the bins are zero, two magnitudes and two signs
    from scipy.stats import norm
    cfg = QuantizerConfig(e_min=0, e_max=1)
    p0 = norm.cdf(0.75) - norm.cdf(-0.75)
    p1 = norm.cdf(1.5) - norm.cdf(0.75)
    p2 = norm.sf(1.5)
    assert po2_match_prob(cfg) == pytest.approx(p0 ** 2 + 2 * p1 ** 2 + 2 * p2 ** 2, abs=1e-12)
    assert po2_match_prob(DEFAULT_QUANTIZER) < po2_match_prob(cfg)


def test_collision_bound():
    assert collision_bound(0.3, 5, 1) == 0.0
    assert collision_bound(0.9, 1, 1000) == 1.0
    assert collision_bound(0.5, 10, 4) == pytest.approx(6 / 1024)


def test_fig1_markers_published_row():
    ((aspect, bits),) = fig1_markers({(10, 1024): PUBLISHED_TABLE1[(10, 1024)]})
    assert aspect == 102.4
    assert bits == pytest.approx(50.0 / DB_PER_BIT)


def test_fig1_markers_edge_cases():
    assert fig1_markers({(2, 4): [14.2, 20.6]}) == [(2.0, pytest.approx(6.4 / DB_PER_BIT))]
    assert fig1_markers({(2, 4): [10.0, 10.0, 10.0]})[0][1] == 0.0
    with pytest.raises(InvalidInputError):
        fig1_markers({(2, 4): [1.0]})


@settings(max_examples=20)
@given(st.integers(2, 2 ** 16), st.integers(1, 8), st.sampled_from([1.0, 0.5, 0.25]))
def test_theory_report_invariants(K, Q, R):
    rep = theory_report(K, Q, R, N=min(K, rows_for_aspect(K, R)))
    assert rep.cos2_alpha + rep.sin2_alpha == pytest.approx(1.0)
    assert 0.0 <= rep.collision_bound <= 1.0
    assert rep.gamma > 1
