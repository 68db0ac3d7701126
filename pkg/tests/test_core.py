import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from po2factor.core import (
    DegenerateInputError,
    DimensionError,
    IndexRangeError,
    InvalidInputError,
    Po2Matrix,
    QuantizerConfig,
    ScalarPo2,
    improved_additive,
    quantize_matrix,
    quantize_scalar,
    quantize_values,
    snr_db,
    standard_additive,
)

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e30, max_value=1e30)


@pytest.mark.parametrize("v, expected", [
    (1.0, ScalarPo2(1, 0)),
    (-3.1, ScalarPo2(-1, 2)),
    (1.5, ScalarPo2(1, 1)),
    (0.7, ScalarPo2(1, -1)),
    (0.75, ScalarPo2(1, 0)),
    (-0.125, ScalarPo2(-1, -3)),
])
def test_quantize_scalar_examples(v, expected):
    assert quantize_scalar(v) == expected


def test_quantize_scalar_underflow_is_zero():
    assert quantize_scalar(1e-400, QuantizerConfig(e_min=-126)) is None
    assert quantize_scalar(0.0) is None


def test_quantize_scalar_clamps_large_exponents():
    cfg = QuantizerConfig(e_min=-4, e_max=4)
    assert quantize_scalar(1e6, cfg) == ScalarPo2(1, 4)
    assert quantize_scalar(0.75 * 2 ** -4, cfg) == ScalarPo2(1, -4)
    assert quantize_scalar(0.74 * 2 ** -4, cfg) is None


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_quantize_scalar_rejects_non_finite(bad):
    with pytest.raises(InvalidInputError):
        quantize_scalar(bad)


def test_quantizer_config_validates():
    with pytest.raises(InvalidInputError):
        QuantizerConfig(e_min=3, e_max=3)
    assert QuantizerConfig(e_min=-2, e_max=5).zero_threshold == 0.75 / 4


@given(finite)
def test_quantizer_idempotent(v):
    p = quantize_scalar(v)
    if p is not None:
        assert quantize_scalar(p.value) == p


@given(st.floats(min_value=2 ** -20, max_value=2 ** 20) | st.floats(min_value=-(2 ** 20), max_value=-(2 ** -20)))
def test_nearest_point_property(v):
    cfg = QuantizerConfig(e_min=-24, e_max=24)
    p = quantize_scalar(v, cfg)
    best = abs(abs(v) - 2.0 ** p.exponent)
    for e in range(cfg.e_min, cfg.e_max + 1):
        assert best <= abs(abs(v) - 2.0 ** e)
    assert p.sign == (1 if v > 0 else -1)


@given(st.floats(min_value=1e-30, max_value=1e30))
def test_one_third_bound(v):
    for x in (v, -v):
        q = quantize_scalar(x).value
        assert abs(x - q) <= abs(x) / 3 * (1 + 1e-15)


def test_quantize_matrix_fixed_point():
    M = np.array([[1.0, -0.5, 4.0], [0.25, -8.0, 2.0 ** -20]])
    P = quantize_matrix(M)
    assert P.nnz == 6
    assert np.array_equal(P.to_dense(), M)


def test_quantize_matrix_one_by_one():
    P = quantize_matrix([[0.7]])
    assert list(P.entries()) == [(0, 0, ScalarPo2(1, -1))]


def test_quantize_matrix_omits_zeros():
    P = quantize_matrix(np.array([[0.0, 1.0], [1e-300, -2.0]]), QuantizerConfig(e_min=-100, e_max=100))
    assert P.nnz == 2
    assert [(r, c) for r, c, _ in P.entries()] == [(0, 1), (1, 1)]


def test_quantize_matrix_rejects_nan():
    with pytest.raises(InvalidInputError):
        quantize_matrix([[1.0, np.nan]])


def test_quantize_matrix_gaussian_snr():
    M = np.random.default_rng(3).standard_normal((200, 500))
    snr = snr_db(M, quantize_matrix(M).to_dense())
    assert abs(snr - 14.2) <= 0.2


def test_po2matrix_sorted_and_immutable():
    P = Po2Matrix(3, 3, [2, 0, 1], [0, 2, 1], [1, -1, 1], [0, 1, -2])
    assert P.row_idx.tolist() == [0, 1, 2]
    assert P.col_idx.tolist() == [2, 1, 0]
    assert P.values().tolist() == [-2.0, 0.25, 1.0]
    with pytest.raises(AttributeError):
        P.rows = 4
    with pytest.raises(ValueError):
        P.row_idx[0] = 1


def test_po2matrix_rejects_bad_entries():
    with pytest.raises(InvalidInputError):
        Po2Matrix(2, 2, [0, 0], [1, 1], [1, 1], [0, 0])
    with pytest.raises(IndexRangeError):
        Po2Matrix(2, 2, [0], [2], [1], [0])
    with pytest.raises(InvalidInputError):
        Po2Matrix(2, 2, [0], [0], [0], [0])
    with pytest.raises(InvalidInputError):
        Po2Matrix.from_dense([[3.0, 0.0]])


def test_po2matrix_from_dense_roundtrip():
    A = np.array([[0.0, -4.0], [0.125, 0.0]])
    P = Po2Matrix.from_dense(A)
    assert np.array_equal(P.to_dense(), A)
    assert P == Po2Matrix.from_entries(2, 2, P.entries())


def test_standard_additive_exact_three():
    d = standard_additive([[3.0]], 2)
    assert d.Q0 == 2
    assert [int(B[0, 0]) for B in d.bitplanes] == [1, 1]
    assert d.reconstruct()[0, 0] == 3.0


def test_standard_additive_half():
    d = standard_additive([[0.5]], 1)
    assert d.Q0 == 0
    assert int(d.bitplanes[0][0, 0]) == 1
    assert d.reconstruct()[0, 0] == 0.5


def test_standard_additive_signs():
    d = standard_additive([[-3.0, 0.0, 1.0]], 3)
    assert d.signs.tolist() == [[-1, 1, 1]]
    assert d.reconstruct().tolist() == [[-3.0, 0.0, 1.0]]


def test_standard_additive_degenerate():
    with pytest.raises(DegenerateInputError):
        standard_additive(np.zeros((2, 2)), 3)
    with pytest.raises(InvalidInputError):
        standard_additive([[1.0]], 0)


@settings(max_examples=50)
@given(st.lists(finite.filter(lambda x: abs(x) > 1e-20), min_size=1, max_size=12), st.integers(1, 12))
def test_standard_additive_truncation_bound(vals, Q):
    M = np.array([vals])
    d = standard_additive(M, Q)
    A = d.reconstruct()
    assert np.all(np.abs(M) < 2.0 ** d.Q0)
    err = np.abs(M - A)
    assert np.all(err < 2.0 ** (d.Q0 - Q))
    assert np.all(np.abs(A) <= np.abs(M))


def test_improved_additive_q1_is_quantizer():
    M = np.random.default_rng(0).standard_normal((3, 7))
    (P1,) = improved_additive(M, 1)
    assert P1 == quantize_matrix(M)


def test_improved_additive_two_step_example():
    P1, P2 = improved_additive([[0.75]], 2)
    assert list(P1.entries()) == [(0, 0, ScalarPo2(1, 0))]
    assert list(P2.entries()) == [(0, 0, ScalarPo2(-1, -2))]
    assert P1.to_dense() + P2.to_dense() == 0.75


def test_improved_additive_residual_decreases():
    M = np.random.default_rng(1).standard_normal((20, 30))
    residual = M.copy()
    last = np.linalg.norm(residual)
    for P in improved_additive(M, 5):
        before = np.abs(residual)
        residual = residual - P.to_dense()
        assert np.all(np.abs(residual) <= before / 3 * (1 + 1e-15))
        now = np.linalg.norm(residual)
        assert now < last
        last = now


def test_snr_examples():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert snr_db(M, M) == math.inf
    assert snr_db(M, np.zeros_like(M)) == pytest.approx(0.0, abs=1e-12)
    assert snr_db([[1.0, 0.0]], [[1.0, 1.0]]) == pytest.approx(0.0, abs=1e-12)


def test_snr_errors():
    with pytest.raises(DimensionError):
        snr_db(np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(DegenerateInputError):
        snr_db(np.zeros((2, 2)), np.ones((2, 2)))


def test_quantize_values_matches_scalar():
    v = np.random.default_rng(2).standard_normal(500) * 10.0 ** np.random.default_rng(3).integers(-5, 5, 500)
    dense = quantize_values(v)
    for x, q in zip(v, dense):
        p = quantize_scalar(x)
        assert q == (0.0 if p is None else p.value)
