"""Sparse power-of-two matrix factorization for multiplierless matrix-vector products."""

from .core import (
    BitplaneDecomposition,
    DegenerateInputError,
    DimensionError,
    IndexRangeError,
    InvalidInputError,
    OrientationError,
    Po2Error,
    Po2Matrix,
    QuantizerConfig,
    ScalarPo2,
    improved_additive,
    quantize_matrix,
    quantize_scalar,
    snr_db,
    standard_additive,
)
from .engine import AdditionLedger, apply_factorization, apply_po2, deserialize, serialize
from .factorizer import (
    BlockPlan,
    FactorConfig,
    Factorization,
    factor_step,
    factorize,
    factorize_blocked,
    greedy_sparse_column,
    plan_blocks,
    sparsify_po2,
)

__version__ = "0.1.0"
