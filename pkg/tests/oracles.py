"""Independent reference computations used by the tests."""

import itertools

import numpy as np


def coefficient_alphabet(e_min, e_max):
    p = 2.0 ** np.arange(e_min, e_max + 1)
    return np.concatenate([[0.0], p, -p])


def brute_force_residual(L, t, s, e_min, e_max):
    """Smallest ``||t - L rho||`` over all ``rho`` with at most ``s`` nonzeros in ``{0, ±2^e}``."""
    L = np.asarray(L, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    K = L.shape[1]
    alphabet = coefficient_alphabet(e_min, e_max)
    best = np.linalg.norm(t)
    for support in itertools.combinations(range(K), s):
        coeffs = np.array(list(itertools.product(alphabet, repeat=s)))
        res = t[None, :] - coeffs @ L[:, support].T
        best = min(best, float(np.sqrt((res ** 2).sum(axis=1)).min()))
    return best


def greedy_residual(L, t, rho):
    return float(np.linalg.norm(np.asarray(t) - np.asarray(L) @ rho.to_dense()[:, 0]))


def bitwise_po2_product(factors, x):
    """Apply factors right to left using python floats and math.ldexp only."""
    import math

    v = [float(a) for a in x]
    for F in reversed(factors):
        out = [0.0] * F.rows
        for r, c, p in F.entries():
            term = math.ldexp(v[c], p.exponent)
            out[r] += term if p.sign > 0 else -term
        v = out
    return np.array(v)
