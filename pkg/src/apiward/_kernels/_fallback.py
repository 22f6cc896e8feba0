"""Pure-Python / numpy kernels.

Reference implementations of the per-request hot path. The compiled
Cython module (`_core`) must match these semantics exactly: the package
selects whichever is available at import time and the test suite checks
parity between the two.
"""

from __future__ import annotations

import numpy as np

IMPL = "python"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

FEATURE_DIM = 256


def fnv1a64(data: bytes, seed: int = FNV_OFFSET) -> int:
    """64-bit FNV-1a over raw bytes, starting from `seed`."""
    h = seed & _MASK64
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def hash_tokens(data: bytes, seed: int = FNV_OFFSET) -> np.ndarray:
    """Signed feature hashing of ASCII-whitespace-separated tokens.

    Each token adds +-1 at index fnv1a64(token) mod 256; the sign comes
    from bit 63 of the same hash. Repeated tokens accumulate.
    """
    vec = np.zeros(FEATURE_DIM, dtype=np.float64)
    for token in data.split():
        h = fnv1a64(token, seed)
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[h % FEATURE_DIM] += sign
    return vec


def ae_score(x: np.ndarray, layers: list, eps: float) -> tuple[float, np.ndarray]:
    """Forward pass through dense+batchnorm layers, returning (mse, recon).

    `layers` is a sequence of (W, b, gamma, beta, run_mean, run_var, bn, relu)
    tuples; batch normalization uses the stored running statistics.
    """
    h = x
    for W, b, gamma, beta, rmean, rvar, bn, relu in layers:
        z = W @ h + b
        if bn:
            z = (z - rmean) / np.sqrt(rvar + eps) * gamma + beta
        if relu:
            z = np.maximum(z, 0.0)
        h = z
    diff = h - x
    return float(diff @ diff) / x.shape[0], h
