# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for token hashing and autoencoder scoring.

Must stay semantically identical to `_fallback`; parity is enforced by
the test suite (exact for hashing, tight tolerance for float reductions).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

IMPL = "compiled"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
FEATURE_DIM = 256

cdef unsigned long long _FNV_PRIME_C = 0x100000001B3ULL


cdef inline unsigned long long _fnv1a64(const unsigned char* data,
                                        Py_ssize_t n,
                                        unsigned long long h) nogil:
    cdef Py_ssize_t i
    for i in range(n):
        h ^= data[i]
        h *= _FNV_PRIME_C
    return h


cdef inline bint _is_space(unsigned char c) nogil:
    # Same set bytes.split() uses: \t \n \v \f \r and space.
    return c == 32 or (9 <= c <= 13)


def fnv1a64(bytes data, unsigned long long seed=0xCBF29CE484222325):
    """64-bit FNV-1a over raw bytes, starting from `seed`."""
    cdef const unsigned char* buf = data
    return _fnv1a64(buf, len(data), seed)


def hash_tokens(bytes data, unsigned long long seed=0xCBF29CE484222325):
    """Signed feature hashing of ASCII-whitespace-separated tokens."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vec = np.zeros(FEATURE_DIM, dtype=np.float64)
    cdef double[::1] v = vec
    cdef const unsigned char* buf = data
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t i = 0, start
    cdef unsigned long long h
    while i < n:
        while i < n and _is_space(buf[i]):
            i += 1
        if i >= n:
            break
        start = i
        while i < n and not _is_space(buf[i]):
            i += 1
        h = _fnv1a64(buf + start, i - start, seed)
        if (h >> 63) & 1:
            v[h % FEATURE_DIM] += 1.0
        else:
            v[h % FEATURE_DIM] -= 1.0
    return vec


def ae_score(cnp.ndarray[cnp.float64_t, ndim=1] x, list layers, double eps):
    """Forward pass through dense+batchnorm layers, returning (mse, recon)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h = x
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b, gamma, beta, rmean, rvar
    cdef bint bn, relu
    cdef Py_ssize_t i, j, m, nin
    cdef double acc, z
    for layer in layers:
        W = layer[0]
        b = layer[1]
        gamma = layer[2]
        beta = layer[3]
        rmean = layer[4]
        rvar = layer[5]
        bn = layer[6]
        relu = layer[7]
        m = W.shape[0]
        nin = W.shape[1]
        out = np.empty(m, dtype=np.float64)
        for i in range(m):
            acc = 0.0
            for j in range(nin):
                acc += W[i, j] * h[j]
            z = acc + b[i]
            if bn:
                z = (z - rmean[i]) / sqrt(rvar[i] + eps) * gamma[i] + beta[i]
            if relu and z < 0.0:
                z = 0.0
            out[i] = z
        h = out
    cdef double err = 0.0, d
    cdef Py_ssize_t nx = x.shape[0]
    for i in range(nx):
        d = h[i] - x[i]
        err += d * d
    return err / nx, h
