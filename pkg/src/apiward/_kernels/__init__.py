"""Kernel selection: compiled extension where it wins, numpy otherwise.

The two hot paths are bound independently at import time based on what
`apiward bench --compare-kernels` shows on typical hardware:

* ``hash_tokens`` / ``fnv1a64``: the compiled tokenizer avoids per-byte
  Python overhead and is roughly an order of magnitude faster, so it is
  used whenever the extension built.
* ``ae_score``: the forward pass is a chain of small matrix-vector
  products where BLAS-backed numpy beats the Cython loop, so the
  fallback stays the default even with the extension present. Set
  APIWARD_COMPILED_AE=1 to bind the compiled version instead.

Set APIWARD_PURE_PYTHON=1 to force the pure-Python implementation for
everything (useful for benchmarking and for verifying parity).
"""

from __future__ import annotations

import os

from . import _fallback
from ._fallback import FEATURE_DIM, FNV_OFFSET

_FORCED_PURE = os.environ.get("APIWARD_PURE_PYTHON", "") == "1"

_core_mod = None
if not _FORCED_PURE:
    try:
        from . import _core as _core_mod  # type: ignore[attr-defined]
    except ImportError:
        _core_mod = None

if _core_mod is not None:
    fnv1a64 = _core_mod.fnv1a64
    hash_tokens = _core_mod.hash_tokens
    if os.environ.get("APIWARD_COMPILED_AE", "") == "1":
        ae_score = _core_mod.ae_score
        IMPL = "compiled"
    else:
        ae_score = _fallback.ae_score
        IMPL = "compiled-hash"
else:
    fnv1a64 = _fallback.fnv1a64
    hash_tokens = _fallback.hash_tokens
    ae_score = _fallback.ae_score
    IMPL = "python"


def available_impls() -> dict:
    """Map of implementation name -> module, for benchmarks and tests."""
    impls = {"python": _fallback}
    try:
        from . import _core  # type: ignore[attr-defined]

        impls["compiled"] = _core
    except ImportError:
        pass
    return impls


__all__ = [
    "IMPL",
    "FEATURE_DIM",
    "FNV_OFFSET",
    "fnv1a64",
    "hash_tokens",
    "ae_score",
    "available_impls",
]
