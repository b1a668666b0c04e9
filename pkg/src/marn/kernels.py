"""Select the kernel backend at import time.

The compiled extension is used when it imports; ``MARN_PURE_PYTHON=1`` forces
the numpy fallback.  ``use_backend`` switches at runtime (tests, benchmarks).
"""

import importlib
import os

from . import _kernels_py

_impl = _kernels_py


def _load_compiled():
    try:
        return importlib.import_module("marn._ckernels")
    except ImportError:
        return None


def available_backends() -> list[str]:
    names = ["numpy"]
    if _load_compiled() is not None:
        names.insert(0, "cython")
    return names


def use_backend(name: str) -> None:
    global _impl
    if name == "numpy":
        _impl = _kernels_py
    elif name == "cython":
        mod = _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        _impl = mod
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def backend() -> str:
    return _impl.BACKEND


def attention_forward(h, F, W1, b1, w2):
    return _impl.attention_forward(h, F, W1, b1, w2)


def attention_backward(h, F, W1, w2, a, Z, g_ctx, g_a):
    return _impl.attention_backward(h, F, W1, w2, a, Z, g_ctx, g_a)


def gru_forward(x, h, Wx, Wh, b):
    return _impl.gru_forward(x, h, Wx, Wh, b)


def gru_backward(x, h, Wx, Wh, cache, g):
    return _impl.gru_backward(x, h, Wx, Wh, cache, g)


def relevance_forward(S, G, v):
    return _impl.relevance_forward(S, G, v)


def relevance_backward(Z, v, g_q):
    return _impl.relevance_backward(Z, v, g_q)


if os.environ.get("MARN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    _impl = _load_compiled() or _kernels_py
