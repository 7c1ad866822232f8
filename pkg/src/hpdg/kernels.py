"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``HPDG_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is used.
"""
import os

from . import _kernels_py

_force_py = os.environ.get("HPDG_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

legendre_table = _impl.legendre_table
tensor_products = _impl.tensor_products

__all__ = ["BACKEND", "legendre_table", "tensor_products"]
