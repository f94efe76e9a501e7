"""Selects the eigensolver kernel at import time.

The compiled ``_jacobi3`` extension is used when present. Setting
``HPDNET_BACKEND=python`` forces the numpy fallback.
"""
import os

from . import _jacobi_py

BACKEND = "python"
eigh3_batch = _jacobi_py.eigh3_batch

if os.environ.get("HPDNET_BACKEND", "").lower() != "python":
    try:
        from ._jacobi3 import eigh3_batch  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        pass
