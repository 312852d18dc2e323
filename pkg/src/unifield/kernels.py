"""Kernel backend selection.

The compiled extension is used when it was built; otherwise (or when
``UNIFIELD_PURE_PYTHON=1``) the numpy fallback is used. Both expose
``eval_program`` and ``assemble_banded`` with identical semantics.
"""
import os

from . import _kernels_py

if os.environ.get("UNIFIELD_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

eval_program = _impl.eval_program
assemble_banded = _impl.assemble_banded


def use(backend: str) -> None:
    """Switch backend at runtime (``"cython"`` or ``"python"``); used by tests and benchmarks."""
    global _impl, BACKEND, eval_program, assemble_banded
    if backend == "python":
        _impl = _kernels_py
    elif backend == "cython":
        from . import _kernels as _impl  # noqa: F811
    else:
        raise ValueError(backend)
    BACKEND = backend
    eval_program = _impl.eval_program
    assemble_banded = _impl.assemble_banded


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
