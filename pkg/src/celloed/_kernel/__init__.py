"""Kernel backend selection.

The compiled Cython core is preferred; the numpy fallback is used when the
extension is missing (source checkout without a build step) or when
``CELLOED_PURE_PYTHON`` is set to a non-empty value. Both backends expose
the same ``simulate`` contract; ``tests/test_kernel_parity.py`` holds them
to it.
"""

import os

if os.environ.get("CELLOED_PURE_PYTHON"):
    from . import pure as backend
else:
    try:
        from . import _core as backend  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as backend

BACKEND = backend.NAME
simulate = backend.simulate


def available_backends():
    """Names of importable backends (for the benchmark script)."""
    names = ["pure"]
    try:
        from . import _core  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
