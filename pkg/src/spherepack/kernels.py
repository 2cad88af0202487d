"""Hot-kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``SPHEREPACK_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

BACKENDS = ("cython", "python")
_MODULES = {"cython": "spherepack._ckernels", "python": "spherepack._pykernels"}


def load_backend(name: str) -> ModuleType:
    """Import a specific backend; raises ImportError if it is not built."""
    return importlib.import_module(_MODULES[name])


def available_backends() -> list[str]:
    names = []
    for name in BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select() -> tuple[str, ModuleType]:
    if os.environ.get("SPHEREPACK_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()

nearest_signed = _impl.nearest_signed
nearest_unsigned = _impl.nearest_unsigned
any_sphere_contains = _impl.any_sphere_contains
point_losses = _impl.point_losses
ray_parity = _impl.ray_parity
