"""Element-kernel backend selection.

The hot assembly loops exist twice: a Cython extension (``_core``) and a pure
numpy implementation (``_fallback``) with identical signatures and results.
The compiled backend is preferred when it was built; setting the environment
variable ``MECHANOCHEM_PURE_PYTHON=1`` forces the fallback.  The active choice
is exposed as :data:`BACKEND`.
"""

import functools
import os

import numpy as np

from . import _fallback

if os.environ.get("MECHANOCHEM_PURE_PYTHON"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def _contiguous(fn):
    """Typed memoryviews need C-contiguous inputs; slices from callers may not be."""

    @functools.wraps(fn)
    def wrapped(*args):
        return fn(*(np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a
                    for a in args))

    return wrapped


if BACKEND == "cython":
    tri_geometry = _contiguous(_impl.tri_geometry)
    p1_mass = _contiguous(_impl.p1_mass)
    p1_stiffness = _contiguous(_impl.p1_stiffness)
    p1_mass_coeff = _contiguous(_impl.p1_mass_coeff)
    p1_advection = _contiguous(_impl.p1_advection)
    p1_load = _contiguous(_impl.p1_load)
    mini_elasticity = _contiguous(_impl.mini_elasticity)
else:
    tri_geometry = _impl.tri_geometry
    p1_mass = _impl.p1_mass
    p1_stiffness = _impl.p1_stiffness
    p1_mass_coeff = _impl.p1_mass_coeff
    p1_advection = _impl.p1_advection
    p1_load = _impl.p1_load
    mini_elasticity = _impl.mini_elasticity

bubble_grads_qp = _fallback.bubble_grads_qp  # small helper, numpy everywhere

__all__ = [
    "BACKEND", "tri_geometry", "p1_mass", "p1_stiffness", "p1_mass_coeff",
    "p1_advection", "p1_load", "mini_elasticity", "bubble_grads_qp",
]
