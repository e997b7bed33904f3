"""Matching-kernel backend selection.

The compiled Cython extension is preferred when importable; the pure numpy
reference is the fallback. Set ``CHROMM_KERNELS=python`` to force the
fallback or ``CHROMM_KERNELS=compiled`` to require the extension.
"""

import os

from . import reference

_choice = os.environ.get("CHROMM_KERNELS", "auto").lower()

if _choice in ("python", "py", "reference"):
    _impl = reference
elif _choice in ("compiled", "native", "cython"):
    from . import _native as _impl  # noqa: F401  (ImportError is the contract)
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = reference

BACKEND = _impl.BACKEND_NAME
token_distance_matrix = _impl.token_distance_matrix
sinkhorn_plan = _impl.sinkhorn_plan
solve_assignment = _impl.solve_assignment
joint_pair_cost = _impl.joint_pair_cost
mean_displacement = _impl.mean_displacement

__all__ = [
    "BACKEND",
    "token_distance_matrix",
    "sinkhorn_plan",
    "solve_assignment",
    "joint_pair_cost",
    "mean_displacement",
]
