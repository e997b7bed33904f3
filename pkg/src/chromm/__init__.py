"""Test-time multi-person multi-view human-scene reconstruction pipeline.

Stages: per-view tracking (token matching with an optimal-transport dustbin),
cross-view identity association (geometric matching cost + exact assignment),
multi-view fusion (parameter averaging, quaternion rotation mean, head ray
triangulation), head-pelvis scale adjustment, chunk stitching, and the
world-space pose metrics used to evaluate all of it against a built-in
synthetic ground-truth generator.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
