"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when
``ADS_ILFO_PURE_PYTHON`` is set to a non-empty value other than ``0``,
the numpy implementations are used. ``BACKEND`` names the active one.
"""

import os

from . import _pykernels

_force_python = os.environ.get("ADS_ILFO_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

lis_length = _impl.lis_length
prefix_nn_indices = _impl.prefix_nn_indices
prefix_alignment = _impl.prefix_alignment
sinkhorn_potentials = _impl.sinkhorn_potentials

plan_from_potentials = _pykernels.plan_from_potentials
round_to_marginals = _pykernels.round_to_marginals


def backends():
    """Mapping of available backend name -> kernel module."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        return out
    out["compiled"] = _ckernels
    return out
