"""Contour dynamics and numerical verification for patches transported by
odd kernels that are homogeneous of degree -1."""

__version__ = "0.1.0"

from .curve import Curve, CurveError, SelfIntersectionError, area, preset_shape  # noqa: E402
from .kernel import KernelSpec, biot_savart, combination, grad_N  # noqa: E402
from .velocity import boundary_velocity, velocity_on_markers  # noqa: E402

__all__ = [
    "Curve",
    "CurveError",
    "KernelSpec",
    "SelfIntersectionError",
    "__version__",
    "area",
    "biot_savart",
    "boundary_velocity",
    "combination",
    "grad_N",
    "preset_shape",
    "velocity_on_markers",
]
