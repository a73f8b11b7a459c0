"""Pixel-adaptive deblurring toolkit.

Linearized global/cross attention, pixel-dependent deformable filtering,
reinforcement-learned non-uniform sampling, and a 3-stage multi-patch
restoration network, all on a small numpy-backed autograd engine.
"""

from .autograd import Tensor, finite_difference_check, no_grad

__version__ = "0.1.0"

__all__ = ["Tensor", "finite_difference_check", "no_grad", "__version__"]
