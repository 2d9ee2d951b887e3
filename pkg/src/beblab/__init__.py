"""beblab: numerical laboratory for boundary-equilibrium bifurcations of
three-dimensional piecewise-linear continuous flows.

Exact flows of the two affine pieces, a virtual-intersection return map on a
Poincare section, its one-dimensional reduction, and bifurcation sweeps.  Hot
kernels run in a compiled extension when built; a pure-Python twin is
selected automatically otherwise (see ``backend_info``).
"""
from ._backend import BACKEND_NAME, compiled_available
from .system import SystemParams

__version__ = "0.1.0"

__all__ = ["SystemParams", "backend_info", "__version__"]


def backend_info() -> dict:
    """Which kernel backend is active."""
    return {
        "backend": BACKEND_NAME,
        "compiled_available": compiled_available(),
        "version": __version__,
    }
