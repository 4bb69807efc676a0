"""High-order flux reconstruction for the compressible Euler and Navier-Stokes
equations with three anti-aliasing strategies: over-integration, exponential
modal filtering and an entropy-bounded adaptive filter."""

__version__ = "0.1.0"

from .antialias import AntialiasConfig, modal_filter, oi_project_flux  # noqa: E402
from .basis import reference_element  # noqa: E402
from .fr_core import FRDiscretization, SolutionState  # noqa: E402
from .mesh import Mesh, build_cartesian, load_mesh  # noqa: E402
from .physics import GasModel  # noqa: E402
from .timeint import BlowupError, run  # noqa: E402

__all__ = [
    "AntialiasConfig", "BlowupError", "FRDiscretization", "GasModel", "Mesh",
    "SolutionState", "build_cartesian", "load_mesh", "modal_filter", "oi_project_flux",
    "reference_element", "run",
]
