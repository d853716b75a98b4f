"""Far-field asymptotics of Navier-Stokes flows from compactly supported data."""

__version__ = "0.1.0"

from .core import BACKEND  # noqa: E402
from .fields import GridSpec, VectorField  # noqa: E402
from .kernels import KernelIndex, eval_F, eval_Psi  # noqa: E402
from .profile import AsymptoticProfile, exceptional_directions_2d, eval_gradPi  # noqa: E402
from .solver import InitialDataSpec, make_initial_data, solve_mild  # noqa: E402

__all__ = ["BACKEND", "GridSpec", "VectorField", "KernelIndex", "eval_F", "eval_Psi",
           "AsymptoticProfile", "exceptional_directions_2d", "eval_gradPi",
           "InitialDataSpec", "make_initial_data", "solve_mild", "__version__"]
