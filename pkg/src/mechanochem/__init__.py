"""Two-layer mechanochemical simulator.

Mixed MINI-element linear elasticity coupled to advection-diffusion-reaction
species transport on a dermis/epidermis bilayer, solved per subdomain with a
non-overlapping Robin-Schwarz iteration and advanced in time by an adaptive
TR-BDF2 (embedded RK23) integrator.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401

from .coupler import BilayerCoupler, BilayerSystem  # noqa: F401
from .integrator import ControllerParams, TrBdf2Stepper, tableau  # noqa: F401
from .kinetics import (CrossDiffusion, GMParams, GiererMeinhardt,  # noqa: F401
                       Skin4Params, SkinFourSpecies, gm_steady_state)
from .mesh import Mesh2D, InterfaceMap, build_bilayer, read_mesh  # noqa: F401
from .scenario import ScenarioConfig, load_config  # noqa: F401
