"""Melt-pool depth control for laser powder bed fusion.

A fast conduction simulator built on stored line solutions, scan-path
generation, melt-depth extraction, an episodic control environment and a
self-contained PPO trainer.
"""

from .params import (
    BoundaryCondition,
    FaceRule,
    GridSpec,
    LaserParams,
    MaterialParams,
    adiabatic,
    all_adiabatic,
    fixed,
    thermal_diffusivity,
)
from .thermal import (
    DiffusionKernel,
    LineSolution,
    LineSolutionCache,
    TemperatureField,
    ThermalSimulator,
    advance,
    build_diffusion_kernel,
    build_line_solution,
    diffuse,
    excess_enthalpy,
    orient_and_add,
)

__version__ = "0.1.0"
