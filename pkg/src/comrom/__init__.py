"""Component-based reduced-order modeling for nonlinear heat conduction.

The package trains a library of multi-fidelity hyperreduced components
offline and, online, assembles arbitrary component topologies whose
per-component fidelities are selected adaptively to meet a prescribed
system-level error tolerance.
"""

__version__ = "0.1.0"

from .materials import AluminumConductivity, ConstantConductivity
from .quadrature import triangle_rule, truth_quadrature

__all__ = [
    "AluminumConductivity",
    "ConstantConductivity",
    "triangle_rule",
    "truth_quadrature",
    "__version__",
]
