"""Monte Carlo engines and verification tools for contact dynamics on a stirring particle system.

Subpackages cover the finite lattice geometry, Poisson mark sampling
(graphical construction), the stirring flow and its estimators, the
infection process with two equivalent engines, branching random walks,
domination couplings, multiscale box arithmetic, and replica orchestration.
"""

from stircp.lattice import Geometry, BoundaryMode
from stircp.marks import Rates, MarkSet, sample_marks
from stircp.mc import Estimate

SCHEMA_VERSION = 1

__all__ = [
    "Geometry",
    "BoundaryMode",
    "Rates",
    "MarkSet",
    "sample_marks",
    "Estimate",
    "SCHEMA_VERSION",
]
