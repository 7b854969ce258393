"""Homodyne-monitored quantum Stuart-Landau oscillator toolkit.

Simulates phase synchronization of a driven, squeezed quantum
Stuart-Landau oscillator under continuous homodyne measurement:
stochastic master equation trajectories, unconditioned steady states,
phase-coherence and purity metrics, and parameter-sweep presets with a
CSV/SVG command-line front end.
"""

__version__ = "0.1.0"

from .fock import FockSpace, Operator, DensityMatrix
from .model import ModelParams
from .trajectory import SdeConfig, TrajectoryResult, EnsembleResult

__all__ = [
    "FockSpace",
    "Operator",
    "DensityMatrix",
    "ModelParams",
    "SdeConfig",
    "TrajectoryResult",
    "EnsembleResult",
    "__version__",
]
