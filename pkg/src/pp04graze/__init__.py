"""Grazing bifurcations in a forced three-variable Filippov glacial model.

The system switches between two affine vector fields across the plane
``F(X) = 0``; the forcing is a sum of sinusoids. Segments between switching
events are propagated in closed form.
"""
from .errors import PP04Error
from .model import Forcing, ForcingTerm, ModelParams, Region, build_system

__version__ = "0.1.0"

__all__ = ["Forcing", "ForcingTerm", "ModelParams", "PP04Error", "Region", "build_system",
           "__version__"]
