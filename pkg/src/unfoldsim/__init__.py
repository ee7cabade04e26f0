"""Backbone geometry, damped unfolding dynamics and flow-matching targets."""

from .errors import UnfoldError
from .geometry import (
    AngularChain,
    BackboneCoords,
    Frame,
    IdealGeometry,
    Rotation,
    extract_angles,
    nerf_reconstruct,
)
from .dynamics import PotentialParams, SimConfig, Trajectory, simulate, simulate_cartesian

__all__ = [
    "AngularChain",
    "BackboneCoords",
    "Frame",
    "IdealGeometry",
    "PotentialParams",
    "Rotation",
    "SimConfig",
    "Trajectory",
    "UnfoldError",
    "extract_angles",
    "nerf_reconstruct",
    "simulate",
    "simulate_cartesian",
]

__version__ = "0.1.0"
