"""Elastic dislocations in two dimensions: transmission-problem solver,
corner probes built on complex geometrical optics solutions, edge
dimension reduction and boundary-data fault reconstruction."""

from .elastostatics import (JumpData, LameParams, SegmentJump, Trace, TransmissionSolver,
                            solve_direct)
from .geometry import DomainPolygon, FaultGeometry, close_open_fault, corner_frame_of
from .mesh import build_mesh

__all__ = [
    "DomainPolygon", "FaultGeometry", "JumpData", "LameParams", "SegmentJump", "Trace",
    "TransmissionSolver", "build_mesh", "close_open_fault", "corner_frame_of", "solve_direct",
]
