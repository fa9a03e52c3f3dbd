"""Numerical converse KAM test for 3D volume-preserving flows."""

from .core import State, det3, dot3, wrap
from .detector import DetectionResult, DetectorOptions, Status, detect, interpolate_crossing
from .foliations import Foliation
from .integrator import CombinedState, StepControl, StiffnessError
from .models import QFlowModel, QFlowParams, TwoWaveModel, TwoWaveParams

__version__ = "0.1.0"

__all__ = [
    "CombinedState",
    "DetectionResult",
    "DetectorOptions",
    "Foliation",
    "QFlowModel",
    "QFlowParams",
    "State",
    "Status",
    "StepControl",
    "StiffnessError",
    "TwoWaveModel",
    "TwoWaveParams",
    "det3",
    "detect",
    "dot3",
    "interpolate_crossing",
    "wrap",
]
