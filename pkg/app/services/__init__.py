"""
Simulation Services
"""

from .core import CoreService
from .geometry import GeometryService
from .dynamics import DynamicsService
from .initial_conditions import InitialConditionService
from .classification import ClassificationService
from .export import ExportService
from .experiments import ExperimentService

__all__ = [
    "CoreService",
    "GeometryService",
    "DynamicsService",
    "InitialConditionService",
    "ClassificationService",
    "ExportService",
    "ExperimentService",
]
