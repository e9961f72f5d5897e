"""
Shared fixtures for the simulator tests
"""

import pytest

from app.models import TrilinearPoint
from app.services import (
    ClassificationService,
    CoreService,
    DynamicsService,
    ExperimentService,
    ExportService,
    GeometryService,
    InitialConditionService,
)

R_MINUS = (0.18195, 0.44396, 0.37409)
R_PLUS = (0.19108, 0.43424, 0.37468)
U_MINUS = (0.10442, 0.49225, 0.40333)
U_PLUS = (0.10839, 0.48643, 0.40518)


@pytest.fixture
def core_service():
    return CoreService()


@pytest.fixture
def geometry_service():
    return GeometryService()


@pytest.fixture
def dynamics_service():
    return DynamicsService()


@pytest.fixture
def initial_condition_service():
    return InitialConditionService()


@pytest.fixture
def classification_service():
    return ClassificationService()


@pytest.fixture
def export_service():
    return ExportService()


@pytest.fixture
def experiment_service():
    return ExperimentService()


@pytest.fixture
def strengths(core_service):
    """k = (2, 1, -2/3)"""
    return core_service.parabolic_strengths(2.0, 1.0)


@pytest.fixture
def symmetric_strengths(core_service):
    """k = (1, 1, -1/2)"""
    return core_service.parabolic_strengths(1.0, 1.0)


@pytest.fixture
def r_minus():
    return TrilinearPoint(x1=R_MINUS[0], x2=R_MINUS[1], x3=R_MINUS[2], gamma=1)


@pytest.fixture
def u_plus():
    return TrilinearPoint(x1=U_PLUS[0], x2=U_PLUS[1], x3=U_PLUS[2], gamma=1)
