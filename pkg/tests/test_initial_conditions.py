"""
Unit tests for start-configuration construction
"""

import numpy as np
import pytest

from app.errors import OutOfRangeError
from app.models import InitialSpec, TrilinearPoint
from tests.conftest import R_MINUS, U_PLUS


class TestPositionsFromConfig:
    """Tests for placing vortices from side lengths"""

    @pytest.mark.parametrize("gamma", [1, -1])
    def test_reproduces_sides_and_orientation(self, initial_condition_service, core_service, strengths, gamma):
        """The placed vortices have the requested sides and orientation"""
        state = initial_condition_service.positions_from_config(InitialSpec(R=R_MINUS, gamma=gamma, k=strengths))
        config = core_service.configuration_of(state)
        assert config.sides() == pytest.approx(R_MINUS, abs=1e-12)
        assert config.gamma == gamma
        assert state.t == 0.0

    def test_layout(self, initial_condition_service, strengths):
        """z1 above z2 on a vertical line, z3 to their right"""
        state = initial_condition_service.positions_from_config(InitialSpec(R=R_MINUS, gamma=1, k=strengths))
        assert state.z1.real == pytest.approx(state.z2.real, abs=1e-15)
        assert state.z1.imag > state.z2.imag
        assert state.z3.real > state.z1.real
        assert state.z2.imag == pytest.approx(-0.32983, abs=1e-5)

    def test_vorticity_center_at_origin(self, initial_condition_service, strengths):
        """Strength-weighted positions sum to zero"""
        state = initial_condition_service.positions_from_config(InitialSpec(R=R_MINUS, gamma=1, k=strengths))
        center = np.dot(strengths.as_tuple(), state.positions())
        assert abs(center) < 1e-14

    def test_reflection_for_clockwise_start(self, initial_condition_service, strengths):
        """gamma = -1 is the mirror image in the real axis"""
        upper = initial_condition_service.positions_from_config(InitialSpec(R=R_MINUS, gamma=1, k=strengths))
        lower = initial_condition_service.positions_from_config(InitialSpec(R=R_MINUS, gamma=-1, k=strengths))
        assert np.allclose(np.conj(upper.positions()), lower.positions(), atol=1e-15)

    def test_unit_perimeter_required(self, strengths):
        """Side lengths must sum to one"""
        with pytest.raises(ValueError):
            InitialSpec(R=(0.2, 0.4, 0.41), gamma=1, k=strengths)


class TestPointAtOffset:
    """Tests for solving a start point from (Ibar, calY)"""

    def test_recovers_reference_point(self, initial_condition_service, geometry_service, strengths, r_minus):
        """Solving for r-'s own Ibar and calY returns r-"""
        ibar = geometry_service.ibar(r_minus, strengths)
        caly = geometry_service.cal_Y(r_minus, strengths)
        point = initial_condition_service.point_at_offset(ibar, caly, strengths)
        assert point.as_tuple() == pytest.approx(r_minus.as_tuple(), abs=1e-8)

    def test_targets_met(self, initial_condition_service, geometry_service, strengths):
        """The solved point meets both targets"""
        point = initial_condition_service.point_at_offset(0.6, 0.004, strengths)
        assert geometry_service.ibar(point, strengths) == pytest.approx(0.6, abs=1e-11)
        assert geometry_service.cal_Y(point, strengths) == pytest.approx(0.004, abs=1e-11)
        assert sum(point.as_tuple()) == pytest.approx(1.0, abs=1e-15)

    def test_table_values_land_near_reference_points(self, initial_condition_service, strengths, r_minus, u_plus):
        """The tabulated (Ibar, calY) pairs give the tabulated starts"""
        below = initial_condition_service.point_at_offset(0.685, -0.005, strengths)
        above = initial_condition_service.point_at_offset(0.3856, 0.005, strengths)
        assert below.as_tuple() == pytest.approx(r_minus.as_tuple(), abs=5e-4)
        assert above.as_tuple() == pytest.approx(u_plus.as_tuple(), abs=5e-4)

    def test_zero_offset_lands_on_curve(self, initial_condition_service, geometry_service, strengths):
        """A zero offset returns the EQ5 point"""
        point = initial_condition_service.point_at_offset(0.7, 0.0, strengths)
        assert abs(geometry_service.cal_Y(point, strengths)) < 1e-12
        assert point.x1 < point.x2

    def test_orientation_attached(self, initial_condition_service, geometry_service, strengths):
        """A clockwise request is solved beside E*Q4"""
        point = initial_condition_service.point_at_offset(0.7, 0.001, strengths, gamma=-1)
        assert point.gamma == -1
        assert point.x1 > point.x2
        assert geometry_service.ibar(point, strengths) == pytest.approx(0.7, abs=1e-11)
        assert geometry_service.cal_Y(point, strengths) == pytest.approx(0.001, abs=1e-11)

    @pytest.mark.parametrize("ibar", [0.2, 1.0, 1.3])
    def test_outside_strip_rejected(self, initial_condition_service, strengths, ibar):
        """Ibar levels outside (I5, 1) are rejected"""
        with pytest.raises(OutOfRangeError):
            initial_condition_service.point_at_offset(ibar, 0.001, strengths)

    def test_locally_injective(self, initial_condition_service, strengths):
        """Different targets give different points"""
        first = initial_condition_service.point_at_offset(0.7, 0.003, strengths)
        second = initial_condition_service.point_at_offset(0.7, 0.004, strengths)
        third = initial_condition_service.point_at_offset(0.71, 0.003, strengths)
        assert max(abs(a - b) for a, b in zip(first.as_tuple(), second.as_tuple())) > 1e-5
        assert max(abs(a - b) for a, b in zip(first.as_tuple(), third.as_tuple())) > 1e-5


class TestSpecFromPoint:
    def test_unit_perimeter_spec(self, initial_condition_service, strengths):
        """A trilinear point is already a unit-perimeter start"""
        x = TrilinearPoint(x1=U_PLUS[0], x2=U_PLUS[1], x3=U_PLUS[2], gamma=-1)
        spec = initial_condition_service.spec_from_point(x, strengths)
        assert spec.R == x.as_tuple()
        assert spec.gamma == -1
