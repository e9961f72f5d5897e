"""
Unit tests for trajectory type prediction and observation
"""

import numpy as np
import pytest

from app.errors import OutOfRangeError
from app.models import (
    Branch,
    InitialSpec,
    IntegratorSettings,
    PredictionBasis,
    SimilarityVerdict,
    TrajectoryType,
    TrilinearPoint,
)
from app.services.classification import branch_of
from tests.conftest import R_MINUS, R_PLUS, U_MINUS, U_PLUS


def _point(R, gamma=1):
    return TrilinearPoint(x1=R[0], x2=R[1], x3=R[2], gamma=gamma)


class TestPredict:
    """Tests for the position-based type prediction"""

    @pytest.mark.parametrize(
        "R,expected,basis",
        [
            (R_MINUS, TrajectoryType.TYPE_I, PredictionBasis.BELOW_CURVE),
            (R_PLUS, TrajectoryType.TYPE_II, PredictionBasis.ABOVE_CURVE_S4),
            (U_MINUS, TrajectoryType.TYPE_I, PredictionBasis.BELOW_CURVE),
            (U_PLUS, TrajectoryType.TYPE_III, PredictionBasis.ABOVE_CURVE_S5),
        ],
    )
    def test_reference_points(self, classification_service, strengths, R, expected, basis):
        """The four reference starts get their tabulated types"""
        prediction = classification_service.predict(_point(R), strengths)
        assert prediction.type == expected
        assert prediction.basis == basis
        assert prediction.branch_start == Branch.EQ5

    def test_on_curve(self, classification_service, geometry_service, strengths):
        """A point of the critical curve is reported as on-curve"""
        prediction = classification_service.predict(geometry_service.curve_point(0.4, strengths), strengths)
        assert prediction.type == TrajectoryType.ON_CURVE
        assert prediction.branch_start == Branch.Q4E

    @pytest.mark.parametrize("R", [(0.45, 0.45, 0.1), (0.05, 0.45, 0.5)])
    def test_outside_strip_is_periodic(self, classification_service, strengths, R):
        """Ibar outside (I5, 1) means a closed level curve"""
        prediction = classification_service.predict(_point(R), strengths)
        assert prediction.type == TrajectoryType.PERIODIC
        assert prediction.basis == PredictionBasis.OUTSIDE_STRIP

    @pytest.mark.parametrize(
        "caly,expected,basis",
        [
            (-0.005, TrajectoryType.TYPE_I, PredictionBasis.BELOW_CURVE),
            (0.005, TrajectoryType.TYPE_II, PredictionBasis.ABOVE_CURVE_S4),
        ],
    )
    def test_clockwise_start_beside_contracting_branch(
        self, classification_service, initial_condition_service, strengths, caly, expected, basis
    ):
        """Clockwise starts beside E*Q4 depart as type I below and type II above"""
        x = initial_condition_service.point_at_offset(0.70, caly, strengths, gamma=-1)
        prediction = classification_service.predict(x, strengths)
        assert prediction.type == expected
        assert prediction.basis == basis
        assert prediction.branch_start == Branch.E_STAR_Q4

    @pytest.mark.parametrize("R", [R_MINUS, R_PLUS, U_MINUS, U_PLUS])
    def test_clockwise_start_beside_expanding_branch(self, classification_service, strengths, R):
        """Mirror images of the reference starts sit beside E*Q5 and go straight to it"""
        prediction = classification_service.predict(_point(R, gamma=-1), strengths)
        assert prediction.type == TrajectoryType.DIRECT
        assert prediction.basis == PredictionBasis.NEAR_EXPANDING
        assert prediction.branch_start == Branch.E_STAR_Q5

    def test_counterclockwise_start_beside_q4e(self, classification_service, initial_condition_service, strengths):
        """A counterclockwise start on the Q4E side is direct whatever the sign of calY"""
        for caly in (-0.005, 0.005):
            x = initial_condition_service.point_at_offset(0.70, caly, strengths, gamma=-1)
            prediction = classification_service.predict(x.model_copy(update={"gamma": 1}), strengths)
            assert prediction.type == TrajectoryType.DIRECT
            assert prediction.branch_start == Branch.Q4E

    def test_clockwise_below_i4_is_never_type_iii(self, classification_service, geometry_service, strengths):
        """Clockwise starts on the x1 > x2 side with Ibar below I4 have no contracting branch to leave"""
        bounds = geometry_service.strip_bounds(strengths)
        x = _point((0.37, 0.25, 0.38), gamma=-1)
        ibar = geometry_service.ibar(x, strengths)
        assert bounds.I5 < ibar < bounds.I4
        prediction = classification_service.predict(x, strengths)
        assert prediction.type == TrajectoryType.DIRECT
        assert prediction.basis == PredictionBasis.BELOW_I4_CLOCKWISE

    def test_reports_invariants(self, classification_service, strengths):
        """The prediction carries the start's calY and Ibar"""
        prediction = classification_service.predict(_point(R_MINUS), strengths)
        assert prediction.caly == pytest.approx(-0.00498, abs=1e-5)
        assert prediction.ibar == pytest.approx(0.68503, abs=1e-5)


class TestClockwiseRuns:
    """Prediction against observation for clockwise starts"""

    @pytest.mark.parametrize(
        "ibar,caly,expected,crossings,final_gamma",
        [
            (0.70, -0.005, TrajectoryType.TYPE_I, 1, 1),
            (0.70, 0.005, TrajectoryType.TYPE_II, 0, -1),
        ],
    )
    def test_departures_from_e_star_q4(
        self, experiment_service, initial_condition_service, strengths, ibar, caly, expected, crossings, final_gamma
    ):
        """Starts beside E*Q4 show the predicted type and end on an expanding branch"""
        x = initial_condition_service.point_at_offset(ibar, caly, strengths, gamma=-1)
        summary, _ = experiment_service.run(initial_condition_service.spec_from_point(x, strengths))
        assert summary.prediction.type == expected
        assert summary.report.converged
        assert summary.report.observed_type == expected
        assert len(summary.report.crossings) == crossings
        assert summary.report.final_gamma == final_gamma
        final = summary.report.final_point
        assert (final.x1 - final.x2) * final_gamma > 0

    @pytest.mark.parametrize("ibar,caly", [(0.40, 0.005), (0.40, -0.005), (0.70, -0.005)])
    def test_starts_beside_e_star_q5_are_direct(
        self, experiment_service, initial_condition_service, strengths, ibar, caly
    ):
        """Clockwise starts on the x1 < x2 side converge on E*Q5 without crossing an edge"""
        x = initial_condition_service.point_at_offset(ibar, caly, strengths).model_copy(update={"gamma": -1})
        summary, _ = experiment_service.run(initial_condition_service.spec_from_point(x, strengths))
        assert summary.prediction.type == TrajectoryType.DIRECT
        assert summary.report.converged
        assert summary.report.observed_type == TrajectoryType.DIRECT
        assert summary.report.crossings == []
        assert summary.report.final_branch == Branch.E_STAR_Q5

    def test_clockwise_offset_needs_ibar_above_i4(self, initial_condition_service, strengths):
        """E*Q4 carries no Ibar level below I4"""
        with pytest.raises(OutOfRangeError):
            initial_condition_service.point_at_offset(0.40, 0.005, strengths, gamma=-1)


class TestBranchOf:
    def test_branches(self):
        """Side of E and orientation pick the branch"""
        assert branch_of(_point((0.4, 0.3, 0.3)), 1) == Branch.Q4E
        assert branch_of(_point((0.3, 0.4, 0.3)), 1) == Branch.EQ5
        assert branch_of(_point((0.4, 0.3, 0.3)), -1) == Branch.E_STAR_Q4
        assert branch_of(_point((0.3, 0.4, 0.3)), -1) == Branch.E_STAR_Q5
        assert branch_of(_point((0.35, 0.35, 0.3)), 1) is None


class TestCountExtrema:
    @pytest.mark.parametrize(
        "values,expected",
        [
            ([0.0, 1.0, 2.0, 3.0], 0),
            ([0.0, 1.0, 0.0], 1),
            ([0.0, 1.0, 0.0, 1.0, 0.0], 3),
            ([0.0, 1.0, 1.0, 0.0], 1),
            ([0.0, 1.0, 1.0 + 1e-15, 0.5], 1),
        ],
    )
    def test_counts(self, classification_service, values, expected):
        """Plateaus and rounding noise do not add extrema"""
        assert classification_service.count_extrema(np.array(values)) == expected


class TestSimilarityCheck:
    """Tests for comparing start and converged points"""

    def test_flip_and_close_is_similar(self, classification_service):
        """A flipped orientation with a close shape is similar"""
        result = classification_service.similarity_check(
            _point((0.18, 0.44, 0.38)), _point((0.185, 0.44, 0.375), gamma=-1)
        )
        assert result.verdict == SimilarityVerdict.SIMILAR_WITH_FLIP
        assert result.distance == pytest.approx(0.005, abs=1e-12)

    def test_flip_and_far_is_dissimilar(self, classification_service):
        """A flipped orientation with a different shape is dissimilar"""
        result = classification_service.similarity_check(_point((0.18, 0.44, 0.38)), _point((0.4, 0.28, 0.32), gamma=-1))
        assert result.verdict == SimilarityVerdict.DISSIMILAR

    def test_identical_without_flip_is_dissimilar(self, classification_service):
        """Similarity requires the orientation flip"""
        result = classification_service.similarity_check(_point(R_MINUS), _point(R_MINUS))
        assert result.verdict == SimilarityVerdict.DISSIMILAR
        assert result.distance == 0.0

    def test_threshold_override(self, classification_service):
        """An explicit threshold replaces the configured one"""
        result = classification_service.similarity_check(
            _point((0.18, 0.44, 0.38)), _point((0.185, 0.44, 0.375), gamma=-1), threshold=0.001
        )
        assert result.verdict == SimilarityVerdict.DISSIMILAR


class TestObserve:
    def test_short_run_is_unclassified(
        self, classification_service, dynamics_service, initial_condition_service, strengths
    ):
        """A run stopped before its edge crossing has no type yet"""
        state = initial_condition_service.positions_from_config(InitialSpec(R=R_MINUS, gamma=1, k=strengths))
        record = dynamics_service.integrate(state, strengths, IntegratorSettings(t_max=0.05))
        report = classification_service.observe(record, strengths)
        assert not report.converged
        assert report.t_conv is None
        assert report.initial_caly_sign == -1
        assert report.crossings == []
        assert report.observed_type == TrajectoryType.UNCLASSIFIED
        assert report.final_gamma == 1

    def test_unconverged_run_is_never_direct(
        self, classification_service, dynamics_service, initial_condition_service, strengths
    ):
        """Ending on the start's side of E does not make an unfinished run direct"""
        state = initial_condition_service.positions_from_config(InitialSpec(R=R_MINUS, gamma=1, k=strengths))
        record = dynamics_service.integrate(state, strengths, IntegratorSettings(t_max=0.05))
        report = classification_service.observe(record, strengths)
        assert report.final_branch == Branch.EQ5
        assert report.observed_type != TrajectoryType.DIRECT
