"""
Trajectory Classification Service

This service determines:
- The expected departure type from a start point's position (predict)
- The type a finished trajectory actually showed (observe)
- Whether the converged point is the orientation image of the start (similarity)
"""

from typing import Optional

import numpy as np
import structlog

from app.config import get_settings
from app.models import (
    Branch,
    ConvergenceReport,
    PredictionBasis,
    SimilarityResult,
    SimilarityVerdict,
    TrajectoryRecord,
    TrajectoryType,
    TrilinearPoint,
    TypePrediction,
    VortexStrengths,
)
from app.services.geometry import GeometryService

logger = structlog.get_logger(__name__)
settings = get_settings()

ON_CURVE_TOL = 1e-10
EXTREMUM_NOISE = 1e-12

# (initial sign of calY, number of edge crossings) -> type
OBSERVED_PATTERNS = {
    (-1, 1): TrajectoryType.TYPE_I,
    (1, 0): TrajectoryType.TYPE_II,
    (1, 1): TrajectoryType.TYPE_III,
}


def branch_of(x: TrilinearPoint, gamma: int) -> Optional[Branch]:
    """Critical-curve branch on the side of E the point lies"""
    if x.x1 == x.x2:
        return None
    if gamma >= 0:
        return Branch.Q4E if x.x1 > x.x2 else Branch.EQ5
    return Branch.E_STAR_Q4 if x.x1 > x.x2 else Branch.E_STAR_Q5


class ClassificationService:
    """Service for predicting and observing trajectory types"""

    def __init__(self):
        self.settings = settings
        self.geometry = GeometryService()

    def predict(self, x: TrilinearPoint, strengths: VortexStrengths) -> TypePrediction:
        """
        Expected type from the start point's side, Ibar and calY

        Starts beside an expanding branch (sign(x1 - x2) * gamma > 0) are
        drawn straight to it. Clockwise starts beside E*Q4 have Ibar above I4,
        so they depart as type I or II only.

        Args:
            x: Start point with orientation
            strengths: Parabolic strengths

        Returns:
            TypePrediction with type, basis and the branch the start lies beside
        """
        caly = self.geometry.cal_Y(x, strengths)
        ibar = self.geometry.ibar(x, strengths)
        bounds = self.geometry.strip_bounds(strengths)
        gamma = x.gamma or 1
        branch = branch_of(x, gamma)

        if abs(caly) < ON_CURVE_TOL:
            kind, basis = TrajectoryType.ON_CURVE, PredictionBasis.ON_CURVE
        elif not (bounds.lower < ibar < bounds.upper):
            kind, basis = TrajectoryType.PERIODIC, PredictionBasis.OUTSIDE_STRIP
        elif (x.x1 - x.x2) * gamma > 0:
            kind, basis = TrajectoryType.DIRECT, PredictionBasis.NEAR_EXPANDING
        elif gamma < 0 and ibar <= bounds.I4:
            kind, basis = TrajectoryType.DIRECT, PredictionBasis.BELOW_I4_CLOCKWISE
        elif caly < 0:
            kind, basis = TrajectoryType.TYPE_I, PredictionBasis.BELOW_CURVE
        elif ibar > bounds.I4:
            kind, basis = TrajectoryType.TYPE_II, PredictionBasis.ABOVE_CURVE_S4
        else:
            kind, basis = TrajectoryType.TYPE_III, PredictionBasis.ABOVE_CURVE_S5

        return TypePrediction(type=kind, basis=basis, branch_start=branch, ibar=ibar, caly=caly)

    def observe(
        self,
        record: TrajectoryRecord,
        strengths: VortexStrengths,
        tol_conv: Optional[float] = None,
    ) -> ConvergenceReport:
        """
        Type shown by a finished trajectory

        Converged once |calY| stays below tol_conv and is nonincreasing over the
        trailing window; the type follows the initial sign of calY and the
        number of edge crossings. A converged run that never crossed an edge
        and ends on the branch it started beside is direct.

        Args:
            record: Finished integration
            strengths: Vortex strengths
            tol_conv: Convergence tolerance, default from configuration

        Returns:
            ConvergenceReport
        """
        tol_conv = self.settings.convergence_tol if tol_conv is None else tol_conv
        window = self.settings.convergence_window
        caly = np.array([sample.caly for sample in record.samples])
        magnitude = np.abs(caly)

        end = None
        for stop in range(window, len(caly) + 1):
            tail = magnitude[stop - window:stop]
            if np.all(tail < tol_conv) and np.all(np.diff(tail) <= 0):
                end = stop - 1
                break

        converged = end is not None
        last = end if converged else len(caly) - 1
        final = record.samples[last]
        crossings = [c for c in record.crossings if c.t_cross <= final.t]

        start = record.samples[0].x
        final_branch = branch_of(final.x, final.x.gamma)
        initial_sign = int(np.sign(caly[0])) if abs(caly[0]) >= ON_CURVE_TOL else 0
        if initial_sign == 0:
            observed = TrajectoryType.ON_CURVE
        elif converged and not crossings and final_branch == branch_of(start, start.gamma):
            observed = TrajectoryType.DIRECT
        else:
            observed = OBSERVED_PATTERNS.get((initial_sign, len(crossings)), TrajectoryType.UNCLASSIFIED)

        report = ConvergenceReport(
            converged=converged,
            t_conv=final.t if converged else None,
            final_point=final.x,
            final_branch=final_branch,
            crossings=crossings,
            caly_extrema_count=self.count_extrema(caly[: last + 1]),
            initial_caly_sign=initial_sign,
            final_gamma=final.x.gamma,
            observed_type=observed,
        )
        if not converged:
            logger.warning("trajectory_unconverged", t_end=final.t, caly=float(caly[-1]))
        return report

    @staticmethod
    def count_extrema(values: np.ndarray) -> int:
        """Interior extrema as sign changes of the first difference"""
        diffs = np.diff(values)
        signs = np.sign(diffs[np.abs(diffs) > EXTREMUM_NOISE])
        return int(np.count_nonzero(signs[1:] != signs[:-1]))

    def similarity_check(
        self,
        x_initial: TrilinearPoint,
        x_final: TrilinearPoint,
        threshold: Optional[float] = None,
    ) -> SimilarityResult:
        """
        Compare a start point with its converged point

        Args:
            x_initial: Start point
            x_final: Converged point
            threshold: Largest coordinate difference accepted as similar

        Returns:
            SimilarityResult with the verdict and the max-norm distance
        """
        threshold = self.settings.similarity_threshold if threshold is None else threshold
        distance = max(abs(a - b) for a, b in zip(x_initial.as_tuple(), x_final.as_tuple()))
        flipped = x_initial.gamma != x_final.gamma
        verdict = SimilarityVerdict.SIMILAR_WITH_FLIP if flipped and distance < threshold else SimilarityVerdict.DISSIMILAR
        return SimilarityResult(verdict=verdict, distance=distance)
