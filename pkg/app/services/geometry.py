"""
Trilinear Geometry Service

This service provides:
- Reduction of a configuration to trilinear coordinates and the alpha-beta map
- The critical curve (calY = 0) and its two branches through E
- Critical points Q4, Q5, Q6, S4 and the Ibar levels I4, I5, I6
- Slopes of the critical curve and of trajectories
- Constant-Ibar trajectories sampled inside the physical triangle
"""

import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy.optimize import bisect

from app.config import get_settings
from app.errors import (
    DivergentInvariantError,
    OffCurveDomainError,
    OutOfRangeError,
    UnsupportedStrengthsError,
)
from app.models import (
    AlphaBeta,
    Branch,
    Configuration,
    CriticalPoints,
    LevelCurvePoint,
    StripBounds,
    TrilinearPoint,
    VortexStrengths,
)
from app.services.core import CoreService, trilinear_invariant

logger = structlog.get_logger(__name__)
settings = get_settings()

SQRT3 = math.sqrt(3.0)
THIRD = 1.0 / 3.0
VERTICAL_SLOPE = math.inf
DOMAIN_TOL = 1e-12

_critical_cache: Dict[Tuple[float, float, float], CriticalPoints] = {}


class GeometryService:
    """Service for the trilinear phase plane of the parabolic problem"""

    def __init__(self):
        self.settings = settings
        self.core = CoreService()

    # ------------------------------------------------------------------
    # Coordinates
    # ------------------------------------------------------------------

    def reduce(self, config: Configuration) -> TrilinearPoint:
        """Normalise a configuration by its perimeter"""
        return TrilinearPoint(
            x1=config.R1 / config.p,
            x2=config.R2 / config.p,
            x3=config.R3 / config.p,
            gamma=config.gamma,
        )

    def to_alpha_beta(self, x: TrilinearPoint) -> AlphaBeta:
        return AlphaBeta(alpha=(x.x2 - x.x1) / SQRT3, beta=x.x3)

    def from_alpha_beta(self, ab: AlphaBeta, gamma: int = 1) -> TrilinearPoint:
        x1 = (1.0 - ab.beta - SQRT3 * ab.alpha) / 2.0
        return TrilinearPoint(x1=x1, x2=1.0 - ab.beta - x1, x3=ab.beta, gamma=gamma)

    # ------------------------------------------------------------------
    # Curve polynomials and the invariant
    # ------------------------------------------------------------------

    def cal_Y(self, x: TrilinearPoint, strengths: VortexStrengths) -> float:
        """calY = k2k3 x1^2 + k3k1 x2^2 + k1k2 x3^2, zero on the critical curve"""
        k1, k2, k3 = strengths.as_tuple()
        return k2 * k3 * x.x1 ** 2 + k3 * k1 * x.x2 ** 2 + k1 * k2 * x.x3 ** 2

    def Y(self, x: TrilinearPoint, strengths: VortexStrengths) -> float:
        """Y = -k2 x1^2 - k1 x2^2 + (k1+k2) x3^2, equal to -calY/k3 when K = 0"""
        k1, k2, _ = strengths.as_tuple()
        return -k2 * x.x1 ** 2 - k1 * x.x2 ** 2 + (k1 + k2) * x.x3 ** 2

    def ibar(self, x: TrilinearPoint, strengths: VortexStrengths) -> float:
        """
        Shape invariant Ibar

        Args:
            x: Trilinear point away from the vertices
            strengths: Vortex strengths

        Returns:
            x1^k2 x2^k1 / x3^(k1+k2) for parabolic strengths, the general
            K-weighted form otherwise
        """
        if min(x.x1, x.x2, x.x3) <= 0.0:
            raise DivergentInvariantError("Ibar diverges at a vertex", x=x.as_tuple())
        return trilinear_invariant(x.as_tuple(), strengths)

    def hyperbola_residual(self, ab: AlphaBeta, strengths: VortexStrengths) -> float:
        """Critical curve in alpha-beta form, equal to -4Y/(k1+k2)"""
        k1, k2, _ = strengths.as_tuple()
        mu = (k1 - k2) / (k1 + k2)
        a, b = ab.alpha, ab.beta
        return (
            3 * a * a
            - 2 * SQRT3 * mu * a * b
            - 3 * b * b
            + 2 * SQRT3 * mu * a
            - 2 * b
            + 1
        )

    # ------------------------------------------------------------------
    # Critical curve
    # ------------------------------------------------------------------

    def curve_domain(self, strengths: VortexStrengths) -> Tuple[float, float]:
        """x1 range covered by the critical curve inside the triangle"""
        q5 = self._landmarks(strengths)["Q5"]
        return (q5[0], 0.5)

    def curve_point(self, x1: float, strengths: VortexStrengths, gamma: int = 1) -> TrilinearPoint:
        """
        Point of the critical curve with the given x1

        Args:
            x1: First trilinear coordinate, between x1(Q5) and 1/2
            strengths: Parabolic strengths
            gamma: Orientation attached to the returned point

        Returns:
            TrilinearPoint with calY = 0
        """
        self._require_parabolic(strengths)
        lo, hi = self.curve_domain(strengths)
        if x1 < lo - DOMAIN_TOL or x1 > hi + DOMAIN_TOL:
            raise OffCurveDomainError("x1 outside the critical curve", x1=x1, lo=lo, hi=hi)
        x1 = min(max(x1, lo), hi)
        return self._curve_point(x1, strengths, gamma)

    def _curve_point(self, x1: float, strengths: VortexStrengths, gamma: int = 1) -> TrilinearPoint:
        k1, k2, _ = strengths.as_tuple()
        c = 1.0 - x1
        constant = k1 * c * c + k2 * x1 * x1
        # positive root of k2 x3^2 + 2 k1 c x3 - constant = 0, rationalised
        x3 = constant / (k1 * c + math.sqrt(k1 * k1 * c * c + k2 * constant))
        return TrilinearPoint(x1=x1, x2=1.0 - x1 - x3, x3=x3, gamma=gamma)

    def sample_curve(self, strengths: VortexStrengths, n: Optional[int] = None) -> List[TrilinearPoint]:
        """Critical curve sampled uniformly in x1 from Q5 to Q4"""
        n = n or self.settings.curve_samples
        lo, hi = self.curve_domain(strengths)
        return [self._curve_point(float(x1), strengths) for x1 in np.linspace(lo, hi, n)]

    def curve_at_ibar(
        self,
        target: float,
        strengths: VortexStrengths,
        branch: Branch = Branch.EQ5,
        gamma: int = 1,
    ) -> TrilinearPoint:
        """
        Point of one critical-curve branch carrying a given Ibar

        Args:
            target: Ibar level, in [I5, 1] for EQ5 or [I4, 1] for Q4E
            strengths: Parabolic strengths
            branch: EQ5 (x1 <= 1/3) or Q4E (x1 >= 1/3)
            gamma: Orientation attached to the returned point

        Returns:
            TrilinearPoint on the branch with Ibar = target
        """
        self._require_parabolic(strengths)
        marks = self._landmarks(strengths)
        if branch in (Branch.EQ5, Branch.E_STAR_Q5):
            lo, hi, floor = marks["Q5"][0], THIRD, marks["I5"]
        else:
            lo, hi, floor = THIRD, 0.5, marks["I4"]
        if not (floor - DOMAIN_TOL <= target <= 1.0 + DOMAIN_TOL):
            raise OutOfRangeError("Ibar level not reached on this branch", target=target, branch=branch.value)

        log_target = math.log(target)

        def residual(x1: float) -> float:
            return math.log(self.ibar(self._curve_point(x1, strengths), strengths)) - log_target

        f_lo, f_hi = residual(lo), residual(hi)
        if f_lo == 0.0 or f_hi == 0.0 or (f_lo > 0) == (f_hi > 0):
            # target sits on an end point up to rounding
            x1 = lo if abs(f_lo) <= abs(f_hi) else hi
        else:
            x1 = bisect(residual, lo, hi, xtol=1e-15, maxiter=200)
        return self._curve_point(x1, strengths, gamma)

    # ------------------------------------------------------------------
    # Critical points
    # ------------------------------------------------------------------

    def critical_points(self, strengths: VortexStrengths) -> CriticalPoints:
        """
        Landmarks of the parabolic phase portrait

        Args:
            strengths: Parabolic strengths

        Returns:
            CriticalPoints with E, Q4, Q5, Q6, S4, their heights and Ibar levels
        """
        self._require_parabolic(strengths)
        key = strengths.as_tuple()
        if key in _critical_cache:
            return _critical_cache[key]

        marks = self._landmarks(strengths)
        q4 = TrilinearPoint(x1=marks["Q4"][0], x2=marks["Q4"][1], x3=marks["Q4"][2])
        q5 = TrilinearPoint(x1=marks["Q5"][0], x2=marks["Q5"][1], x3=marks["Q5"][2])
        q6 = TrilinearPoint(x1=marks["Q6"][0], x2=marks["Q6"][1], x3=marks["Q6"][2])

        if marks["I4"] - marks["I5"] <= 1e-14:
            s4 = q5
        else:
            s4 = self.curve_at_ibar(marks["I4"], strengths, Branch.EQ5)

        points = CriticalPoints(
            E=TrilinearPoint(x1=THIRD, x2=THIRD, x3=1.0 - 2.0 * THIRD),
            Q4=q4,
            Q5=q5,
            Q6=q6,
            S4=s4,
            beta4=q4.x3,
            beta5=q5.x3,
            I4=marks["I4"],
            I5=marks["I5"],
            I6=self.ibar(q6, strengths),
            nu_roots=marks["nu"],
        )
        _critical_cache[key] = points
        logger.debug("critical_points", strengths=key, I4=points.I4, I5=points.I5)
        return points

    def _landmarks(self, strengths: VortexStrengths) -> dict:
        """Closed-form roots of the collinear cubic and the edge points they give"""
        self._require_parabolic(strengths)
        k1, k2, _ = strengths.as_tuple()
        q = math.sqrt(k1 * k1 + k1 * k2 + k2 * k2)
        nu6 = k1 / (k1 + k2)
        nu4 = (k2 - q) / (k1 + k2)
        nu5 = (k2 + q) / (k1 + k2)

        q4 = (0.5, -nu4 / (2.0 - 2.0 * nu4), 1.0 / (2.0 - 2.0 * nu4))
        q5 = ((nu5 - 1.0) / (2.0 * nu5), 0.5, 1.0 / (2.0 * nu5))
        q6 = ((1.0 - nu6) / 2.0, nu6 / 2.0, 0.5)
        return {
            "Q4": q4,
            "Q5": q5,
            "Q6": q6,
            "I4": trilinear_invariant(q4, strengths),
            "I5": trilinear_invariant(q5, strengths),
            "nu": (nu6, nu4, nu5),
        }

    def collinear_cubic(self, nu: float, strengths: VortexStrengths) -> float:
        """Cubic whose roots locate the collinear critical points"""
        k1, k2, k3 = strengths.as_tuple()
        return (k1 + k2) * nu ** 3 - (k1 + 2 * k2) * nu ** 2 - (k1 + 2 * k3) * nu + (k1 + k3)

    def i4_i5_ratio(self, k1: float) -> float:
        """I4/I5 for strengths (k1, 1, -k1/(k1+1))"""
        if k1 < 1.0:
            raise OutOfRangeError("ratio defined for k1 >= 1", k1=k1)
        marks = self._landmarks(self.core.parabolic_strengths(k1, 1.0))
        return marks["I4"] / marks["I5"]

    def strip_bounds(self, strengths: VortexStrengths) -> StripBounds:
        """Ibar range (I5, 1) of aperiodic departures"""
        marks = self._landmarks(strengths)
        return StripBounds(lower=marks["I5"], upper=1.0, I4=marks["I4"], I5=marks["I5"])

    # ------------------------------------------------------------------
    # Slopes
    # ------------------------------------------------------------------

    def slope_curve(self, x: TrilinearPoint, strengths: VortexStrengths) -> float:
        """d(beta)/d(alpha) along the critical curve"""
        k1, k2, _ = strengths.as_tuple()
        denominator = 2.0 * (k1 + k2) * x.x3 + k2 * x.x1 + k1 * x.x2
        if denominator == 0.0:
            return VERTICAL_SLOPE
        return SQRT3 * (k1 * x.x2 - k2 * x.x1) / denominator

    def slope_trajectory(self, x: TrilinearPoint, strengths: VortexStrengths) -> float:
        """d(beta)/d(alpha) along the constant-Ibar trajectory through x"""
        k1, k2, _ = strengths.as_tuple()
        denominator = 2.0 * (k1 + k2) * x.x1 * x.x2 + (k1 * x.x1 + k2 * x.x2) * x.x3
        if denominator == 0.0:
            return VERTICAL_SLOPE
        return SQRT3 * x.x3 * (k1 * x.x1 - k2 * x.x2) / denominator

    # ------------------------------------------------------------------
    # Trajectories
    # ------------------------------------------------------------------

    def level_curve(self, level: float, strengths: VortexStrengths, n: int = 200) -> List[LevelCurvePoint]:
        """
        Sample the trajectory Ibar = level inside the physical triangle

        Each row beta = const meets the level set at most twice; the root with
        smaller x1 belongs to the "right" arc (alpha larger), the other to the
        "left" arc.

        Args:
            level: Ibar value, positive
            strengths: Parabolic strengths
            n: Number of beta rows

        Returns:
            Points of both arcs, each ordered by increasing beta
        """
        self._require_parabolic(strengths)
        if level <= 0:
            raise OutOfRangeError("Ibar level must be positive", level=level)
        k1, k2, _ = strengths.as_tuple()
        log_level = math.log(level)
        right: List[LevelCurvePoint] = []
        left: List[LevelCurvePoint] = []

        for beta in np.linspace(0.0, 0.5, n + 1)[1:]:
            beta = float(beta)
            lo = max(0.5 - beta, 1e-12)
            hi = min(0.5, 1.0 - beta - 1e-12)
            if hi <= lo:
                continue

            def residual(x1: float) -> float:
                x2 = 1.0 - beta - x1
                return k2 * math.log(x1) + k1 * math.log(x2) - (k1 + k2) * math.log(beta) - log_level

            peak = min(max(k2 * (1.0 - beta) / (k1 + k2), lo), hi)
            f_peak = residual(peak)
            if f_peak < 0:
                continue
            for a, b, arc, bucket in ((lo, peak, "right", right), (peak, hi, "left", left)):
                f_a, f_b = residual(a), residual(b)
                if f_a == 0.0 or f_b == 0.0 or (f_a > 0) == (f_b > 0):
                    continue
                x1 = bisect(residual, a, b, xtol=1e-14)
                point = TrilinearPoint(x1=x1, x2=1.0 - beta - x1, x3=beta)
                bucket.append(LevelCurvePoint(level=level, arc=arc, point=point))

        return right + left

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _require_parabolic(self, strengths: VortexStrengths) -> None:
        if not strengths.is_parabolic():
            raise UnsupportedStrengthsError("operation needs parabolic strengths", K=strengths.K)
