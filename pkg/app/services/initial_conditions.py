"""
Initial Condition Service

Turns normalised side lengths into vortex positions and finds start points a
given distance (in calY) from the critical curve at a given Ibar level.
"""

import math
from typing import Tuple

import numpy as np
import structlog

from app.config import get_settings
from app.errors import InconsistentConfigurationError, NoSolutionError, OutOfRangeError
from app.models import Branch, InitialSpec, TrilinearPoint, VortexState, VortexStrengths
from app.services.core import CoreService
from app.services.geometry import GeometryService

logger = structlog.get_logger(__name__)
settings = get_settings()

SIDE_TOL = 1e-12
SOLVE_TOL = 1e-12
MAX_HALVINGS = 40


class InitialConditionService:
    """Service for building start configurations"""

    def __init__(self):
        self.settings = settings
        self.core = CoreService()
        self.geometry = GeometryService()

    def positions_from_config(self, spec: InitialSpec) -> VortexState:
        """
        Place the vortices for prescribed sides and orientation

        Vortices 1 and 2 share a real part with z1 above z2, vortex 3 lies to
        their right and the center of vorticity is the origin. gamma = -1
        reflects the counterclockwise construction in the real axis.

        Args:
            spec: Side lengths (summing to 1), orientation and strengths

        Returns:
            VortexState at t = 0
        """
        R1, R2, R3 = spec.R
        k1, k2, k3 = spec.k.as_tuple()
        total = k1 + k2 + k3

        im_z2 = -(k3 * (R1 * R1 - R2 * R2) + R3 * R3 * (2 * k1 + k3)) / (2 * R3 * total)
        im_z1 = im_z2 + R3
        im_z3 = im_z2 + (R1 * R1 - R2 * R2 + R3 * R3) / (2 * R3)

        radicand = R2 * R2 - (im_z3 - im_z1) ** 2
        if radicand < -SIDE_TOL:
            raise InconsistentConfigurationError("sides cannot be placed", radicand=radicand)
        offset = math.sqrt(max(radicand, 0.0))
        re_z12 = -k3 * offset / total

        z = np.array([complex(re_z12, im_z1), complex(re_z12, im_z2), complex(re_z12 + offset, im_z3)])
        if spec.gamma < 0:
            z = np.conj(z)
        state = VortexState(t=0.0, z1=z[0], z2=z[1], z3=z[2])

        config = self.core.configuration_of(state)
        mismatch = max(abs(a - b) for a, b in zip(config.sides(), spec.R))
        if mismatch > SIDE_TOL or config.gamma != spec.gamma:
            raise InconsistentConfigurationError(
                "constructed positions do not reproduce the request",
                mismatch=mismatch,
                gamma=config.gamma,
            )
        return state

    def point_at_offset(
        self,
        ibar_target: float,
        caly_target: float,
        strengths: VortexStrengths,
        gamma: int = 1,
    ) -> TrilinearPoint:
        """
        Trilinear point with prescribed Ibar and calY near a contracting branch

        Damped Newton iteration in (x1, x3) seeded on EQ5 for gamma = 1 and on
        Q4E (the image of E*Q4) for gamma = -1, at the point with
        Ibar = ibar_target.

        Args:
            ibar_target: Ibar level in (I5, 1), or (I4, 1) when gamma = -1
            caly_target: Signed calY offset from the critical curve
            strengths: Parabolic strengths
            gamma: Orientation attached to the result

        Returns:
            TrilinearPoint satisfying both targets within 1e-12
        """
        bounds = self.geometry.strip_bounds(strengths)
        lower, branch = (bounds.lower, Branch.EQ5) if gamma >= 0 else (bounds.I4, Branch.Q4E)
        if not (lower < ibar_target < bounds.upper):
            raise OutOfRangeError("Ibar target outside the strip", ibar=ibar_target, lower=lower, gamma=gamma)

        seed = self.geometry.curve_at_ibar(ibar_target, strengths, branch)
        k1, k2, k3 = strengths.as_tuple()
        log_target = math.log(ibar_target)
        v = np.array([seed.x1, seed.x3])

        def residual(v: np.ndarray) -> np.ndarray:
            x1, x3 = v
            x2 = 1.0 - x1 - x3
            log_ibar = k2 * math.log(x1) + k1 * math.log(x2) - (k1 + k2) * math.log(x3)
            caly = k2 * k3 * x1 * x1 + k3 * k1 * x2 * x2 + k1 * k2 * x3 * x3
            return np.array([log_ibar - log_target, caly - caly_target])

        def jacobian(v: np.ndarray) -> np.ndarray:
            x1, x3 = v
            x2 = 1.0 - x1 - x3
            return np.array(
                [
                    [k2 / x1 - k1 / x2, -k1 / x2 - (k1 + k2) / x3],
                    [2 * k2 * k3 * x1 - 2 * k3 * k1 * x2, 2 * k1 * k2 * x3 - 2 * k3 * k1 * x2],
                ]
            )

        r = residual(v)
        for iteration in range(self.settings.newton_max_iter):
            if self._solved(v, r, ibar_target):
                x1, x3 = v
                logger.debug("point_at_offset_converged", iterations=iteration, ibar=ibar_target, caly=caly_target)
                return TrilinearPoint(x1=x1, x2=1.0 - x1 - x3, x3=x3, gamma=gamma)

            step = np.linalg.solve(jacobian(v), -r)
            v, r = self._damped_update(v, r, step, residual)

        logger.error("point_at_offset_failed", ibar=ibar_target, caly=caly_target, residual=r.tolist())
        raise NoSolutionError("Newton iteration did not converge", ibar=ibar_target, caly=caly_target)

    @staticmethod
    def _inside(v: np.ndarray) -> bool:
        x1, x3 = v
        x2 = 1.0 - x1 - x3
        return all(0.0 < value < 0.5 for value in (x1, x2, x3))

    def _damped_update(self, v, r, step, residual) -> Tuple[np.ndarray, np.ndarray]:
        norm = np.linalg.norm(r)
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = v + scale * step
            if self._inside(candidate):
                trial = residual(candidate)
                if np.linalg.norm(trial) <= norm:
                    return candidate, trial
            scale *= 0.5
        raise NoSolutionError("damped Newton step made no progress", x1=float(v[0]), x3=float(v[1]))

    @staticmethod
    def _solved(v: np.ndarray, r: np.ndarray, ibar_target: float) -> bool:
        ibar_error = abs(ibar_target * math.expm1(r[0]))
        return ibar_error < SOLVE_TOL and abs(r[1]) < SOLVE_TOL

    def spec_from_point(self, x: TrilinearPoint, strengths: VortexStrengths) -> InitialSpec:
        """Unit-perimeter start for a trilinear point"""
        gamma = x.gamma if x.gamma != 0 else 1
        return InitialSpec(R=x.as_tuple(), gamma=gamma, k=strengths)
