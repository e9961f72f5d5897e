"""
Core Vortex Service

Elementary types and the quantities every other service builds on:
- Parabolic strength construction and K-sign classification
- Triangle shape (sides, perimeter, area, orientation) of a state
- Conserved quantities (a, b, Ibar, vorticity center, polar moment)
"""

import math
from typing import Sequence, Tuple

import numpy as np
import structlog

from app.config import get_settings
from app.errors import CollisionError, DegenerateConfigurationError, InvalidStrengthsError
from app.models import Configuration, Invariants, Regime, VortexState, VortexStrengths

logger = structlog.get_logger(__name__)
settings = get_settings()

COLLINEAR_TOL = 1e-14
COLLISION_TOL = 1e-9


def signed_area(z: np.ndarray) -> float:
    """Signed area of the triangle z1 z2 z3, positive when counterclockwise."""
    return 0.5 * float((np.conj(z[1] - z[0]) * (z[2] - z[0])).imag)


def heron_area(R1: float, R2: float, R3: float) -> float:
    """Triangle area from its sides, in the cancellation-free ordering."""
    a, b, c = sorted((R1, R2, R3), reverse=True)
    product = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * math.sqrt(max(product, 0.0))


def trilinear_invariant(x: Sequence[float], strengths: VortexStrengths) -> float:
    """Ibar of a normalised shape; the parabolic form when K vanishes."""
    k1, k2, k3 = strengths.as_tuple()
    x1, x2, x3 = x
    if strengths.is_parabolic():
        return math.exp(k2 * math.log(x1) + k1 * math.log(x2) - (k1 + k2) * math.log(x3))
    weighted = abs(x1 * x1 / k1 + x2 * x2 / k2 + x3 * x3 / k3)
    log_ibar = strengths.K / (2.0 * k3) * math.log(weighted)
    log_ibar += k1 * k2 * (math.log(x1) / k1 + math.log(x2) / k2 + math.log(x3) / k3)
    return math.exp(log_ibar)


class CoreService:
    """Service for strengths, configurations and invariants"""

    def __init__(self):
        self.settings = settings

    def parabolic_strengths(self, k1: float, k2: float) -> VortexStrengths:
        """
        Build strengths with K = 0

        Args:
            k1: Strength of vortex 1
            k2: Strength of vortex 2, 0 < k2 <= k1

        Returns:
            VortexStrengths with k3 = -k1*k2/(k1+k2)
        """
        if not (k1 >= k2 > 0):
            raise InvalidStrengthsError("parabolic strengths need k1 >= k2 > 0", k1=k1, k2=k2)
        return VortexStrengths(k1=k1, k2=k2, k3=-k1 * k2 / (k1 + k2))

    def classify_K(self, strengths: VortexStrengths) -> Regime:
        """Sign class of K, parabolic within the configured tolerance"""
        if strengths.is_parabolic():
            return Regime.PARABOLIC
        return Regime.ELLIPTIC if strengths.K > 0 else Regime.HYPERBOLIC

    def configuration_from_sides(self, R1: float, R2: float, R3: float, gamma: int = 1) -> Configuration:
        """Configuration of a triangle given only its side lengths"""
        area = heron_area(R1, R2, R3)
        p = R1 + R2 + R3
        if area < COLLINEAR_TOL * p * p:
            gamma = 0
        return Configuration(R1=R1, R2=R2, R3=R3, p=p, area=area, gamma=gamma)

    def configuration_of(self, state: VortexState) -> Configuration:
        """
        Shape of the vortex triangle

        Args:
            state: Vortex positions

        Returns:
            Configuration with R_j opposite vortex j, perimeter, area and
            orientation (+1 counterclockwise, 0 collinear)
        """
        z = np.array(state.positions(), dtype=complex)
        R1, R2, R3 = self.sides_of(z)
        p = R1 + R2 + R3
        if min(R1, R2, R3) < COLLISION_TOL * p:
            raise CollisionError("vortices coincide", t=state.t, min_side=min(R1, R2, R3))

        area = signed_area(z)
        gamma = 0 if abs(area) < COLLINEAR_TOL * p * p else int(math.copysign(1, area))
        return Configuration(R1=R1, R2=R2, R3=R3, p=p, area=abs(area), gamma=gamma)

    @staticmethod
    def sides_of(z: np.ndarray) -> Tuple[float, float, float]:
        return (float(abs(z[1] - z[2])), float(abs(z[2] - z[0])), float(abs(z[0] - z[1])))

    def invariants_of(self, state: VortexState, strengths: VortexStrengths) -> Invariants:
        """
        Conserved quantities of a state

        Args:
            state: Vortex positions
            strengths: Vortex strengths (all nonzero)

        Returns:
            Invariants a, b, Ibar, vorticity center and polar moment
        """
        k = np.array(strengths.as_tuple())
        if np.any(k == 0.0):
            raise DegenerateConfigurationError("a and b need nonzero strengths", k=strengths.as_tuple())
        config = self.configuration_of(state)
        R = np.array(config.sides())
        z = np.array(state.positions(), dtype=complex)

        a = float(np.sum(R * R / k))
        b = float(np.exp(np.sum(np.log(R) / k)))
        ibar = trilinear_invariant(R / config.p, strengths)
        total = float(np.sum(k))
        center = complex(np.sum(k * z) / total) if total != 0 else complex(np.sum(k * z))

        return Invariants(
            a=a,
            b=b,
            ibar=ibar,
            vorticity_center=center,
            polar_moment=float(np.sum(k * np.abs(z) ** 2)),
        )
