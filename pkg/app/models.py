"""
Pydantic models for the three-vortex simulator
"""

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from app.config import get_settings


class Regime(str, Enum):
    """Sign class of K = k1k2 + k2k3 + k3k1"""
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"


class Edge(str, Enum):
    """Edges of the trilinear triangle, named by their end vertices"""
    Q1Q2 = "Q1Q2"
    Q2Q3 = "Q2Q3"
    Q3Q1 = "Q3Q1"


class Branch(str, Enum):
    """Branches of the critical curve and their orientation images"""
    Q4E = "Q4E"
    EQ5 = "EQ5"
    E_STAR_Q4 = "E*Q4"
    E_STAR_Q5 = "E*Q5"


class TrajectoryType(str, Enum):
    """Departure pattern of a trajectory"""
    TYPE_I = "I"
    TYPE_II = "II"
    TYPE_III = "III"
    PERIODIC = "periodic"
    DIRECT = "direct"
    ON_CURVE = "on-curve"
    UNCLASSIFIED = "unclassified"


class PredictionBasis(str, Enum):
    """Region of the phase portrait a prediction is based on"""
    BELOW_CURVE = "below-curve"
    ABOVE_CURVE_S4 = "above-curve-S4plus"
    ABOVE_CURVE_S5 = "above-curve-S5plus"
    OUTSIDE_STRIP = "outside-strip"
    NEAR_EXPANDING = "near-expanding-branch"
    BELOW_I4_CLOCKWISE = "below-I4-clockwise"
    ON_CURVE = "on-curve"


class Termination(str, Enum):
    """Why an integration stopped"""
    T_MAX = "t_max"
    CONVERGED = "converged"
    TERMINAL_EVENT = "terminal_event"
    COLLISION_ABORT = "collision_abort"
    STIFFNESS_ABORT = "stiffness_abort"


class SimilarityVerdict(str, Enum):
    """Comparison of a start point with its converged point"""
    SIMILAR_WITH_FLIP = "similar-with-flip"
    DISSIMILAR = "dissimilar"


class CheckStatus(str, Enum):
    """Individual check status"""
    PASSED = "PASSED"
    FAILED = "FAILED"


_FROZEN = ConfigDict(frozen=True)


# ================================
# Strengths & Configurations
# ================================

class VortexStrengths(BaseModel):
    """Circulations of the three vortices"""
    model_config = _FROZEN

    k1: float
    k2: float
    k3: float

    @model_validator(mode="after")
    def _canonical_order(self):
        if not (self.k1 >= self.k2 > 0):
            raise ValueError(f"strengths must satisfy k1 >= k2 > 0, got k1={self.k1}, k2={self.k2}")
        return self

    @computed_field
    @property
    def K(self) -> float:
        return self.k1 * self.k2 + self.k2 * self.k3 + self.k3 * self.k1

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.k1, self.k2, self.k3)

    def is_parabolic(self) -> bool:
        scale = max(self.k1 * self.k1, self.k2 * self.k2, self.k3 * self.k3, 1.0)
        return abs(self.K) <= get_settings().parabolic_tol * scale


class VortexState(BaseModel):
    """Positions of the three vortices at time t"""
    model_config = _FROZEN

    t: float = 0.0
    z1: complex
    z2: complex
    z3: complex

    @model_validator(mode="after")
    def _distinct_positions(self):
        if self.z1 == self.z2 or self.z2 == self.z3 or self.z3 == self.z1:
            raise ValueError("vortex positions must be pairwise distinct")
        return self

    def positions(self) -> Tuple[complex, complex, complex]:
        return (self.z1, self.z2, self.z3)


class Configuration(BaseModel):
    """Shape of the vortex triangle: opposite sides, perimeter, area, orientation"""
    model_config = _FROZEN

    R1: float = Field(..., gt=0)
    R2: float = Field(..., gt=0)
    R3: float = Field(..., gt=0)
    p: float = Field(..., gt=0)
    area: float = Field(..., ge=0)
    gamma: int

    @field_validator("gamma")
    @classmethod
    def _orientation(cls, value: int) -> int:
        if value not in (-1, 0, 1):
            raise ValueError("gamma must be -1, 0 or +1")
        return value

    @model_validator(mode="after")
    def _triangle(self):
        tol = 1e-12 * self.p
        if abs(self.R1 + self.R2 + self.R3 - self.p) > tol:
            raise ValueError("perimeter must equal R1 + R2 + R3")
        if max(self.R1, self.R2, self.R3) > self.p / 2 + tol:
            raise ValueError("side lengths violate the triangle inequality")
        return self

    def sides(self) -> Tuple[float, float, float]:
        return (self.R1, self.R2, self.R3)


class Invariants(BaseModel):
    """Conserved quantities of a state"""
    model_config = _FROZEN

    a: float
    b: float
    ibar: float
    vorticity_center: complex
    polar_moment: float


# ================================
# Trilinear Geometry
# ================================

class TrilinearPoint(BaseModel):
    """Normalised side lengths x_j = R_j / p with orientation"""
    model_config = _FROZEN

    x1: float
    x2: float
    x3: float
    gamma: int = 1

    @field_validator("gamma")
    @classmethod
    def _orientation(cls, value: int) -> int:
        if value not in (-1, 0, 1):
            raise ValueError("gamma must be -1, 0 or +1")
        return value

    @model_validator(mode="after")
    def _inside_triangle(self):
        if abs(self.x1 + self.x2 + self.x3 - 1.0) > 1e-12:
            raise ValueError(f"trilinear coordinates must sum to 1, got {self.x1 + self.x2 + self.x3!r}")
        for value in (self.x1, self.x2, self.x3):
            if value < -1e-12 or value > 0.5 + 1e-12:
                raise ValueError("trilinear point lies outside the physical triangle")
        return self

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x1, self.x2, self.x3)


class AlphaBeta(BaseModel):
    """Cartesian image of a trilinear point"""
    model_config = _FROZEN

    alpha: float
    beta: float


class CriticalPoints(BaseModel):
    """Fixed landmarks of the parabolic phase portrait"""
    model_config = _FROZEN

    E: TrilinearPoint
    Q4: TrilinearPoint
    Q5: TrilinearPoint
    Q6: TrilinearPoint
    S4: TrilinearPoint
    beta4: float
    beta5: float
    I4: float
    I5: float
    I6: float
    nu_roots: Tuple[float, float, float] = Field(..., description="(nu6, nu4, nu5)")


class StripBounds(BaseModel):
    """Ibar levels bounding the strip of aperiodic motion"""
    model_config = _FROZEN

    lower: float
    upper: float
    I4: float
    I5: float


class LevelCurvePoint(BaseModel):
    """Sample of a constant-Ibar trajectory"""
    model_config = _FROZEN

    level: float
    arc: str
    point: TrilinearPoint


# ================================
# Integration
# ================================

class IntegratorSettings(BaseModel):
    """Tolerances and limits for the adaptive integrator"""
    model_config = _FROZEN

    rel_tol: float = Field(1e-10, ge=1e-14)
    abs_tol: float = Field(1e-13, gt=0)
    max_step: float = Field(0.01, gt=0)
    t_max: float = Field(500.0, gt=0)
    collision_floor: float = Field(1e-6, gt=0)
    event_time_tol: float = Field(1e-12, gt=0)

    @classmethod
    def from_settings(cls, **overrides) -> "IntegratorSettings":
        settings = get_settings()
        values = {
            "rel_tol": settings.rel_tol,
            "abs_tol": settings.abs_tol,
            "max_step": settings.max_step,
            "t_max": settings.t_max,
            "collision_floor": settings.collision_floor,
            "event_time_tol": settings.event_time_tol,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


class TrajectorySample(BaseModel):
    """State and derived quantities at one accepted step"""
    model_config = _FROZEN

    t: float
    state: VortexState
    config: Configuration
    x: TrilinearPoint
    caly: float
    ibar: float
    p: float


class EdgeCrossing(BaseModel):
    """Collinear passage of the triangle"""
    model_config = _FROZEN

    t_cross: float
    edge: Edge
    gamma_before: int
    gamma_after: int


class EventOccurrence(BaseModel):
    """Zero of a user-supplied event function"""
    model_config = _FROZEN

    name: str
    t: float
    terminal: bool = False


class InvariantDrift(BaseModel):
    """Maximum deviation of conserved quantities over a run"""
    model_config = _FROZEN

    ibar_rel: float = 0.0
    a_rel: float = 0.0
    b_rel: float = 0.0
    kirchhoff_abs: float = 0.0


class TrajectoryRecord(BaseModel):
    """Outcome of one integration"""
    model_config = _FROZEN

    strengths: VortexStrengths
    settings: IntegratorSettings
    samples: List[TrajectorySample]
    crossings: List[EdgeCrossing] = []
    events: List[EventOccurrence] = []
    termination: Termination
    message: Optional[str] = None
    drift: InvariantDrift = InvariantDrift()
    caly_sign_flips: int = 0
    predicted_type: Optional[TrajectoryType] = None
    observed_type: Optional[TrajectoryType] = None

    @property
    def final(self) -> TrajectorySample:
        return self.samples[-1]


class SimilarSolutionParams(BaseModel):
    """Constants of the self-similar motion on the critical curve"""
    model_config = _FROZEN

    D0: float
    S0: float
    gamma: int
    p0: float

    @computed_field
    @property
    def rate(self) -> float:
        """Slope of p^2 in time"""
        return 4.0 * self.gamma * self.D0 * self.S0

    @computed_field
    @property
    def expanding(self) -> bool:
        return self.rate > 0

    @computed_field
    @property
    def coalescence_time(self) -> Optional[float]:
        if self.rate >= 0:
            return None
        return -self.p0 * self.p0 / self.rate


class OracleReport(BaseModel):
    """Agreement of the three equations-of-motion formulations"""
    model_config = _FROZEN

    horizon: float
    requested_horizon: float
    max_R_discrepancy: float
    max_x_discrepancy: float
    pieces: int = 1
    notice: Optional[str] = None

    @property
    def shortened(self) -> bool:
        return self.horizon < self.requested_horizon


# ================================
# Initial Conditions & Classification
# ================================

class InitialSpec(BaseModel):
    """Side lengths, orientation and strengths of a start configuration"""
    model_config = _FROZEN

    R: Tuple[float, float, float]
    gamma: int = 1
    k: VortexStrengths

    @field_validator("gamma")
    @classmethod
    def _orientation(cls, value: int) -> int:
        if value not in (-1, 1):
            raise ValueError("gamma must be -1 or +1")
        return value

    @model_validator(mode="after")
    def _normalised_triangle(self):
        if abs(sum(self.R) - 1.0) > 1e-12:
            raise ValueError("side lengths must sum to 1")
        if min(self.R) <= 0 or max(self.R) >= 0.5:
            raise ValueError("side lengths must form a nondegenerate triangle")
        return self


class TypePrediction(BaseModel):
    """Type expected from the start point's position"""
    model_config = _FROZEN

    type: TrajectoryType
    basis: PredictionBasis
    branch_start: Optional[Branch] = None
    ibar: float
    caly: float


class ConvergenceReport(BaseModel):
    """What a finished trajectory actually did"""
    model_config = _FROZEN

    converged: bool
    t_conv: Optional[float] = None
    final_point: TrilinearPoint
    final_branch: Optional[Branch] = None
    crossings: List[EdgeCrossing] = []
    caly_extrema_count: int = 0
    initial_caly_sign: int = 0
    final_gamma: int = 1
    observed_type: TrajectoryType


class SimilarityResult(BaseModel):
    """Start-versus-final comparison"""
    model_config = _FROZEN

    verdict: SimilarityVerdict
    distance: float


class CheckResult(BaseModel):
    """Result of an individual verification check"""
    name: str
    status: CheckStatus
    value: Optional[float] = None
    threshold: Optional[float] = None
    details: Optional[str] = None


class RunSummary(BaseModel):
    """Everything reported for one simulation run"""
    run_id: str
    strengths: VortexStrengths
    initial: TrilinearPoint
    prediction: TypePrediction
    report: ConvergenceReport
    similarity: Optional[SimilarityResult] = None
    drift: InvariantDrift
    termination: Termination
    wall_time_ms: int
    valid: bool
