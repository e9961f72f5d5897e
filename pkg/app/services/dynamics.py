"""
Vortex Dynamics Service

This service provides:
- Equations of motion in the z-plane, in side lengths and in trilinear form
- Adaptive Dormand-Prince integration with edge-crossing and user events
- Collision and step-size aborts, optional convergence stop
- Invariant drift statistics for every run
- The self-similar solution on the critical curve
- Cross-checks of the three formulations against each other
"""

import math
from typing import Callable, List, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict
from scipy.integrate import RK45, solve_ivp
from scipy.optimize import bisect

from app.config import get_settings
from app.errors import (
    CoalescenceError,
    CollisionError,
    OffCurveDomainError,
    SingularVelocityError,
    UndefinedDirectionError,
)
from app.models import (
    Configuration,
    Edge,
    EdgeCrossing,
    EventOccurrence,
    IntegratorSettings,
    InvariantDrift,
    OracleReport,
    SimilarSolutionParams,
    Termination,
    TrajectoryRecord,
    TrajectorySample,
    TrilinearPoint,
    VortexState,
    VortexStrengths,
)
from app.services.core import CoreService, heron_area, signed_area
from app.services.geometry import GeometryService

logger = structlog.get_logger(__name__)
settings = get_settings()

ON_CURVE_TOL = 1e-10
CALY_NOISE = 1e-12
EDGE_BY_LONGEST = {0: Edge.Q2Q3, 1: Edge.Q3Q1, 2: Edge.Q1Q2}


class TrajectoryEvent(BaseModel):
    """Scalar function of a sample whose zeros are located during integration"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    function: Callable[[TrajectorySample], float]
    terminal: bool = False
    direction: int = 0


def point_velocities(z: np.ndarray, k: np.ndarray) -> np.ndarray:
    """dz_j/dt = -i sum_{m != j} k_m / (conj(z_m) - conj(z_j))"""
    zc = np.conj(z)
    d12 = zc[1] - zc[0]
    d13 = zc[2] - zc[0]
    d23 = zc[2] - zc[1]
    return -1j * np.array(
        [
            k[1] / d12 + k[2] / d13,
            -k[0] / d12 + k[2] / d23,
            -k[0] / d13 - k[1] / d23,
        ]
    )


def side_rates(R: np.ndarray, k: np.ndarray, gamma: int) -> np.ndarray:
    """dR_j/dt for sides R_j opposite vortex j"""
    R1, R2, R3 = R
    area = heron_area(R1, R2, R3)
    factor = 2.0 * gamma * area / (R1 * R1 * R2 * R2 * R3 * R3)
    return factor * np.array(
        [
            k[0] * R1 * (R3 * R3 - R2 * R2),
            k[1] * R2 * (R1 * R1 - R3 * R3),
            k[2] * R3 * (R2 * R2 - R1 * R1),
        ]
    )


def trilinear_rates(x: np.ndarray, k: np.ndarray, gamma: int, p: float, parabolic: bool):
    """(dx/dt, (dp/dt)/p) in trilinear coordinates"""
    x1, x2, x3 = x
    k1, k2, k3 = k
    unit_area = 0.25 * math.sqrt(max((1 - 2 * x1) * (1 - 2 * x2) * (1 - 2 * x3), 0.0))
    h = 2.0 * unit_area / (p * p * (x1 * x2 * x3) ** 2)
    growth = gamma * h * (
        k1 * x1 * (x3 * x3 - x2 * x2) + k2 * x2 * (x1 * x1 - x3 * x3) + k3 * x3 * (x2 * x2 - x1 * x1)
    )
    if parabolic:
        caly = k2 * k3 * x1 * x1 + k3 * k1 * x2 * x2 + k1 * k2 * x3 * x3
        direction = np.array(
            [
                x1 * (x3 / k2 - x2 / k3),
                x2 * (x1 / k3 - x3 / k1),
                x3 * (x2 / k1 - x1 / k2),
            ]
        )
        return gamma * h * caly * direction, growth

    relative = gamma * h * np.array(
        [k1 * (x3 * x3 - x2 * x2), k2 * (x1 * x1 - x3 * x3), k3 * (x2 * x2 - x1 * x1)]
    )
    return np.asarray(x) * (relative - growth), growth


class DynamicsService:
    """Service for integrating the three-vortex motion"""

    def __init__(self):
        self.settings = settings
        self.core = CoreService()
        self.geometry = GeometryService()

    # ------------------------------------------------------------------
    # Right-hand sides
    # ------------------------------------------------------------------

    def rhs_z(self, state: VortexState, strengths: VortexStrengths) -> np.ndarray:
        """
        Velocities of the three vortices

        Args:
            state: Pairwise distinct positions
            strengths: Vortex strengths (k3 may be 0 for the two-vortex limit)

        Returns:
            Complex array (dz1/dt, dz2/dt, dz3/dt)
        """
        z = np.array(state.positions(), dtype=complex)
        if min(self.core.sides_of(z)) == 0.0:
            raise SingularVelocityError("coincident vortices", t=state.t)
        return point_velocities(z, np.array(strengths.as_tuple()))

    def rhs_R(self, config: Configuration, strengths: VortexStrengths) -> np.ndarray:
        """Side-length rates; needs a nondegenerate orientation"""
        if config.gamma == 0 or config.area == 0.0:
            raise UndefinedDirectionError("side-length rates undefined for a collinear triangle")
        return side_rates(np.array(config.sides()), np.array(strengths.as_tuple()), config.gamma)

    def rhs_trilinear(self, x: TrilinearPoint, strengths: VortexStrengths, p: float = 1.0):
        """
        Trilinear rates

        Args:
            x: Trilinear point with orientation +1 or -1
            strengths: Vortex strengths
            p: Current perimeter

        Returns:
            Tuple (dx/dt as array, (dp/dt)/p)
        """
        if x.gamma == 0:
            raise UndefinedDirectionError("trilinear rates undefined for a collinear triangle")
        return trilinear_rates(
            np.array(x.as_tuple()), np.array(strengths.as_tuple()), x.gamma, p, strengths.is_parabolic()
        )

    # ------------------------------------------------------------------
    # Integration
    # ------------------------------------------------------------------

    def integrate(
        self,
        state0: VortexState,
        strengths: VortexStrengths,
        integrator: Optional[IntegratorSettings] = None,
        events: Sequence[TrajectoryEvent] = (),
        convergence_tol: Optional[float] = None,
    ) -> TrajectoryRecord:
        """
        Integrate the z-plane equations with adaptive Dormand-Prince steps

        Every accepted step is recorded. Sign changes of the signed area and of
        user event functions are located by bisection on the step's dense
        output.

        Args:
            state0: Initial positions
            strengths: Vortex strengths
            integrator: Tolerances and limits, defaults from configuration
            events: Additional event functions
            convergence_tol: Stop once |calY| stays below this over the
                trailing window and is nonincreasing

        Returns:
            TrajectoryRecord with samples, crossings, events and drift
        """
        integrator = integrator or IntegratorSettings.from_settings()
        k = np.array(strengths.as_tuple())
        z0 = np.array(state0.positions(), dtype=complex)
        window = self.settings.convergence_window

        first = self._sample(state0.t, z0, strengths, gamma_hint=1)
        p0 = first.p
        samples: List[TrajectorySample] = [first]
        crossings: List[EdgeCrossing] = []
        occurrences: List[EventOccurrence] = []
        event_values = [event.function(first) for event in events]
        area_sign = first.config.gamma
        caly_sign = int(np.sign(first.caly)) if abs(first.caly) > CALY_NOISE else 0
        caly_flips = 0
        termination = Termination.T_MAX
        message: Optional[str] = None

        solver = RK45(
            lambda t, z: point_velocities(z, k),
            state0.t,
            z0,
            t_bound=state0.t + integrator.t_max,
            rtol=integrator.rel_tol,
            atol=integrator.abs_tol,
            max_step=integrator.max_step,
        )
        logger.info("integration_start", t_max=integrator.t_max, p0=p0, gamma=first.config.gamma)

        while solver.status == "running":
            t_old = solver.t
            step_message = solver.step()
            if solver.status == "failed":
                termination = Termination.STIFFNESS_ABORT
                message = step_message
                logger.warning("integration_step_failed", t=t_old, reason=step_message)
                break

            t_new, z_new = solver.t, solver.y.copy()
            if not np.all(np.isfinite(z_new)) or min(self.core.sides_of(z_new)) < integrator.collision_floor * p0:
                termination = Termination.COLLISION_ABORT
                message = f"minimum side below {integrator.collision_floor} p(0) at t={t_new:.6g}"
                logger.warning("collision_abort", t=t_new)
                break

            dense = solver.dense_output()
            new_area = signed_area(z_new)
            new_sign = 0 if new_area == 0.0 else int(math.copysign(1, new_area))
            if new_sign != 0 and area_sign != 0 and new_sign != area_sign:
                crossing = self._locate_crossing(dense, t_old, t_new, area_sign, new_sign, integrator)
                crossings.append(crossing)
                logger.info("edge_crossing", t=crossing.t_cross, edge=crossing.edge.value)
            if new_sign != 0:
                area_sign = new_sign

            try:
                sample = self._sample(t_new, z_new, strengths, gamma_hint=area_sign)
            except CollisionError as exc:
                termination = Termination.COLLISION_ABORT
                message = str(exc)
                break

            terminal_hit = None
            for index, event in enumerate(events):
                value = event.function(sample)
                before = event_values[index]
                event_values[index] = value
                if not self._event_triggered(before, value, event.direction):
                    continue
                t_event = bisect(
                    lambda tau: event.function(self._sample(tau, dense(tau), strengths, area_sign)),
                    t_old,
                    t_new,
                    xtol=integrator.event_time_tol,
                )
                occurrences.append(EventOccurrence(name=event.name, t=t_event, terminal=event.terminal))
                if event.terminal and (terminal_hit is None or t_event < terminal_hit):
                    terminal_hit = t_event

            if terminal_hit is not None:
                samples.append(self._sample(terminal_hit, dense(terminal_hit), strengths, area_sign))
                termination = Termination.TERMINAL_EVENT
                break

            samples.append(sample)
            if abs(sample.caly) > CALY_NOISE:
                sign = int(np.sign(sample.caly))
                if caly_sign and sign != caly_sign:
                    caly_flips += 1
                    logger.warning("caly_sign_flip", t=t_new, caly=sample.caly)
                caly_sign = sign

            if convergence_tol is not None and self._window_converged(samples, convergence_tol, window):
                termination = Termination.CONVERGED
                break

        record = TrajectoryRecord(
            strengths=strengths,
            settings=integrator,
            samples=samples,
            crossings=crossings,
            events=occurrences,
            termination=termination,
            message=message,
            drift=self.invariant_drift(samples, strengths),
            caly_sign_flips=caly_flips,
        )
        logger.info(
            "integration_finish",
            termination=termination.value,
            steps=len(samples) - 1,
            t_end=samples[-1].t,
            crossings=len(crossings),
        )
        return record

    def sample_at(self, t: float, z: np.ndarray, strengths: VortexStrengths, gamma_hint: int = 1) -> TrajectorySample:
        """Sample for positions z; gamma_hint labels a collinear state"""
        return self._sample(t, z, strengths, gamma_hint)

    def dense_positions(self, record: TrajectoryRecord) -> Callable[[np.ndarray], np.ndarray]:
        """
        Continuous positions over a finished run

        Re-integrates the z-plane equations from the run's first sample with its
        Dormand-Prince settings and returns the dense-output interpolant, which
        maps times to a complex array of shape (3,) or (3, n).
        """
        first, last = record.samples[0], record.samples[-1]
        z0 = np.array(first.state.positions(), dtype=complex)
        if last.t == first.t:
            return lambda t: z0 if np.ndim(t) == 0 else np.repeat(z0[:, np.newaxis], np.size(t), axis=1)

        k = np.array(record.strengths.as_tuple())
        solution = solve_ivp(
            lambda t, z: point_velocities(z, k),
            (first.t, last.t),
            z0,
            method="RK45",
            rtol=record.settings.rel_tol,
            atol=record.settings.abs_tol,
            max_step=record.settings.max_step,
            dense_output=True,
        )
        return solution.sol

    def _sample(self, t: float, z: np.ndarray, strengths: VortexStrengths, gamma_hint: int) -> TrajectorySample:
        state = VortexState(t=t, z1=complex(z[0]), z2=complex(z[1]), z3=complex(z[2]))
        config = self.core.configuration_of(state)
        x = self.geometry.reduce(config)
        if x.gamma == 0:
            x = x.model_copy(update={"gamma": gamma_hint or 1})
        return TrajectorySample(
            t=t,
            state=state,
            config=config,
            x=x,
            caly=self.geometry.cal_Y(x, strengths),
            ibar=self.geometry.ibar(x, strengths),
            p=config.p,
        )

    def _locate_crossing(self, dense, t_old, t_new, sign_before, sign_after, integrator) -> EdgeCrossing:
        t_cross = bisect(lambda tau: signed_area(dense(tau)), t_old, t_new, xtol=integrator.event_time_tol)
        z = dense(t_cross)
        longest = int(np.argmax(self.core.sides_of(z)))
        return EdgeCrossing(
            t_cross=t_cross,
            edge=EDGE_BY_LONGEST[longest],
            gamma_before=sign_before,
            gamma_after=sign_after,
        )

    @staticmethod
    def _event_triggered(before: float, after: float, direction: int) -> bool:
        if before == 0.0 or after == 0.0 or (before > 0) == (after > 0):
            return False
        if direction > 0:
            return after > before
        if direction < 0:
            return after < before
        return True

    @staticmethod
    def _window_converged(samples: Sequence[TrajectorySample], tol: float, window: int) -> bool:
        if len(samples) < window:
            return False
        tail = np.abs([sample.caly for sample in samples[-window:]])
        return bool(np.all(tail < tol) and np.all(np.diff(tail) <= 0))

    def invariant_drift(self, samples: Sequence[TrajectorySample], strengths: VortexStrengths) -> InvariantDrift:
        """Maximum deviation of the conserved quantities from their initial values"""
        k = np.array(strengths.as_tuple())
        z = np.array([sample.state.positions() for sample in samples], dtype=complex)
        R = np.array([sample.config.sides() for sample in samples])
        ibar = np.array([sample.ibar for sample in samples])

        a = np.sum(R * R / k, axis=1)
        log_b = np.sum(np.log(R) / k, axis=1)
        center = z @ k
        moment = (np.abs(z) ** 2) @ k
        a_scale = max(abs(a[0]), float(np.sum(R[0] ** 2 / np.abs(k))))

        return InvariantDrift(
            ibar_rel=float(np.max(np.abs(ibar - ibar[0])) / ibar[0]),
            a_rel=float(np.max(np.abs(a - a[0])) / a_scale),
            b_rel=float(np.max(np.abs(np.expm1(log_b - log_b[0])))),
            kirchhoff_abs=float(max(np.max(np.abs(center - center[0])), np.max(np.abs(moment - moment[0])))),
        )

    # ------------------------------------------------------------------
    # Self-similar motion
    # ------------------------------------------------------------------

    def similar_solution_params(
        self, x: TrilinearPoint, strengths: VortexStrengths, gamma: int, p0: float
    ) -> SimilarSolutionParams:
        """
        Constants of p^2(t) = p0^2 + 4 gamma D0 S0 t for a start on the critical curve

        Args:
            x: Point on the critical curve
            strengths: Parabolic strengths
            gamma: Orientation, +1 or -1
            p0: Initial perimeter

        Returns:
            SimilarSolutionParams with rate and coalescence time
        """
        if abs(self.geometry.cal_Y(x, strengths)) > ON_CURVE_TOL:
            raise OffCurveDomainError("self-similar solution needs a point on the critical curve", x=x.as_tuple())
        k1, k2, k3 = strengths.as_tuple()
        x1, x2, x3 = x.as_tuple()
        shape = math.sqrt((1 - 2 * x1) * (1 - 2 * x2) * (1 - 2 * x3))
        return SimilarSolutionParams(
            D0=(x2 * x2 - x1 * x1) / (k1 * k2),
            S0=k1 * k2 * k3 * shape / (4.0 * (x1 * x2 * x3) ** 2),
            gamma=gamma,
            p0=p0,
        )

    def similar_solution(
        self, x: TrilinearPoint, strengths: VortexStrengths, gamma: int, p0: float, t: float
    ) -> float:
        """Perimeter of the self-similar motion at time t"""
        params = self.similar_solution_params(x, strengths, gamma, p0)
        p_squared = p0 * p0 + params.rate * t
        if p_squared <= 0.0:
            raise CoalescenceError("self-similar motion has collapsed", t_star=params.coalescence_time, t=t)
        return math.sqrt(p_squared)

    # ------------------------------------------------------------------
    # Formulation cross-check
    # ------------------------------------------------------------------

    def oracle_compare(
        self,
        state0: VortexState,
        strengths: VortexStrengths,
        horizon: float,
        integrator: Optional[IntegratorSettings] = None,
    ) -> OracleReport:
        """
        Integrate the z-plane, side-length and trilinear formulations side by side

        The side-length and trilinear forms are integrated piecewise between the
        edge crossings of the z-plane run. Each piece restarts from the first
        z-plane sample past a crossing with the orientation flipped.

        Args:
            state0: Initial positions, not collinear
            strengths: Vortex strengths
            horizon: Requested comparison time
            integrator: Tolerances, defaults from configuration

        Returns:
            OracleReport with the largest side-length and trilinear discrepancies
        """
        integrator = (integrator or IntegratorSettings.from_settings()).model_copy(update={"t_max": horizon})
        record = self.integrate(state0, strengths, integrator)
        if record.samples[0].config.gamma == 0:
            raise UndefinedDirectionError("oracle comparison needs a nondegenerate start")

        notice = None
        effective = horizon
        if record.termination != Termination.T_MAX:
            effective = record.samples[-1].t - state0.t
            notice = f"horizon shortened to {effective:.6g}: z-plane run ended by {record.termination.value}"
            logger.warning("oracle_horizon_shortened", horizon=effective, termination=record.termination.value)

        samples = record.samples
        times = np.array([sample.t for sample in samples])
        R_z = np.array([sample.config.sides() for sample in samples])
        x_z = np.array([sample.x.as_tuple() for sample in samples])
        p_z = np.array([sample.p for sample in samples])
        crossing_times = np.array([crossing.t_cross for crossing in record.crossings])
        piece_of = np.searchsorted(crossing_times, times)

        k = np.array(strengths.as_tuple())
        parabolic = strengths.is_parabolic()
        R_side = np.empty_like(R_z)
        y_tri = np.empty((len(samples), 4))
        for piece in np.unique(piece_of):
            index = np.flatnonzero(piece_of == piece)
            gamma = record.crossings[piece - 1].gamma_after if piece else samples[0].config.gamma
            R_side[index], y_tri[index] = self._oracle_piece(
                times[index], R_z[index[0]], x_z[index[0]], p_z[index[0]], k, gamma, parabolic, integrator
            )

        R_tri = y_tri[:, :3] * y_tri[:, 3:4]
        x_side = R_side / R_side.sum(axis=1, keepdims=True)

        max_R = max(np.max(np.abs(R_side - R_z)), np.max(np.abs(R_tri - R_z)))
        max_x = max(np.max(np.abs(x_side - x_z)), np.max(np.abs(y_tri[:, :3] - x_z)))
        logger.info(
            "oracle_compare",
            horizon=effective,
            pieces=len(record.crossings) + 1,
            max_R=float(max_R),
            max_x=float(max_x),
        )
        return OracleReport(
            horizon=effective,
            requested_horizon=horizon,
            max_R_discrepancy=float(max_R),
            max_x_discrepancy=float(max_x),
            pieces=len(record.crossings) + 1,
            notice=notice,
        )

    @staticmethod
    def _oracle_piece(times, R0, x0, p0, k, gamma, parabolic, integrator):
        """Side lengths and (x, p) at the given times from one start and a fixed orientation"""
        if len(times) == 1:
            return R0[np.newaxis, :], np.append(x0, p0)[np.newaxis, :]

        span = (times[0], times[-1])
        options = dict(method="DOP853", rtol=integrator.rel_tol, atol=integrator.abs_tol, dense_output=True)
        side_solution = solve_ivp(lambda t, R: side_rates(R, k, gamma), span, R0, **options)

        def trilinear_field(t, y):
            rates, growth = trilinear_rates(y[:3], k, gamma, y[3], parabolic)
            return np.append(rates, growth * y[3])

        trilinear_solution = solve_ivp(trilinear_field, span, np.append(x0, p0), **options)
        return side_solution.sol(times).T, trilinear_solution.sol(times).T
