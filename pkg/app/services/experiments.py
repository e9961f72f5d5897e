"""
Experiment Service

Runs simulations end to end:
- Single runs from a start configuration (predict, integrate, observe)
- Concurrent batches of runs
- The four reference start points r-, r+, u-, u+ and their expected outcomes
- The verification suite cross-checking formulations and closed forms
"""

import asyncio
import math
import time
import uuid
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from app.config import get_settings
from app.models import (
    CheckResult,
    CheckStatus,
    InitialSpec,
    IntegratorSettings,
    RunSummary,
    SimilarityVerdict,
    Termination,
    TrajectoryRecord,
    TrajectoryType,
    TrilinearPoint,
    VortexStrengths,
)
from app.services.classification import ClassificationService
from app.services.core import CoreService
from app.services.dynamics import DynamicsService
from app.services.geometry import GeometryService
from app.services.initial_conditions import InitialConditionService

logger = structlog.get_logger(__name__)
settings = get_settings()

REFERENCE_TOL = 1e-4
MAX_IBAR_DRIFT = 1e-3


class ReferencePoint(BaseModel):
    """Reference start point with its expected outcome"""
    model_config = ConfigDict(frozen=True)

    name: str
    R: Tuple[float, float, float]
    caly: float
    ibar: float
    expected_type: TrajectoryType
    expected_crossings: int
    expected_extrema: int
    expected_similarity: SimilarityVerdict


class ReferenceComparison(BaseModel):
    """Computed against expected values for one reference point"""
    name: str
    R: Tuple[float, float, float]
    caly_expected: float
    caly: float
    ibar_expected: float
    ibar: float
    predicted: TrajectoryType
    observed: TrajectoryType
    crossings: int
    extrema: int
    similarity: Optional[SimilarityVerdict] = None
    status: CheckStatus
    details: Optional[str] = None


REFERENCE_STRENGTHS = (2.0, 1.0)
REFERENCE_POINTS: Dict[str, ReferencePoint] = {
    point.name: point
    for point in (
        ReferencePoint(
            name="r-", R=(0.18195, 0.44396, 0.37409), caly=-0.00498, ibar=0.68503,
            expected_type=TrajectoryType.TYPE_I, expected_crossings=1, expected_extrema=1,
            expected_similarity=SimilarityVerdict.SIMILAR_WITH_FLIP,
        ),
        ReferencePoint(
            name="r+", R=(0.19108, 0.43424, 0.37468), caly=0.00501, ibar=0.68500,
            expected_type=TrajectoryType.TYPE_II, expected_crossings=0, expected_extrema=1,
            expected_similarity=SimilarityVerdict.DISSIMILAR,
        ),
        ReferencePoint(
            name="u-", R=(0.10442, 0.49225, 0.40333), caly=-0.00500, ibar=0.38563,
            expected_type=TrajectoryType.TYPE_I, expected_crossings=1, expected_extrema=1,
            expected_similarity=SimilarityVerdict.SIMILAR_WITH_FLIP,
        ),
        ReferencePoint(
            name="u+", R=(0.10839, 0.48643, 0.40518), caly=0.00502, ibar=0.38555,
            expected_type=TrajectoryType.TYPE_III, expected_crossings=1, expected_extrema=3,
            expected_similarity=SimilarityVerdict.SIMILAR_WITH_FLIP,
        ),
    )
}


class ExperimentService:
    """Service for running and checking simulations"""

    def __init__(self):
        self.settings = settings
        self.core = CoreService()
        self.geometry = GeometryService()
        self.dynamics = DynamicsService()
        self.initial = InitialConditionService()
        self.classification = ClassificationService()
        self.stats = {
            "total_runs": 0,
            "converged": 0,
            "unconverged": 0,
            "collisions": 0,
            "total_time_ms": 0,
        }

    def reference_strengths(self) -> VortexStrengths:
        return self.core.parabolic_strengths(*REFERENCE_STRENGTHS)

    def reference_spec(self, name: str) -> InitialSpec:
        point = REFERENCE_POINTS[name]
        return InitialSpec(R=point.R, gamma=1, k=self.reference_strengths())

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------

    def run(
        self,
        spec: InitialSpec,
        integrator: Optional[IntegratorSettings] = None,
        tol_conv: Optional[float] = None,
        run_id: Optional[str] = None,
    ) -> Tuple[RunSummary, TrajectoryRecord]:
        """
        Predict, integrate and observe one start configuration

        Starts on the critical curve run to t_max without a convergence stop.

        Args:
            spec: Initial specification
            integrator: Integrator settings, defaults from configuration
            tol_conv: Convergence tolerance, defaults from configuration
            run_id: Identifier reported in the summary

        Returns:
            Tuple of RunSummary and the full TrajectoryRecord
        """
        start_time = time.time()
        run_id = run_id or uuid.uuid4().hex[:12]
        tol_conv = self.settings.convergence_tol if tol_conv is None else tol_conv
        strengths = spec.k
        x0 = TrilinearPoint(x1=spec.R[0], x2=spec.R[1], x3=spec.R[2], gamma=spec.gamma)

        prediction = self.classification.predict(x0, strengths)
        on_curve = prediction.type == TrajectoryType.ON_CURVE
        logger.info("run_start", run_id=run_id, R=spec.R, gamma=spec.gamma, predicted=prediction.type.value)

        state0 = self.initial.positions_from_config(spec)
        record = self.dynamics.integrate(
            state0, strengths, integrator, convergence_tol=None if on_curve else tol_conv
        )
        report = self.classification.observe(record, strengths, tol_conv)
        similarity = (
            self.classification.similarity_check(x0, report.final_point) if report.converged and not on_curve else None
        )
        record = record.model_copy(update={"predicted_type": prediction.type, "observed_type": report.observed_type})

        valid = record.drift.ibar_rel < MAX_IBAR_DRIFT and record.caly_sign_flips == 0
        if not valid:
            logger.warning("run_invalid", run_id=run_id, ibar_drift=record.drift.ibar_rel, flips=record.caly_sign_flips)

        wall_time_ms = int((time.time() - start_time) * 1000)
        self._update_stats(record, report.converged, wall_time_ms)
        summary = RunSummary(
            run_id=run_id,
            strengths=strengths,
            initial=x0,
            prediction=prediction,
            report=report,
            similarity=similarity,
            drift=record.drift,
            termination=record.termination,
            wall_time_ms=wall_time_ms,
            valid=valid,
        )
        logger.info(
            "run_finish",
            run_id=run_id,
            observed=report.observed_type.value,
            converged=report.converged,
            wall_time_ms=wall_time_ms,
        )
        return summary, record

    def _update_stats(self, record: TrajectoryRecord, converged: bool, wall_time_ms: int) -> None:
        self.stats["total_runs"] += 1
        self.stats["total_time_ms"] += wall_time_ms
        if record.termination == Termination.COLLISION_ABORT:
            self.stats["collisions"] += 1
        elif converged:
            self.stats["converged"] += 1
        else:
            self.stats["unconverged"] += 1

    async def batch_run(
        self,
        jobs: Sequence[Tuple[str, InitialSpec]],
        integrator: Optional[IntegratorSettings] = None,
        tol_conv: Optional[float] = None,
    ) -> List[Tuple[RunSummary, TrajectoryRecord]]:
        """
        Run independent start configurations concurrently

        Args:
            jobs: (run_id, spec) pairs
            integrator: Shared integrator settings
            tol_conv: Shared convergence tolerance

        Returns:
            Results in the order of jobs
        """
        semaphore = asyncio.Semaphore(self.settings.max_workers)

        async def _one(run_id: str, spec: InitialSpec):
            async with semaphore:
                return await asyncio.to_thread(self.run, spec, integrator, tol_conv, run_id)

        logger.info("batch_start", jobs=len(jobs))
        return list(await asyncio.gather(*(_one(run_id, spec) for run_id, spec in jobs)))

    # ------------------------------------------------------------------
    # Reference points
    # ------------------------------------------------------------------

    async def reference_table(
        self,
        integrator: Optional[IntegratorSettings] = None,
        tol_conv: Optional[float] = None,
    ) -> List[ReferenceComparison]:
        """Run r-, r+, u-, u+ and compare with their expected outcomes"""
        strengths = self.reference_strengths()
        jobs = [(name, self.reference_spec(name)) for name in REFERENCE_POINTS]
        results = await self.batch_run(jobs, integrator, tol_conv)

        rows = []
        for (name, _), (summary, _) in zip(jobs, results):
            point = REFERENCE_POINTS[name]
            x0 = summary.initial
            caly = self.geometry.cal_Y(x0, strengths)
            ibar = self.geometry.ibar(x0, strengths)
            report = summary.report
            similarity = summary.similarity.verdict if summary.similarity else None

            problems = []
            if abs(caly - point.caly) > REFERENCE_TOL:
                problems.append(f"calY {caly:.6g} vs {point.caly}")
            if abs(ibar - point.ibar) > REFERENCE_TOL:
                problems.append(f"Ibar {ibar:.6g} vs {point.ibar}")
            if summary.prediction.type != point.expected_type:
                problems.append(f"predicted {summary.prediction.type.value}")
            if report.observed_type != point.expected_type:
                problems.append(f"observed {report.observed_type.value}")
            if not report.converged:
                problems.append("unconverged")
            if len(report.crossings) != point.expected_crossings:
                problems.append(f"{len(report.crossings)} crossings")
            if report.caly_extrema_count != point.expected_extrema:
                problems.append(f"{report.caly_extrema_count} calY extrema")
            if similarity != point.expected_similarity:
                problems.append(f"similarity {similarity.value if similarity else None}")

            rows.append(
                ReferenceComparison(
                    name=name,
                    R=point.R,
                    caly_expected=point.caly,
                    caly=caly,
                    ibar_expected=point.ibar,
                    ibar=ibar,
                    predicted=summary.prediction.type,
                    observed=report.observed_type,
                    crossings=len(report.crossings),
                    extrema=report.caly_extrema_count,
                    similarity=similarity,
                    status=CheckStatus.FAILED if problems else CheckStatus.PASSED,
                    details="; ".join(problems) or None,
                )
            )
        return rows

    # ------------------------------------------------------------------
    # Verification suite
    # ------------------------------------------------------------------

    def verify(self) -> List[CheckResult]:
        """Oracle equivalence, conservation and closed-form checks"""
        checks = [
            self._check_oracle_parabolic(),
            self._check_oracle_elliptic(),
            self._check_kirchhoff(),
            self._check_cubic_roots(),
            self._check_ratio_monotone(),
            self._check_hyperbola(),
            self._check_self_similar(),
        ]
        failed = [check.name for check in checks if check.status == CheckStatus.FAILED]
        logger.info("verify_finish", checks=len(checks), failed=failed)
        return checks

    @staticmethod
    def _threshold_check(name: str, value: float, threshold: float, details: Optional[str] = None) -> CheckResult:
        status = CheckStatus.PASSED if value < threshold else CheckStatus.FAILED
        return CheckResult(name=name, status=status, value=value, threshold=threshold, details=details)

    def _check_oracle_parabolic(self) -> CheckResult:
        state0 = self.initial.positions_from_config(self.reference_spec("r-"))
        report = self.dynamics.oracle_compare(state0, self.reference_strengths(), horizon=0.5)
        value = math.inf if report.shortened else max(report.max_R_discrepancy, report.max_x_discrepancy)
        details = report.notice or f"{report.pieces} pieces over [0, {report.horizon:g}]"
        return self._threshold_check("oracle_parabolic", value, 1e-8, details)

    def _check_oracle_elliptic(self) -> CheckResult:
        strengths = VortexStrengths(k1=1.0, k2=1.0, k3=1.0)
        third = 1.0 / 3.0
        spec = InitialSpec(R=(third, third, 1.0 - 2 * third), gamma=1, k=strengths)
        state0 = self.initial.positions_from_config(spec)
        report = self.dynamics.oracle_compare(state0, strengths, horizon=0.5)
        return self._threshold_check("oracle_elliptic", report.max_R_discrepancy, 1e-8, report.notice)

    def _check_kirchhoff(self) -> CheckResult:
        state0 = self.initial.positions_from_config(self.reference_spec("r-"))
        integrator = IntegratorSettings.from_settings(t_max=0.5)
        record = self.dynamics.integrate(state0, self.reference_strengths(), integrator)
        return self._threshold_check("kirchhoff_drift", record.drift.kirchhoff_abs, 1e-9)

    def _check_cubic_roots(self) -> CheckResult:
        worst = 0.0
        for k1 in (1.0, 2.0, 5.0):
            strengths = self.core.parabolic_strengths(k1, 1.0)
            k1_, k2_, k3_ = strengths.as_tuple()
            coefficients = [k1_ + k2_, -(k1_ + 2 * k2_), -(k1_ + 2 * k3_), k1_ + k3_]
            reference = np.sort(np.roots(coefficients).real)
            closed = np.sort(self.geometry.critical_points(strengths).nu_roots)
            worst = max(worst, float(np.max(np.abs(reference - closed))))
        return self._threshold_check("cubic_roots", worst, 1e-12)

    def _check_ratio_monotone(self) -> CheckResult:
        grid = np.geomspace(1.0, 50.0, 30)
        ratios = np.array([self.geometry.i4_i5_ratio(float(k1)) for k1 in grid])
        increasing = bool(np.all(np.diff(ratios) > 0))
        offset = abs(ratios[0] - 1.0)
        return CheckResult(
            name="i4_i5_ratio",
            status=CheckStatus.PASSED if increasing and offset < 1e-12 else CheckStatus.FAILED,
            value=offset,
            threshold=1e-12,
            details=None if increasing else "ratio not strictly increasing",
        )

    def _check_hyperbola(self) -> CheckResult:
        worst = 0.0
        for k1 in (1.0, 2.0, 7.5):
            strengths = self.core.parabolic_strengths(k1, 1.0)
            for point in self.geometry.sample_curve(strengths, 64):
                residual = self.geometry.hyperbola_residual(self.geometry.to_alpha_beta(point), strengths)
                worst = max(worst, abs(residual))
        return self._threshold_check("hyperbola_form", worst, 1e-10)

    def _check_self_similar(self) -> CheckResult:
        strengths = self.reference_strengths()
        x = self.geometry.curve_point(0.4, strengths)
        spec = self.initial.spec_from_point(x, strengths)
        state0 = self.initial.positions_from_config(spec)
        record = self.dynamics.integrate(state0, strengths, IntegratorSettings.from_settings(t_max=1.0))
        rate = self.dynamics.similar_solution_params(x, strengths, 1, 1.0).rate
        deviation = max(
            abs(sample.p ** 2 - (1.0 + rate * sample.t)) / sample.p ** 2 for sample in record.samples
        )
        return self._threshold_check("self_similar", deviation, 1e-6, f"rate={rate:.6g}")

