"""
Export Service

Writes trajectories, curve samples and phase-portrait arcs as CSV and run
summaries as flat JSON.
"""

import csv
import json
from typing import IO, Iterable, List, Optional, Sequence

import numpy as np
import structlog

from app.config import get_settings
from app.models import LevelCurvePoint, RunSummary, TrajectoryRecord, TrajectorySample, TrilinearPoint
from app.services.dynamics import DynamicsService

logger = structlog.get_logger(__name__)
settings = get_settings()

TRAJECTORY_COLUMNS = [
    "t", "re_z1", "im_z1", "re_z2", "im_z2", "re_z3", "im_z3",
    "R1", "R2", "R3", "p",
    "x1", "x2", "x3", "alpha", "beta", "gamma", "calY", "ibar",
]
CURVE_COLUMNS = ["x1", "x2", "x3", "alpha", "beta"]
LEVEL_COLUMNS = ["level", "arc", "x1", "x2", "x3", "alpha", "beta"]


class ExportService:
    """Service for CSV and JSON output"""

    def __init__(self):
        self.settings = settings
        self.dynamics = DynamicsService()
        self.geometry = self.dynamics.geometry

    def _fmt(self, value: float) -> str:
        return format(float(value), f".{self.settings.csv_digits}g")

    def trajectory_rows(self, samples: Iterable[TrajectorySample]) -> Iterable[List[str]]:
        for sample in samples:
            ab = self.geometry.to_alpha_beta(sample.x)
            z = sample.state.positions()
            numbers = [sample.t]
            for zj in z:
                numbers.extend([zj.real, zj.imag])
            numbers.extend([sample.config.R1, sample.config.R2, sample.config.R3, sample.p])
            numbers.extend([sample.x.x1, sample.x.x2, sample.x.x3, ab.alpha, ab.beta])
            row = [self._fmt(value) for value in numbers]
            row.append(str(sample.x.gamma))
            row.extend([self._fmt(sample.caly), self._fmt(sample.ibar)])
            yield row

    def resample(self, record: TrajectoryRecord, n: int) -> List[TrajectorySample]:
        """
        Samples on a uniform time grid

        Positions come from the integrator's dense output; every derived
        column is recomputed from them.
        """
        grid = np.linspace(record.samples[0].t, record.samples[-1].t, n)
        positions = self.dynamics.dense_positions(record)(grid)
        resampled = []
        gamma = record.samples[0].x.gamma
        for index, t in enumerate(grid):
            sample = self.dynamics.sample_at(float(t), positions[:, index], record.strengths, gamma)
            gamma = sample.x.gamma
            resampled.append(sample)
        return resampled

    def write_trajectory_csv(self, record: TrajectoryRecord, stream: IO[str], samples: Optional[int] = None) -> int:
        """Write one row per accepted step (or per grid point); returns the row count"""
        rows = self.resample(record, samples) if samples else record.samples
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        count = 0
        for row in self.trajectory_rows(rows):
            writer.writerow(row)
            count += 1
        logger.debug("trajectory_csv_written", rows=count)
        return count

    def write_curve_csv(self, points: Sequence[TrilinearPoint], stream: IO[str]) -> int:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for point in points:
            ab = self.geometry.to_alpha_beta(point)
            writer.writerow([self._fmt(v) for v in (point.x1, point.x2, point.x3, ab.alpha, ab.beta)])
        return len(points)

    def write_level_curves_csv(self, points: Sequence[LevelCurvePoint], stream: IO[str]) -> int:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(LEVEL_COLUMNS)
        for item in points:
            ab = self.geometry.to_alpha_beta(item.point)
            x = item.point
            writer.writerow(
                [self._fmt(item.level), item.arc]
                + [self._fmt(v) for v in (x.x1, x.x2, x.x3, ab.alpha, ab.beta)]
            )
        return len(points)

    def summary_payload(self, summary: RunSummary) -> dict:
        """Run summary with at most one level of nesting"""
        report = summary.report
        return {
            "run_id": summary.run_id,
            "strengths": summary.strengths.model_dump(mode="json"),
            "initial": summary.initial.model_dump(mode="json"),
            "predicted_type": summary.prediction.type.value,
            "prediction_basis": summary.prediction.basis.value,
            "branch_start": summary.prediction.branch_start.value if summary.prediction.branch_start else None,
            "ibar": summary.prediction.ibar,
            "caly": summary.prediction.caly,
            "observed_type": report.observed_type.value,
            "converged": report.converged,
            "t_conv": report.t_conv,
            "final_point": report.final_point.model_dump(mode="json"),
            "final_branch": report.final_branch.value if report.final_branch else None,
            "final_gamma": report.final_gamma,
            "crossing_times": [c.t_cross for c in report.crossings],
            "crossing_edges": [c.edge.value for c in report.crossings],
            "caly_extrema_count": report.caly_extrema_count,
            "similarity": summary.similarity.verdict.value if summary.similarity else None,
            "similarity_distance": summary.similarity.distance if summary.similarity else None,
            "drift": summary.drift.model_dump(mode="json"),
            "termination": summary.termination.value,
            "wall_time_ms": summary.wall_time_ms,
            "valid": summary.valid,
        }

    def write_json(self, payload, stream: IO[str]) -> None:
        json.dump(payload, stream, indent=2)
        stream.write("\n")
