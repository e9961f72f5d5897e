"""
Unit tests for CSV and JSON output
"""

import io
import json

import numpy as np
import pytest

from app.models import IntegratorSettings
from app.services.dynamics import TrajectoryEvent
from app.services.export import CURVE_COLUMNS, TRAJECTORY_COLUMNS


@pytest.fixture
def short_run(experiment_service):
    return experiment_service.run(
        experiment_service.reference_spec("r-"), IntegratorSettings(t_max=0.05), run_id="short"
    )


def _csv_text(export_service, record, samples=None):
    stream = io.StringIO()
    export_service.write_trajectory_csv(record, stream, samples)
    return stream.getvalue()


class TestExportService:
    """Tests for the writers"""

    def test_trajectory_header(self):
        """The trajectory columns and their order are fixed"""
        assert TRAJECTORY_COLUMNS == [
            "t", "re_z1", "im_z1", "re_z2", "im_z2", "re_z3", "im_z3",
            "R1", "R2", "R3", "p", "x1", "x2", "x3", "alpha", "beta", "gamma", "calY", "ibar",
        ]

    def test_trajectory_rows_match_samples(self, export_service, short_run):
        """One row per accepted step, each with every column filled"""
        _, record = short_run
        stream = io.StringIO()
        count = export_service.write_trajectory_csv(record, stream)
        lines = stream.getvalue().splitlines()
        assert count == len(record.samples)
        assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
        first = lines[1].split(",")
        assert len(first) == len(TRAJECTORY_COLUMNS)
        assert float(first[TRAJECTORY_COLUMNS.index("x1")]) == pytest.approx(0.18195, abs=1e-11)
        assert first[TRAJECTORY_COLUMNS.index("gamma")] == "1"
        assert float(first[TRAJECTORY_COLUMNS.index("ibar")]) == pytest.approx(record.samples[0].ibar, rel=1e-15)

    def test_rows_are_consistent(self, export_service, short_run):
        """Every row has trilinear coordinates summing to one and p equal to the side sum"""
        _, record = short_run
        lines = _csv_text(export_service, record).splitlines()
        columns = {name: index for index, name in enumerate(TRAJECTORY_COLUMNS)}
        for line in lines[1:]:
            values = line.split(",")
            x = [float(values[columns[name]]) for name in ("x1", "x2", "x3")]
            R = [float(values[columns[name]]) for name in ("R1", "R2", "R3")]
            assert sum(x) == pytest.approx(1.0, abs=1e-14)
            assert float(values[columns["p"]]) == pytest.approx(sum(R), abs=1e-15)

    def test_output_is_reproducible(self, export_service, experiment_service):
        """Two runs of the same start write the same bytes"""
        spec = experiment_service.reference_spec("r-")
        texts = [
            _csv_text(export_service, experiment_service.run(spec, IntegratorSettings(t_max=0.05))[1])
            for _ in range(2)
        ]
        assert texts[0] == texts[1]
        assert texts[0].endswith("\n")

    def test_resample_uniform_grid(self, export_service, short_run):
        """Resampled rows sit on a uniform grid ending at the last step"""
        _, record = short_run
        samples = export_service.resample(record, 6)
        times = [sample.t for sample in samples]
        assert times == pytest.approx([0.0, 0.01, 0.02, 0.03, 0.04, 0.05], abs=1e-12)
        assert samples[-1].x.as_tuple() == pytest.approx(record.samples[-1].x.as_tuple(), abs=1e-12)

    def test_resample_stays_on_trajectory(
        self, export_service, dynamics_service, experiment_service, initial_condition_service, strengths
    ):
        """Resampled positions match an integration stopped at the grid time"""
        spec = experiment_service.reference_spec("r-")
        _, record = experiment_service.run(spec, IntegratorSettings(t_max=0.05))
        samples = export_service.resample(record, 11)

        ibar = np.array([sample.ibar for sample in samples])
        assert np.max(np.abs(ibar - record.samples[0].ibar)) < 1e-8

        state0 = initial_condition_service.positions_from_config(spec)
        stop = TrajectoryEvent(name="stop", function=lambda sample: sample.t - 0.025, terminal=True)
        reference = dynamics_service.integrate(state0, strengths, IntegratorSettings(t_max=0.05), events=[stop])
        expected = np.array(reference.samples[-1].state.positions())
        assert samples[5].t == pytest.approx(0.025, abs=1e-15)
        assert np.max(np.abs(np.array(samples[5].state.positions()) - expected)) < 1e-8

    def test_curve_csv(self, export_service, geometry_service, strengths):
        """Curve samples span the whole x1 domain"""
        stream = io.StringIO()
        lo, hi = geometry_service.curve_domain(strengths)
        points = geometry_service.sample_curve(strengths, 5)
        assert export_service.write_curve_csv(points, stream) == 5
        lines = stream.getvalue().splitlines()
        assert lines[0].split(",") == CURVE_COLUMNS
        assert float(lines[1].split(",")[0]) == pytest.approx(lo, abs=1e-15)
        assert float(lines[-1].split(",")[0]) == pytest.approx(hi, abs=1e-15)

    def test_summary_is_flat(self, export_service, short_run):
        """The JSON summary nests at most one level"""
        summary, _ = short_run
        payload = export_service.summary_payload(summary)
        assert payload["run_id"] == "short"
        assert payload["termination"] == "t_max"
        for value in payload.values():
            if isinstance(value, dict):
                assert not any(isinstance(inner, (dict, list)) for inner in value.values())
        stream = io.StringIO()
        export_service.write_json(payload, stream)
        assert json.loads(stream.getvalue()) == payload
