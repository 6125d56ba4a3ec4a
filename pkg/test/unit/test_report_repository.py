import csv
import math
import pytest
import numpy as np
from app.domain.entities.bound import ClosenessRow, MemoryRow
from app.domain.entities.rollout import Trajectories
from app.domain.errors import ArtifactIntegrityError, MissingArtifactError
from app.infrastructure.repositories.report_repository import ReportRepository


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


class TestReportRepository:
    """Unit tests for JSON and CSV outputs"""

    @pytest.fixture
    def reports(self, tmp_path):
        return ReportRepository(tmp_path / "run")

    def test_json_is_plain_and_finite_safe(self, reports):
        path = reports.write_json(
            "nested/out.json", {"value": np.float64(0.5), "items": np.arange(3), "gap": math.inf}
        )

        data = reports.read_json(path)

        assert data == {"gap": "inf", "items": [0, 1, 2], "value": 0.5}

    def test_missing_json(self, reports):
        with pytest.raises(MissingArtifactError):
            reports.read_json(reports.path("absent.json"))

    def test_corrupt_json(self, reports):
        path = reports.path("broken.json")
        path.parent.mkdir(parents=True)
        path.write_text("{")

        with pytest.raises(ArtifactIntegrityError):
            reports.read_json(path)

    def test_closeness_csv(self, reports):
        rows = [
            ClosenessRow(delta=0.01, psi=0.008496, branch=1, guarantee=0.8799, reference=0.97),
            ClosenessRow(delta=0.02, psi=0.033984, branch=1, guarantee=0.6, reference=None),
        ]

        content = read_rows(reports.write_closeness("closeness.csv", rows))

        assert content[0] == ["delta", "psi", "branch", "guarantee", "reference"]
        assert content[1][0] == "0.01"
        assert content[2][4] == ""

    def test_memory_csv(self, reports):
        rows = [MemoryRow(0.02, 1000, 1000, 2, 200, 16.0, 1252.109)]

        content = read_rows(reports.write_memory("memory.csv", rows))

        assert content[0][-1] == "monolithic_log10_gb"
        assert float(content[1][5]) == 16.0

    def test_trajectories_csv_limits_runs(self, reports):
        states = np.arange(3 * 2 * 1, dtype=float).reshape(3, 2, 1)
        trajectories = Trajectories(
            concrete=states,
            abstract=states + 0.5,
            modes=np.zeros((3, 2, 1), dtype=int),
            counters=np.ones((3, 2, 1), dtype=int),
            states=states,
        )

        content = read_rows(reports.write_trajectories("trajectories.csv", trajectories, max_runs=2))

        assert content[0] == ["run", "k", "x0", "y_hat0", "mode0", "counter0"]
        assert len(content) == 1 + 2 * 2
        assert content[-1] == ["1", "1", "3.0", "3.5", "0", "1"]
