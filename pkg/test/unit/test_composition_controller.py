import pytest
import numpy as np
from fastapi.testclient import TestClient
from unittest.mock import Mock
from app.api import app
from app.domain.entities.gain_graph import SmallGainResult
from app.domain.services.composition_service import CompositionService
from app.infrastructure.dependencies import get_composition_service


@pytest.fixture(autouse=True)
def clear_overrides():
    """Automatically clear dependency overrides after each test"""
    yield
    app.dependency_overrides.clear()


class TestCompositionController:
    """Unit tests for the composition router"""

    @pytest.fixture
    def client(self):
        return TestClient(app)

    @pytest.fixture
    def mock_service(self):
        service = Mock(spec=CompositionService)
        app.dependency_overrides[get_composition_service] = lambda: service
        return service

    def test_infeasible_interconnection(self, client, mock_service):
        """Test an infeasible answer carries the witness cycle"""
        mock_service.check_small_gain.return_value = SmallGainResult(
            feasible=False,
            max_cycle_mean=float(np.log(1.44) / 2),
            sigma=np.ones(2),
            witness_cycle=[0, 1],
            witness_product=1.44,
        )

        response = client.post(
            "/composition/small-gain",
            json={"kappa": [0.5, 0.5], "gains": [[0.0, 1.2], [1.2, 0.0]]},
        )

        assert response.status_code == 200
        data = response.json()
        assert data["feasible"] is False
        assert data["witness_cycle"] == [0, 1]
        assert data["max_cycle_gain"] == pytest.approx(1.2)
        graph = mock_service.check_small_gain.call_args.args[0]
        assert graph.size == 2

    def test_malformed_gain_matrix(self, client, mock_service):
        """Test a non-zero diagonal is rejected by the gain graph before the service runs"""
        response = client.post(
            "/composition/small-gain",
            json={"kappa": [0.5, 0.5], "gains": [[0.3, 1.2], [1.2, 0.0]]},
        )

        assert response.status_code == 400
        mock_service.check_small_gain.assert_not_called()
