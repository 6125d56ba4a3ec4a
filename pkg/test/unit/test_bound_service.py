import pytest
import numpy as np
from app.domain.entities.bound import BoundQuery
from app.domain.entities.kinf import KInfFn
from app.domain.errors import InvalidInputError
from app.domain.services.bound_service import BoundService


class TestBoundService:
    """Unit tests for closeness guarantees and memory estimates"""

    @pytest.fixture
    def bounds(self):
        return BoundService()

    def test_traffic_guarantee(self, bounds):
        """Test ψ = 84.96·0.01², κ = 0.99, T = 15 gives δ ≈ 0.12013"""
        delta, branch = bounds.kushner_branch(0.0, 1.0, 0.99, 0.008496, 15)

        assert branch == 1
        assert delta == pytest.approx(0.12013, abs=1e-5)

    def test_closeness_probability_uses_alpha_level(self, bounds):
        """Test the two-mode network guarantee at level α(1) = 0.2"""
        query = BoundQuery(alpha=KInfFn.quadratic(0.2), kappa=0.99, psi=0.002266, epsilon=1.0, horizon=10)

        assert bounds.closeness_probability(query) == pytest.approx(0.8923, abs=1e-4)

    def test_second_branch_is_clamped(self, bounds):
        delta, branch = bounds.kushner_branch(0.5, 0.1, 0.5, 0.2, 3)

        assert branch == 2
        assert delta == 1.0

    def test_branches_meet_at_threshold(self, bounds):
        threshold = 0.2 / 0.5

        above = bounds.kushner_delta(0.1, threshold, 0.5, 0.2, 3)
        below = bounds.kushner_delta(0.1, threshold - 1e-9, 0.5, 0.2, 3)

        assert bounds.kushner_branch(0.1, threshold - 1e-9, 0.5, 0.2, 3)[1] == 2
        assert above == pytest.approx(below, abs=1e-6)

    @pytest.mark.parametrize("seed", range(50))
    def test_branches_meet_for_random_constants(self, bounds, seed):
        rng = np.random.default_rng(seed)
        kappa = float(rng.uniform(0.01, 0.99))
        psi = float(rng.uniform(1e-4, 5.0))
        horizon = int(rng.integers(1, 60))
        threshold = psi / kappa
        v0 = float(rng.uniform(0.0, threshold))

        above, upper_branch = bounds.kushner_branch(v0, threshold * (1 + 1e-10), kappa, psi, horizon)
        below, lower_branch = bounds.kushner_branch(v0, threshold * (1 - 1e-10), kappa, psi, horizon)

        assert (upper_branch, lower_branch) == (1, 2)
        assert above == pytest.approx(below, abs=1e-7)

    def test_zero_horizon_is_initial_ratio(self, bounds):
        assert bounds.kushner_delta(0.25, 1.0, 0.99, 0.01, 0) == pytest.approx(0.25)

    def test_monotone_in_horizon_and_epsilon(self, bounds):
        by_horizon = [bounds.kushner_delta(0.0, 1.0, 0.99, 0.008496, T) for T in range(0, 30, 5)]
        by_epsilon = [bounds.kushner_delta(0.0, eps, 0.99, 0.008496, 15) for eps in (0.5, 1.0, 2.0, 4.0)]

        assert by_horizon == sorted(by_horizon)
        assert by_epsilon == sorted(by_epsilon, reverse=True)

    @pytest.mark.parametrize(
        "v0,epsilon,kappa,psi", [(0.0, 0.0, 0.9, 0.1), (0.0, 1.0, 1.0, 0.1), (0.0, 1.0, 0.9, -0.1), (-1.0, 1.0, 0.9, 0.1)]
    )
    def test_invalid_arguments(self, bounds, v0, epsilon, kappa, psi):
        with pytest.raises(InvalidInputError):
            bounds.kushner_branch(v0, epsilon, kappa, psi, 5)

    def test_query_rejects_fractional_horizon(self):
        with pytest.raises(InvalidInputError):
            BoundQuery(alpha=KInfFn.quadratic(1.0), kappa=0.99, psi=0.1, epsilon=1.0, horizon=2.5)

    def test_closeness_table(self, bounds):
        deltas = [0.01 * i for i in range(1, 11)]

        rows = bounds.closeness_table(
            KInfFn.quadratic(1.0),
            0.99,
            84.96,
            deltas,
            epsilon=1.0,
            horizon=15,
            reference=bounds.paper_closeness_reference(),
        )

        assert len(rows) == 10
        guarantees = [row.guarantee for row in rows]
        assert guarantees == sorted(guarantees, reverse=True)
        assert rows[0].guarantee == pytest.approx(0.8799, abs=1e-4)
        assert rows[0].psi == pytest.approx(0.008496)
        assert rows[2].reference == 0.75
        assert all(0.0 <= g <= 1.0 for g in guarantees)

    def test_closeness_table_with_given_psi(self, bounds):
        rows = bounds.closeness_table(
            KInfFn.quadratic(1.0), 0.99, 84.96, [0.01, 0.02], epsilon=1.0, horizon=15, psi_values=[0.008496, 50.0]
        )

        assert rows[0].guarantee == pytest.approx(0.8799, abs=1e-4)
        assert rows[1].psi == 50.0
        assert rows[1].branch == 2
        assert rows[1].guarantee == 0.0

    def test_closeness_table_psi_count_must_match(self, bounds):
        with pytest.raises(InvalidInputError, match="one ψ per δ̄"):
            bounds.closeness_table(KInfFn.quadratic(1.0), 0.99, 84.96, [0.01, 0.02], 1.0, 15, psi_values=[0.1])

    def test_memory_table_traffic_widths(self, bounds):
        """Test a 20-wide box at δ̄ = 0.02 needs 16 GB per cell"""
        rows = bounds.memory_table(20.0, [0.02, 0.04], modes=2, subsystems=200)

        assert rows[0].n_x == 1000
        assert rows[0].per_subsystem_gb == pytest.approx(16.0)
        assert rows[0].monolithic_log10_gb == pytest.approx(1252.109, abs=1e-3)
        assert rows[1].n_x == 500
        assert rows[1].per_subsystem_gb == pytest.approx(2.0)

    def test_smallest_memory_estimate(self, bounds):
        per_subsystem, monolithic = bounds.memory_estimate(1, 1, 1, 1)

        assert per_subsystem == pytest.approx(8e-9)
        assert monolithic == pytest.approx(-8.09691, abs=1e-5)

    def test_memory_estimate_rejects_zero_cells(self, bounds):
        with pytest.raises(InvalidInputError):
            bounds.memory_estimate(0, 1, 1, 1)
