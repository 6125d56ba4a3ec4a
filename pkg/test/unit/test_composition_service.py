import json
import math
import pytest
import numpy as np
import networkx as nx
from app.domain.entities.certificate import SpsfCertificate
from app.domain.entities.gain_graph import GainGraph
from app.domain.entities.grid import UniformGrid
from app.domain.entities.kinf import KInfFn
from app.domain.errors import CompositionError, InvalidInputError, UnsupportedGainError
from app.domain.services.composition_service import CompositionService


def quadratic_certificate(psi_coefficient=1.0, rho=0.72, alpha=KInfFn.quadratic(1.0), kappa=0.99):
    return SpsfCertificate(
        M=(np.eye(1),),
        kappa_bar=(0.5,),
        pi=(0.85,),
        mu=1.0,
        epsilon=2.0,
        dwell_time=1,
        kappa=kappa,
        rho_int=KInfFn.quadratic(rho),
        psi_coefficient=psi_coefficient,
        alpha=alpha,
    )


class TestCompositionService:
    """Unit tests for gain assembly and the small-gain check"""

    @pytest.fixture
    def composition(self):
        return CompositionService()

    @pytest.fixture
    def published_certificate(self, traffic_certificate_path):
        return SpsfCertificate.from_dict(json.loads(traffic_certificate_path.read_text()))

    def test_traffic_ring_gain(self, composition, published_certificate, traffic_ring):
        """Test (1 + 0.05)·0.72·1.1²: λ̄ enters the quadratic ρ squared"""
        net = traffic_ring(3)

        graph = composition.assemble_gains(
            [published_certificate] * 3, net, KInfFn.linear(1.1), KInfFn.linear(0.05)
        )

        assert graph.gains[1, 0] == pytest.approx(0.91476)
        assert graph.gains[0, 1] == 0.0
        assert graph.functions[(1, 0)].is_linear()
        assert np.allclose(graph.kappa, 0.99)

    def test_lambda_bar_must_exceed_one(self, composition, published_certificate, traffic_ring):
        with pytest.raises(UnsupportedGainError):
            composition.assemble_gains(
                [published_certificate] * 2, traffic_ring(2), KInfFn.linear(1.0), KInfFn.linear(0.05)
            )

    def test_mixed_exponents_are_unsupported(self, composition, traffic_ring):
        certificates = [quadratic_certificate(), quadratic_certificate(alpha=KInfFn.linear(1.0))]

        with pytest.raises(UnsupportedGainError, match="not linear"):
            composition.assemble_gains(certificates, traffic_ring(2), KInfFn.linear(1.1), KInfFn.linear(0.05))

    def test_certificate_count_must_match(self, composition, published_certificate, traffic_ring):
        with pytest.raises(InvalidInputError):
            composition.assemble_gains(
                [published_certificate], traffic_ring(2), KInfFn.linear(1.1), KInfFn.linear(0.05)
            )

    def test_feasible_pair_keeps_identity_scaling(self, composition):
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 0.5], [0.5, 0.0]])

        result = composition.check_small_gain(graph)

        assert result.feasible
        assert result.identity_sigma
        assert np.allclose(result.sigma, 1.0)
        assert result.scaled_max == pytest.approx(0.99)
        assert math.exp(result.max_cycle_mean) == pytest.approx(0.99)

    def test_infeasible_pair_reports_witness(self, composition):
        """Test the 2-cycle with gains 1.2 is reported with product 1.44"""
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 1.2], [1.2, 0.0]])

        result = composition.check_small_gain(graph)

        assert not result.feasible
        assert sorted(result.witness_cycle) == [0, 1]
        assert result.witness_product == pytest.approx(1.44)

    def test_unbalanced_gains_need_scaling(self, composition):
        graph = GainGraph(kappa=[0.5, 0.5], gains=[[0.0, 2.0], [0.1, 0.0]])

        result = composition.check_small_gain(graph)

        assert result.feasible
        assert not result.identity_sigma
        assert result.scaled_max < 1.0
        assert composition.scaled_max(graph.full_matrix(), result.sigma) == pytest.approx(result.scaled_max)

    @pytest.mark.parametrize("seed", range(200))
    def test_max_cycle_mean_matches_cycle_enumeration(self, composition, seed):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(1, 9))
        mask = rng.random((N, N)) < 0.4
        np.fill_diagonal(mask, False)
        kappa = rng.uniform(0.1, 0.99, N)
        gains = np.where(mask, rng.uniform(0.05, 2.0, (N, N)), 0.0)
        graph = GainGraph(kappa=kappa, gains=gains)
        full = graph.full_matrix()

        digraph = nx.DiGraph()
        digraph.add_nodes_from(range(N))
        for i, j in zip(*np.nonzero(gains)):
            digraph.add_edge(int(j), int(i))
        means = [float(np.log(k)) for k in kappa]
        for cycle in nx.simple_cycles(digraph):
            edges = zip(cycle, cycle[1:] + cycle[:1])
            means.append(sum(math.log(full[b, a]) for a, b in edges) / len(cycle))

        result = composition.check_small_gain(graph)

        assert result.max_cycle_mean == pytest.approx(max(means), abs=1e-9)
        assert result.feasible == (max(means) < 0)
        if result.feasible:
            assert result.scaled_max < 1.0

    @pytest.mark.parametrize("size", [3, 10, 200])
    def test_ring_feasibility_is_size_independent(self, composition, published_certificate, traffic_ring, size):
        graph = composition.assemble_gains(
            [published_certificate] * size, traffic_ring(size), KInfFn.linear(1.1), KInfFn.linear(0.05)
        )

        result = composition.check_small_gain(graph)

        assert result.feasible
        assert result.identity_sigma
        assert math.exp(result.max_cycle_mean) == pytest.approx(0.99)

    def test_matched_psi_takes_maximum(self, composition):
        certificates = [quadratic_certificate(1e-3), quadratic_certificate(4e-3)]
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 0.5], [0.5, 0.0]])
        result = composition.check_small_gain(graph)

        composed = composition.compose_ssf(certificates, graph, result, [1.0, 1.0])

        assert composed.psi == pytest.approx(4e-3)
        assert composed.kappa == pytest.approx(0.99)
        assert composed.alpha == KInfFn.quadratic(1.0)
        assert composition.matched_psi_coefficient(certificates, result.sigma) == pytest.approx(4e-3)

    def test_single_subsystem(self, composition):
        certificate = quadratic_certificate(84.96)
        graph = GainGraph(kappa=[0.99], gains=[[0.0]])
        result = composition.check_small_gain(graph)

        composed = composition.compose_ssf([certificate], graph, result, [0.01], matched_io=False)

        assert composed.psi == pytest.approx(84.96e-4)
        assert composed.initial_value([[10.0]], [[10.5]], [0]) == pytest.approx(0.25)

    def test_unmatched_psi_grows_with_quantization(self, composition):
        certificates = [quadratic_certificate(1.0), quadratic_certificate(1.0)]
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 0.5], [0.5, 0.0]])
        result = composition.check_small_gain(graph)
        psis = []
        for width in (0.0, 0.1, 0.5, 1.0):
            mu_bar = np.array([[0.0, width], [width, 0.0]])
            composed = composition.compose_ssf(
                certificates,
                graph,
                result,
                [0.1, 0.1],
                matched_io=False,
                mu_bar=mu_bar,
                lambda_bar=KInfFn.linear(1.1),
                delta_f=KInfFn.linear(0.05),
            )
            psis.append(composed.psi)

        assert psis == sorted(psis)
        assert psis[0] == pytest.approx((1 + 1 / 0.05) * 0.01)
        assert psis[-1] > psis[0]

    def test_unmatched_without_quantization_data(self, composition):
        certificates = [quadratic_certificate(), quadratic_certificate()]
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 0.5], [0.5, 0.0]])
        result = composition.check_small_gain(graph)

        with pytest.raises(CompositionError, match="unmatched"):
            composition.compose_ssf(certificates, graph, result, [0.1, 0.1], matched_io=False)

    def test_compose_refuses_infeasible_result(self, composition):
        certificates = [quadratic_certificate(), quadratic_certificate()]
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 1.2], [1.2, 0.0]])
        result = composition.check_small_gain(graph)

        with pytest.raises(CompositionError):
            composition.compose_ssf(certificates, graph, result, [0.1, 0.1])

    def test_composed_alpha_with_scaling(self, composition):
        """Test α = β⁻¹ where β = max_i α_i⁻¹∘σ_i"""
        certificates = [quadratic_certificate(alpha=KInfFn.quadratic(0.2)), quadratic_certificate()]
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 0.5], [0.5, 0.0]])
        result = composition.check_small_gain(graph)

        composed = composition.compose_ssf(certificates, graph, result, [0.1, 0.1])

        assert composed.alpha.exponent == pytest.approx(2.0)
        assert composed.alpha.coefficient == pytest.approx(0.2)

    def test_quantization_matrix(self, composition, traffic_ring):
        net = traffic_ring(3)
        grids = [UniformGrid([0.0], [20.0], [100])] * 3

        mu_bar = composition.quantization_matrix(net, grids)

        assert mu_bar[1, 0] == pytest.approx(0.2)
        assert mu_bar[0, 1] == 0.0

    def test_same_grids_are_matched(self, composition, traffic_ring):
        net = traffic_ring(3)
        grids = [UniformGrid([0.0], [20.0], [100])] * 3

        assert composition.mismatched_interfaces(net, grids, grids) == []

    def test_coarser_input_grid_is_mismatched(self, composition, traffic_ring):
        """Test outputs at 0.1, 0.3, ... are not centers of 0.4-wide input cells"""
        net = traffic_ring(3)
        state_grids = [UniformGrid([0.0], [20.0], [100])] * 3
        input_grids = [UniformGrid([0.0], [20.0], [50])] * 3

        mismatched = composition.mismatched_interfaces(net, state_grids, input_grids)

        assert sorted(mismatched) == [(0, 1), (1, 2), (2, 0)]

    def test_single_input_cell_is_mismatched(self, composition, traffic_ring):
        net = traffic_ring(2)
        state_grids = [UniformGrid([0.0], [20.0], [20])] * 2
        input_grids = [UniformGrid([0.0], [20.0], [1])] * 2

        assert len(composition.mismatched_interfaces(net, state_grids, input_grids)) == 2

    def test_outputs_beyond_input_box_are_mismatched(self, composition, traffic_ring):
        net = traffic_ring(2)
        state_grids = [UniformGrid([0.0], [20.0], [100])] * 2
        input_grids = [UniformGrid([0.0], [10.0], [50])] * 2

        assert len(composition.mismatched_interfaces(net, state_grids, input_grids)) == 2

    def test_unmatched_psi_dominates_matched(self, composition):
        certificates = [quadratic_certificate(84.96), quadratic_certificate(84.96)]
        graph = GainGraph(kappa=[0.99, 0.99], gains=[[0.0, 0.5], [0.5, 0.0]])
        result = composition.check_small_gain(graph)
        mu_bar = np.array([[0.0, 0.4], [0.4, 0.0]])
        lambda_bar, delta_f = KInfFn.linear(1.1), KInfFn.linear(0.05)
        coefficient = composition.matched_psi_coefficient(certificates, result.sigma)

        for delta in (0.01, 0.05, 0.2):
            unmatched = composition.unmatched_psi(
                certificates, result.sigma, [delta, delta], mu_bar, lambda_bar, delta_f
            )
            composed = composition.compose_ssf(
                certificates,
                graph,
                result,
                [delta, delta],
                matched_io=False,
                mu_bar=mu_bar,
                lambda_bar=lambda_bar,
                delta_f=delta_f,
            )

            assert unmatched == pytest.approx(composed.psi)
            assert unmatched == pytest.approx(21 * (0.72 * (11 * 0.4) ** 2 + 84.96 * delta**2))
            assert unmatched > coefficient * delta**2
