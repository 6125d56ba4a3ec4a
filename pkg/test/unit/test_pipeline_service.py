import copy
import csv
import json
from pathlib import Path
import pytest
from app.domain.entities.artifact import ArtifactKind
from app.domain.entities.certificate import Provenance
from app.domain.entities.kinf import KInfFn
from app.domain.errors import (
    ArtifactIntegrityError,
    CompositionError,
    InvalidInputError,
    MissingArtifactError,
)
from app.infrastructure.dependencies import build_pipeline_service
from app.presentation.cli.config_schemas import ProjectBuilder, load_config, parse_config, read_config

CONFIG_DIR = Path(__file__).parent.parent.parent / "configs"


@pytest.mark.integration
class TestPipelineService:
    """Unit tests for the staged pipeline on a two-cell ring"""

    @pytest.fixture
    def pipeline(self, test_db):
        return build_pipeline_service(test_db)

    @pytest.fixture
    def build(self, tmp_path):
        def _build(config):
            return ProjectBuilder(tmp_path).build_project(parse_config(config))

        return _build

    @pytest.fixture
    def project(self, build, tiny_config):
        return build(tiny_config)

    def test_full_run_writes_summary(self, pipeline, project):
        """Test a complete run leaves every stage output and a summary with checks"""
        summary = pipeline.run(project)

        out = project.out_dir
        for name in ("composition.json", "bound.json", "closeness.csv", "memory.csv", "trajectories.csv", "monte_carlo.json"):
            assert (out / name).exists()
        written = json.loads((out / "summary.json").read_text())
        assert written["run"] == "tiny"
        assert written["small_gain"]["feasible"] is True
        assert summary["checks"]["deviation_within_bound"] is True
        assert "subsystem_0_safety_above_value" in summary["checks"]
        assert 0.0 <= summary["bound"]["guarantee"] <= 1.0

    def test_identical_subsystems_share_files(self, pipeline, project):
        pipeline.abstract(project)

        assert len(list((project.out_dir / "mdp").glob("*.fmdp"))) == 1
        records = pipeline.artifacts.get_by_run("tiny")
        assert [a.subsystem for a in records] == [0, 1]
        assert records[0].path == records[1].path

    def test_loaded_abstractions_match_built(self, pipeline, project):
        built = pipeline.abstract(project)

        loaded = pipeline.load_abstractions(project)

        assert loaded[0].fingerprint == built[0].fingerprint
        assert loaded[0] is loaded[1]

    def test_compose_before_certify(self, pipeline, project):
        """Test a stage refuses to run without its upstream artifacts"""
        with pytest.raises(MissingArtifactError):
            pipeline.compose(project)

    def test_bound_before_compose(self, pipeline, project):
        pipeline.abstract(project)
        pipeline.certify(project)

        with pytest.raises(MissingArtifactError):
            pipeline.bound(project)

    def test_infeasible_composition_is_reported(self, pipeline, build, tiny_config):
        """Test a failing small-gain condition raises and still writes the diagnosis"""
        config = copy.deepcopy(tiny_config)
        config["composition"] = {"lambda_bar": 1.5}
        project = build(config)
        pipeline.certify(project)

        with pytest.raises(CompositionError, match="small-gain condition fails"):
            pipeline.compose(project)

        written = json.loads((project.out_dir / "composition.json").read_text())
        assert written["small_gain"]["feasible"] is False
        assert sorted(written["small_gain"]["witness_cycle"]) == [0, 1]
        assert pipeline.artifacts.get_latest("tiny", ArtifactKind.COMPOSITION) is None

    def test_modified_upstream_file(self, pipeline, project):
        pipeline.certify(project)
        path = project.out_dir / "certificates" / "subsystem_0.json"
        path.write_text(path.read_text() + "\n")

        with pytest.raises(ArtifactIntegrityError, match="changed since the certify stage"):
            pipeline.compose(project)

    def test_derived_certificates(self, pipeline, build, tiny_config):
        """Test certificates derived from Lyapunov matrices are stored per subsystem"""
        config = copy.deepcopy(tiny_config)
        config["certificate"] = {
            "source": "derive",
            "matrices": [[[1.0]], [[1.0]]],
            "kappa_bars": [0.42, 0.42],
            "pis": [0.85, 0.85],
            "common_lyapunov": True,
        }
        project = build(config)

        certificates = pipeline.certify(project)

        assert all(c.provenance == Provenance.DERIVED for c in certificates)
        assert certificates[0].kappa <= project.kappa_ceiling
        restored = pipeline.load_certificates(project)
        assert restored[1].rho_int == certificates[1].rho_int

    def test_synthesize_needs_section(self, pipeline, build, tiny_config):
        config = copy.deepcopy(tiny_config)
        del config["synthesis"]
        project = build(config)

        with pytest.raises(InvalidInputError, match="no synthesis section"):
            pipeline.synthesize(project)

    def test_rerun_forgets_earlier_artifacts(self, pipeline, project):
        pipeline.run(project)
        first = len(pipeline.artifacts.get_by_run("tiny"))

        pipeline.run(project)

        assert len(pipeline.artifacts.get_by_run("tiny")) == first

    @pytest.mark.slow
    def test_traffic_ring_bound(self, pipeline, tmp_path):
        """Test the bundled five-cell traffic ring composes with unit scalings"""
        data = read_config(CONFIG_DIR / "traffic.json")
        data["output_dir"] = str(tmp_path)
        project = ProjectBuilder(CONFIG_DIR).build_project(parse_config(data))
        pipeline.abstract(project)
        pipeline.certify(project)

        composition = pipeline.compose(project)
        bound = pipeline.bound(project)

        assert composition["small_gain"]["identity_sigma"] is True
        assert composition["small_gain"]["max_cycle_gain"] == pytest.approx(0.99)
        assert 0.0 <= bound["guarantee"] <= 1.0

    def test_false_matched_claim_is_rejected(self, pipeline, build, tiny_config):
        """Test compose refuses matched interfaces when outputs miss the input-grid centers"""
        config = copy.deepcopy(tiny_config)
        config["grid"] = {"state_counts": [20], "input_counts": [10]}
        config["composition"] = {"matched_io": True}
        project = build(config)
        pipeline.certify(project)

        with pytest.raises(CompositionError, match="not input-grid centers"):
            pipeline.compose(project)

        assert pipeline.artifacts.get_latest("tiny", ArtifactKind.COMPOSITION) is None

    @pytest.mark.parametrize("name", ["traffic.json", "nonlinear500.json"])
    def test_bundled_matched_claims_hold(self, pipeline, name):
        project = ProjectBuilder(CONFIG_DIR).build_project(load_config(CONFIG_DIR / name))
        state_grids = [pipeline.state_grid(s, p) for s, p in zip(project.network.subsystems, project.grids)]
        input_grids = [pipeline.input_grid(s, p) for s, p in zip(project.network.subsystems, project.grids)]

        mismatched = pipeline.composition.mismatched_interfaces(project.network, state_grids, input_grids)

        assert project.matched_io == (mismatched == [])

    def test_unmatched_table_requantizes_inputs(self, pipeline, build, tiny_config):
        """Test the closeness table of unmatched interfaces carries the μ̄ term at every δ̄"""
        config = copy.deepcopy(tiny_config)
        config["grid"] = {"state_counts": [20], "input_counts": [10]}
        config["composition"] = {"lambda_bar": 1.1, "delta_f": 0.05, "matched_io": False}
        project = build(config)
        pipeline.certify(project)

        composition = pipeline.compose(project)
        pipeline.bound(project)

        assert composition["mu_bar"] == [[0.0, 2.0], [2.0, 0.0]]
        certificates = pipeline.load_certificates(project)
        with open(project.out_dir / "closeness.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert [float(r["delta"]) for r in rows] == [0.01, 0.1]
        for row in rows:
            delta = float(row["delta"])
            expected = pipeline.composition.unmatched_psi(
                certificates,
                composition["composed"]["sigma"],
                [delta, delta],
                composition["mu_bar"],
                KInfFn.linear(1.1),
                KInfFn.linear(0.05),
            )
            assert float(row["psi"]) == pytest.approx(expected)
            assert float(row["psi"]) > composition["psi_coefficient"] * delta**2
            assert float(row["guarantee"]) == pytest.approx(0.0)

    @pytest.mark.slow
    def test_traffic_pair_bound_is_conservative(self, pipeline, tmp_path):
        """Test a non-trivial closeness guarantee against Monte Carlo on a two-cell traffic ring"""
        data = read_config(CONFIG_DIR / "traffic.json")
        data["output_dir"] = str(tmp_path)
        data["network"]["size"] = 2
        data["bound"]["epsilon"] = 6.0
        data["bound"]["horizon"] = 5
        data["synthesis"]["horizon"] = 5
        data["simulation"]["runs"] = 4000
        project = ProjectBuilder(CONFIG_DIR).build_project(parse_config(data))

        summary = pipeline.run(project)

        bound = summary["bound"]
        assert bound["v0"] == pytest.approx(0.0, abs=1e-12)
        assert bound["psi"] == pytest.approx(84.96 * 0.2**2)
        assert bound["branch"] == 1
        assert bound["guarantee"] == pytest.approx(0.6091, abs=1e-3)
        deviation = summary["monte_carlo"]["deviation"]
        assert deviation["fraction"] <= bound["failure_bound"] + 3 * deviation["standard_error"]
        for estimate in summary["monte_carlo"]["subsystem_safety"]:
            abstract = estimate["abstract"]
            assert abstract["fraction"] >= estimate["dp_value"] - 3 * abstract["standard_error"]
        assert all(summary["checks"].values())
