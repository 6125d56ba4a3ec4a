import csv
import pytest
import numpy as np
from app.domain.entities.grid import UniformGrid
from app.domain.entities.policy import Policy
from app.domain.errors import ArtifactIntegrityError, ArtifactVersionError, MissingArtifactError
from app.domain.services.abstraction_service import AbstractionService
from app.domain.services.dynamics_service import DynamicsService
from app.domain.services.grid_service import GridService
from app.infrastructure.repositories.binary_format import BinaryWriter, sha256_file
from app.infrastructure.repositories.mdp_repository import MDP_MAGIC, MdpRepository
from app.infrastructure.repositories.policy_repository import PolicyRepository


@pytest.fixture
def small_mdp(traffic_subsystem):
    grids = GridService()
    state_grid = grids.build_grid(traffic_subsystem.state_box, 2.0)
    input_grid = grids.build_grid(traffic_subsystem.input_box, 10.0)
    return AbstractionService(DynamicsService()).build_finite_mdp(traffic_subsystem, state_grid, input_grid)


@pytest.fixture
def small_policy():
    grid = UniformGrid([0.0], [3.0], [3])
    choice = np.zeros((2, 3, 2, 2), dtype=np.int8)
    choice[:, :, 1, 0] = 1
    choice[:, :, 0, 1] = 1
    value = np.linspace(0.0, 1.0, 3 * 3 * 2 * 2).reshape(3, 3, 2, 2)
    return Policy(choice=choice, value=value, grid=grid, dwell_time=2, fingerprint="abc")


class TestMdpRepository:
    """Unit tests for the .fmdp binary format"""

    def test_save_and_load(self, small_mdp, tmp_path):
        """Test that a saved abstraction loads back entry for entry"""
        repository = MdpRepository()
        path = repository.save(small_mdp, tmp_path / "cell.fmdp")

        loaded = repository.load(path)

        assert loaded.state_grid.same_as(small_mdp.state_grid)
        assert loaded.input_grid.same_as(small_mdp.input_grid)
        assert loaded.mode_count == 2
        assert loaded.dwell_time == small_mdp.dwell_time
        assert loaded.fingerprint == small_mdp.fingerprint
        assert (loaded.transitions != small_mdp.transitions).nnz == 0
        assert np.array_equal(loaded.absorbing, small_mdp.absorbing)

    def test_truncated_file(self, small_mdp, tmp_path):
        """Test that a cut-off file fails the checksum"""
        path = MdpRepository().save(small_mdp, tmp_path / "cell.fmdp")
        path.write_bytes(path.read_bytes()[:-50])

        with pytest.raises(ArtifactIntegrityError):
            MdpRepository().load(path)

    def test_flipped_byte(self, small_mdp, tmp_path):
        path = MdpRepository().save(small_mdp, tmp_path / "cell.fmdp")
        raw = bytearray(path.read_bytes())
        raw[40] ^= 0xFF
        path.write_bytes(bytes(raw))

        with pytest.raises(ArtifactIntegrityError):
            MdpRepository().load(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "other.fmdp"
        path.write_bytes(BinaryWriter().u32(1).finish(b"XXXX", 1))

        with pytest.raises(ArtifactIntegrityError, match="bad magic"):
            MdpRepository().load(path)

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "future.fmdp"
        path.write_bytes(BinaryWriter().u32(1).finish(MDP_MAGIC, 99))

        with pytest.raises(ArtifactVersionError):
            MdpRepository().load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            MdpRepository().load(tmp_path / "absent.fmdp")

    def test_identical_content_has_identical_digest(self, small_mdp, tmp_path):
        repository = MdpRepository()

        first = repository.save(small_mdp, tmp_path / "a.fmdp")
        second = repository.save(small_mdp, tmp_path / "b.fmdp")

        assert sha256_file(first) == sha256_file(second)

    def test_export_rows_csv(self, small_mdp, tmp_path):
        """Test the row dump lists every stored entry of the requested rows"""
        path = MdpRepository().export_rows_csv(small_mdp, tmp_path / "rows.csv", limit=3)

        with open(path, newline="") as handle:
            rows = list(csv.DictReader(handle))

        expected = int(small_mdp.transitions.indptr[3])
        assert len(rows) == expected
        assert {int(r["row"]) for r in rows} <= {0, 1, 2}
        first = rows[0]
        assert small_mdp.row_index(int(first["x_cell"]), int(first["mode"]), int(first["w_cell"])) == int(
            first["row"]
        )


class TestPolicyRepository:
    """Unit tests for the binary policy format"""

    def test_save_and_load(self, small_policy, tmp_path):
        repository = PolicyRepository()
        path = repository.save(small_policy, tmp_path / "policy.bin")

        loaded = repository.load(path)

        assert np.array_equal(loaded.choice, small_policy.choice)
        assert np.array_equal(loaded.value, small_policy.value)
        assert loaded.grid.same_as(small_policy.grid)
        assert loaded.dwell_time == 2
        assert loaded.fingerprint == "abc"

    def test_truncated_policy(self, small_policy, tmp_path):
        path = PolicyRepository().save(small_policy, tmp_path / "policy.bin")
        path.write_bytes(path.read_bytes()[:30])

        with pytest.raises(ArtifactIntegrityError):
            PolicyRepository().load(path)

    def test_abstraction_is_not_a_policy(self, small_mdp, tmp_path):
        path = MdpRepository().save(small_mdp, tmp_path / "cell.fmdp")

        with pytest.raises(ArtifactIntegrityError):
            PolicyRepository().load(path)

    def test_policy_with_early_switch_rejected(self, small_policy):
        choice = small_policy.choice.copy()
        choice[0, 0, 0, 0] = 1

        with pytest.raises(ValueError, match="dwell time"):
            Policy(choice=choice, value=small_policy.value, grid=small_policy.grid, dwell_time=2)
