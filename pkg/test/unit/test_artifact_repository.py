import pytest
from app.domain.entities.artifact import Artifact, ArtifactKind, Stage
from app.domain.errors import MissingArtifactError
from app.infrastructure.repositories.artifact_repository import ArtifactRepository

DIGEST = "ab" * 32


def make_artifact(run_name="traffic", kind=ArtifactKind.MDP, subsystem=0, path="runs/a.fmdp", stage=Stage.ABSTRACT):
    return Artifact(
        id=None,
        run_name=run_name,
        stage=stage,
        kind=kind,
        path=path,
        sha256=DIGEST,
        subsystem=subsystem,
    )


class TestArtifactRepository:
    """Unit tests for ArtifactRepository"""

    def test_create_artifact(self, test_db):
        """Test recording an artifact"""
        repository = ArtifactRepository(test_db)

        artifact = repository.create(make_artifact())

        assert artifact.id is not None
        assert artifact.stage == Stage.ABSTRACT
        assert artifact.kind == ArtifactKind.MDP
        assert artifact.created_at is not None

    def test_get_latest_prefers_newest(self, test_db):
        """Test the most recent artifact of a kind wins"""
        repository = ArtifactRepository(test_db)
        repository.create(make_artifact(path="runs/old.fmdp"))
        repository.create(make_artifact(path="runs/new.fmdp"))

        latest = repository.get_latest("traffic", ArtifactKind.MDP, 0)

        assert latest.path == "runs/new.fmdp"

    def test_get_latest_filters_subsystem_and_run(self, test_db):
        repository = ArtifactRepository(test_db)
        repository.create(make_artifact(subsystem=0, path="runs/zero.fmdp"))
        repository.create(make_artifact(subsystem=1, path="runs/one.fmdp"))
        repository.create(make_artifact(run_name="other", subsystem=0, path="runs/other.fmdp"))

        assert repository.get_latest("traffic", ArtifactKind.MDP, 0).path == "runs/zero.fmdp"
        assert repository.get_latest("traffic", ArtifactKind.MDP, 1).path == "runs/one.fmdp"
        assert repository.get_latest("traffic", ArtifactKind.POLICY) is None

    def test_require_missing_artifact(self, test_db):
        """Test that a missing upstream artifact raises"""
        repository = ArtifactRepository(test_db)

        with pytest.raises(MissingArtifactError, match="run the upstream stage first"):
            repository.require("traffic", ArtifactKind.COMPOSITION)

    def test_get_by_run_in_creation_order(self, test_db):
        repository = ArtifactRepository(test_db)
        repository.create(make_artifact())
        repository.create(
            make_artifact(kind=ArtifactKind.CERTIFICATE, path="runs/c.json", stage=Stage.CERTIFY)
        )

        artifacts = repository.get_by_run("traffic")

        assert [a.kind for a in artifacts] == [ArtifactKind.MDP, ArtifactKind.CERTIFICATE]

    def test_delete_run(self, test_db):
        repository = ArtifactRepository(test_db)
        repository.create(make_artifact())
        repository.create(make_artifact(subsystem=1))
        repository.create(make_artifact(run_name="other"))

        assert repository.delete_run("traffic") == 2
        assert repository.get_by_run("traffic") == []
        assert len(repository.get_by_run("other")) == 1

    def test_invalid_digest_rejected(self):
        with pytest.raises(ValueError, match="sha256"):
            Artifact(
                id=None,
                run_name="traffic",
                stage=Stage.ABSTRACT,
                kind=ArtifactKind.MDP,
                path="runs/a.fmdp",
                sha256="abc",
            )
