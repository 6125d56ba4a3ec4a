from typing import List, Optional
from app.domain.entities.artifact import Artifact, ArtifactKind, Stage
from app.domain.errors import MissingArtifactError
from app.infrastructure.models.artifact_model import ArtifactModel
from sqlalchemy.orm import Session


class ArtifactRepository:
    """Repository for the stage artifact registry"""

    def __init__(self, db: Session):
        self.db = db

    def _model_to_entity(self, model: ArtifactModel) -> Artifact:
        """Convert ArtifactModel to Artifact domain entity"""
        return Artifact(
            id=model.id,
            run_name=model.run_name,
            stage=Stage(model.stage),
            kind=ArtifactKind(model.kind),
            path=model.path,
            sha256=model.sha256,
            subsystem=model.subsystem,
            created_at=model.created_at,
        )

    def create(self, artifact: Artifact) -> Artifact:
        """Record a new artifact"""
        try:
            artifact_model = ArtifactModel(
                run_name=artifact.run_name,
                stage=artifact.stage.value,
                kind=artifact.kind.value,
                subsystem=artifact.subsystem,
                path=artifact.path,
                sha256=artifact.sha256,
            )
            self.db.add(artifact_model)
            self.db.commit()
            self.db.refresh(artifact_model)
            return self._model_to_entity(artifact_model)
        except Exception as e:
            self.db.rollback()
            raise e

    def get_latest(
        self, run_name: str, kind: ArtifactKind, subsystem: Optional[int] = None
    ) -> Optional[Artifact]:
        """Most recent artifact of a kind for a run (and subsystem)"""
        query = self.db.query(ArtifactModel).filter(
            ArtifactModel.run_name == run_name, ArtifactModel.kind == kind.value
        )
        if subsystem is not None:
            query = query.filter(ArtifactModel.subsystem == subsystem)
        model = query.order_by(ArtifactModel.id.desc()).first()
        if not model:
            return None
        return self._model_to_entity(model)

    def require(
        self, run_name: str, kind: ArtifactKind, subsystem: Optional[int] = None
    ) -> Artifact:
        """Like get_latest but raises when the upstream stage has not run"""
        artifact = self.get_latest(run_name, kind, subsystem)
        if artifact is None:
            where = "" if subsystem is None else f" for subsystem {subsystem}"
            raise MissingArtifactError(
                f"no {kind.value} artifact{where} in run '{run_name}'; run the upstream stage first"
            )
        return artifact

    def get_by_run(self, run_name: str) -> List[Artifact]:
        """All artifacts of a run in creation order"""
        models = (
            self.db.query(ArtifactModel)
            .filter(ArtifactModel.run_name == run_name)
            .order_by(ArtifactModel.id)
            .all()
        )
        return [self._model_to_entity(model) for model in models]

    def delete_run(self, run_name: str) -> int:
        """Forget every artifact of a run"""
        try:
            count = (
                self.db.query(ArtifactModel)
                .filter(ArtifactModel.run_name == run_name)
                .delete()
            )
            self.db.commit()
            return count
        except Exception as e:
            self.db.rollback()
            raise e
