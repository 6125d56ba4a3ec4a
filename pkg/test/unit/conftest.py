import pytest
import sys
import os
from pathlib import Path
import numpy as np
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from app.db import Base
from app.infrastructure.models.artifact_model import ArtifactModel  # noqa: F401
from app.domain.entities.switched_system import (
    Box,
    ModeDynamics,
    NetworkSpec,
    NoiseKind,
    NoiseModel,
    NonlinearityKind,
    SubsystemSpec,
)

TEST_DATABASE_URL = os.getenv("TEST_DATABASE_URL", "sqlite://")

CONFIG_DIR = project_root / "configs"


@pytest.fixture(scope="function")
def test_db():
    """Fresh registry database for each test"""
    engine = create_engine(
        TEST_DATABASE_URL,
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    Base.metadata.create_all(bind=engine)
    TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    session = TestingSessionLocal()
    try:
        yield session
    finally:
        session.close()
        Base.metadata.drop_all(bind=engine)
        engine.dispose()


def traffic_mode(b: float, p_bar: int = 1) -> ModeDynamics:
    """One traffic cell: x⁺ = 0.39 x + 0.36 w + b + ς"""
    return ModeDynamics(
        A=[[0.39]],
        B=[b],
        D=np.full((1, p_bar), 0.36),
        E=np.zeros((1, 1)),
        F=np.zeros((1, 1)),
        R=np.eye(1),
    )


def traffic_cell(name: str = "cell", sigma: float = 0.83, dwell_time: int = 1) -> SubsystemSpec:
    noise = (
        NoiseModel(NoiseKind.NONE)
        if sigma == 0
        else NoiseModel(NoiseKind.SCALED_NORMAL, [sigma])
    )
    return SubsystemSpec(
        name=name,
        modes=(traffic_mode(0.0), traffic_mode(8.0)),
        C=[[1.0]],
        state_box=Box([0.0], [20.0]),
        input_box=Box([0.0], [20.0]),
        dwell_time=dwell_time,
        noise=noise,
    )


def nonlinear_mode(A, B, p_bar: int = 0) -> ModeDynamics:
    return ModeDynamics(
        A=A,
        B=B,
        D=np.zeros((2, p_bar)),
        E=[[0.1], [0.1]],
        F=[[0.1, 0.1]],
        R=np.eye(2),
        slope_bound=1.0,
        nonlinearity=NonlinearityKind.SINE,
    )


@pytest.fixture
def make_cell():
    """Factory for single traffic cells"""
    return traffic_cell


@pytest.fixture
def traffic_subsystem():
    """Single traffic cell with the published noise level"""
    return traffic_cell()


@pytest.fixture
def traffic_ring():
    """Factory for homogeneous traffic rings"""

    def build(size: int, sigma: float = 0.83) -> NetworkSpec:
        return NetworkSpec.ring([traffic_cell(f"cell-{i}", sigma) for i in range(size)])

    return build


@pytest.fixture
def nonlinear_matrices():
    """Published Lyapunov matrices of the two-mode nonlinear node"""
    return {
        "M": [
            np.array([[1.311, 0.001], [0.001, 0.492]]),
            np.array([[0.4, 0.01], [0.01, 1.49]]),
        ],
        "kappa_bars": [0.7, 0.7],
        "pis": [0.5, 0.4],
    }


@pytest.fixture
def nonlinear_modes():
    return (
        nonlinear_mode([[0.05, 0.0], [0.9, 0.03]], [-0.9, 0.5]),
        nonlinear_mode([[0.02, -1.2], [0.0, 0.05]], [0.9, -0.2]),
    )


@pytest.fixture
def nonlinear_subsystem(nonlinear_modes):
    return SubsystemSpec(
        name="node",
        modes=nonlinear_modes,
        C=np.eye(2),
        state_box=Box([-4.0, -4.0], [4.0, 4.0]),
        input_box=Box(np.zeros(0), np.zeros(0)),
        dwell_time=7,
        noise=NoiseModel(NoiseKind.STANDARD_NORMAL),
    )


@pytest.fixture
def traffic_certificate_path():
    return CONFIG_DIR / "certificates" / "traffic_paper.json"


@pytest.fixture
def tiny_config(traffic_certificate_path, tmp_path):
    """Two-cell traffic ring on coarse grids, small enough for a full pipeline run"""
    return {
        "name": "tiny",
        "output_dir": str(tmp_path / "out"),
        "network": {
            "topology": "ring",
            "size": 2,
            "subsystem": {
                "name": "cell",
                "modes": [
                    {"A": [[0.39]], "D": [[0.36]]},
                    {"A": [[0.39]], "B": [8.0], "D": [[0.36]]},
                ],
                "C": [[1.0]],
                "state_box": {"lower": [0.0], "upper": [20.0]},
                "input_box": {"lower": [0.0], "upper": [20.0]},
                "noise": {"kind": "scaled-normal", "sigma": [0.83]},
            },
        },
        "grid": {"state_counts": [20], "input_counts": [20]},
        "certificate": {"source": "file", "path": str(traffic_certificate_path)},
        "bound": {
            "epsilon": 1.0,
            "horizon": 5,
            "deltas": [0.01, 0.1],
            "initial_state": [10.5],
            "initial_modes": [0],
            "memory": {"width": 20.0, "deltas": [0.02], "subsystems": 200},
        },
        "synthesis": {"safe_box": {"lower": [0.0], "upper": [20.0]}, "horizon": 5},
        "simulation": {"runs": 200, "seed": 3, "initial_state": [10.5], "recorded_runs": 5},
    }
