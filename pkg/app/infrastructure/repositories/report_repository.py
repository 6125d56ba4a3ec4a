import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import numpy as np

from app.domain.entities.bound import ClosenessRow, MemoryRow
from app.domain.entities.certificate import SpsfCertificate
from app.domain.entities.policy import Policy
from app.domain.entities.rollout import Trajectories
from app.domain.errors import ArtifactIntegrityError, MissingArtifactError
from app.infrastructure.repositories.binary_format import PathLike, atomic_write


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


class ReportRepository:
    """Atomic JSON and CSV outputs under one run directory"""

    def __init__(self, root: PathLike):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_json(self, name: str, payload: Any) -> Path:
        text = json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n"
        return atomic_write(self.path(name), text)

    def read_json(self, path: PathLike) -> Any:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"{path} does not exist")
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ArtifactIntegrityError(f"{path}: invalid JSON ({e})")

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        out = csv.writer(buffer, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return atomic_write(self.path(name), buffer.getvalue())

    def save_certificate(self, name: str, certificate: SpsfCertificate) -> Path:
        return self.write_json(name, certificate.to_dict())

    def load_certificate(self, path: PathLike) -> SpsfCertificate:
        return SpsfCertificate.from_dict(self.read_json(path))

    def write_closeness(self, name: str, rows: List[ClosenessRow]) -> Path:
        return self.write_csv(
            name,
            ["delta", "psi", "branch", "guarantee", "reference"],
            [
                [r.delta, r.psi, r.branch, r.guarantee, "" if r.reference is None else r.reference]
                for r in rows
            ],
        )

    def write_memory(self, name: str, rows: List[MemoryRow]) -> Path:
        return self.write_csv(
            name,
            ["delta", "n_x", "n_w", "modes", "subsystems", "per_subsystem_gb", "monolithic_log10_gb"],
            [
                [r.delta, r.n_x, r.n_w, r.modes, r.subsystems, r.per_subsystem_gb, r.monolithic_log10_gb]
                for r in rows
            ],
        )

    def write_values(self, name: str, policy: Policy, step: int = 0) -> Path:
        """Value and choice slice at one step, one line per (x̂, p, l)"""
        centers = policy.grid.centers()
        rows = []
        for cell in range(policy.grid.size):
            for p in range(policy.mode_count):
                for l in range(policy.dwell_time):
                    choice = int(policy.choice[step, cell, p, l]) if step < policy.horizon else p
                    rows.append(
                        [cell, *[float(c) for c in centers[cell]], p, l, choice, float(policy.value[step, cell, p, l])]
                    )
        coords = [f"x{d}" for d in range(policy.grid.ndim)]
        return self.write_csv(name, ["cell", *coords, "mode", "counter", "choice", "value"], rows)

    def write_trajectories(self, name: str, trajectories: Trajectories, max_runs: int = 100) -> Path:
        """run, k, concrete state coordinates, abstract outputs, modes, counters"""
        runs = min(max_runs, trajectories.runs)
        n = trajectories.states.shape[2]
        q = trajectories.abstract.shape[2]
        N = trajectories.modes.shape[2]
        header = (
            ["run", "k"]
            + [f"x{d}" for d in range(n)]
            + [f"y_hat{d}" for d in range(q)]
            + [f"mode{i}" for i in range(N)]
            + [f"counter{i}" for i in range(N)]
        )
        rows = []
        for r in range(runs):
            for k in range(trajectories.horizon + 1):
                rows.append(
                    [r, k]
                    + [float(v) for v in trajectories.states[r, k]]
                    + [float(v) for v in trajectories.abstract[r, k]]
                    + [int(v) for v in trajectories.modes[r, k]]
                    + [int(v) for v in trajectories.counters[r, k]]
                )
        return self.write_csv(name, header, rows)
