import logging
from pathlib import Path

import numpy as np

from app.domain.entities.policy import Policy
from app.infrastructure.repositories.binary_format import (
    BinaryReader,
    BinaryWriter,
    PathLike,
    atomic_write,
)

logger = logging.getLogger(__name__)

POLICY_MAGIC = b"SPOL"
POLICY_VERSION = 1


class PolicyRepository:
    """Versioned binary policy: dims, k_d, horizon, grid, int8 choices, f64 values"""

    def save(self, policy: Policy, path: PathLike) -> Path:
        horizon, n_x, m, k_d = policy.choice.shape
        writer = (
            BinaryWriter()
            .u32(horizon)
            .u64(n_x)
            .u32(m)
            .u32(k_d)
            .grid(policy.grid)
            .text(policy.fingerprint)
            .array(policy.choice, "<i1")
            .array(policy.value, "<f8")
        )
        written = atomic_write(path, writer.finish(POLICY_MAGIC, POLICY_VERSION))
        logger.info("saved policy to %s", written)
        return written

    def load(self, path: PathLike) -> Policy:
        reader = BinaryReader.open(path, POLICY_MAGIC, POLICY_VERSION)
        horizon = reader.u32()
        n_x = reader.u64()
        m = reader.u32()
        k_d = reader.u32()
        grid = reader.grid()
        fingerprint = reader.text()
        choice = reader.array(horizon * n_x * m * k_d, "<i1").reshape(horizon, n_x, m, k_d)
        value = reader.array((horizon + 1) * n_x * m * k_d, "<f8").reshape(horizon + 1, n_x, m, k_d)
        reader.done()
        return Policy(
            choice=choice.astype(np.int8),
            value=value,
            grid=grid,
            dwell_time=k_d,
            fingerprint=fingerprint,
        )
