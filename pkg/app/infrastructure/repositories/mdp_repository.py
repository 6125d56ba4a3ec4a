import csv
import io
import logging
from pathlib import Path
from typing import Optional

from scipy import sparse

from app.domain.entities.finite_mdp import FiniteMdp
from app.infrastructure.repositories.binary_format import (
    BinaryReader,
    BinaryWriter,
    PathLike,
    atomic_write,
)

logger = logging.getLogger(__name__)

MDP_MAGIC = b"FMDP"
MDP_VERSION = 1


class MdpRepository:
    """Binary .fmdp persistence: header, grids, CSR offsets, (index, f64) pairs, absorbing mass"""

    def save(self, mdp: FiniteMdp, path: PathLike) -> Path:
        csr = mdp.transitions
        writer = (
            BinaryWriter()
            .grid(mdp.state_grid)
            .grid(mdp.input_grid)
            .u32(mdp.mode_count)
            .u32(mdp.dwell_time)
            .text(mdp.fingerprint or "")
            .u64(mdp.row_count)
            .u64(csr.nnz)
            .array(csr.indptr, "<i8")
            .array(csr.indices, "<i8")
            .array(csr.data, "<f8")
            .array(mdp.absorbing, "<f8")
        )
        written = atomic_write(path, writer.finish(MDP_MAGIC, MDP_VERSION))
        logger.info("saved abstraction to %s (%d entries)", written, csr.nnz)
        return written

    def load(self, path: PathLike) -> FiniteMdp:
        reader = BinaryReader.open(path, MDP_MAGIC, MDP_VERSION)
        state_grid = reader.grid()
        input_grid = reader.grid()
        mode_count = reader.u32()
        dwell_time = reader.u32()
        fingerprint = reader.text() or None
        rows = reader.u64()
        nnz = reader.u64()
        indptr = reader.array(rows + 1, "<i8")
        indices = reader.array(nnz, "<i8")
        data = reader.array(nnz, "<f8")
        absorbing = reader.array(rows, "<f8")
        reader.done()
        transitions = sparse.csr_matrix((data, indices, indptr), shape=(rows, state_grid.size))
        return FiniteMdp(
            state_grid=state_grid,
            input_grid=input_grid,
            mode_count=mode_count,
            transitions=transitions,
            absorbing=absorbing,
            dwell_time=dwell_time,
            fingerprint=fingerprint,
        )

    def export_rows_csv(self, mdp: FiniteMdp, path: PathLike, limit: Optional[int] = None) -> Path:
        """Debug dump: one line per stored entry of the first `limit` rows"""
        buffer = io.StringIO()
        out = csv.writer(buffer, lineterminator="\n")
        out.writerow(["row", "x_cell", "mode", "w_cell", "target", "probability", "absorbing"])
        csr = mdp.transitions
        last = mdp.row_count if limit is None else min(limit, mdp.row_count)
        for row in range(last):
            x_cell, mode, w_cell = mdp.row_coordinates(row)
            start, end = csr.indptr[row], csr.indptr[row + 1]
            for target, probability in zip(csr.indices[start:end], csr.data[start:end]):
                out.writerow(
                    [row, x_cell, mode, w_cell, int(target), repr(float(probability)), repr(float(mdp.absorbing[row]))]
                )
        return atomic_write(path, buffer.getvalue())
