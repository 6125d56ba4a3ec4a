import hashlib
import os
import struct
import tempfile
from pathlib import Path
from typing import List, Union

import numpy as np

from app.domain.entities.grid import UniformGrid
from app.domain.errors import ArtifactIntegrityError, ArtifactVersionError, MissingArtifactError

DIGEST_SIZE = 32

PathLike = Union[str, Path]


def atomic_write(path: PathLike, data: Union[bytes, str]) -> Path:
    """Write via a temporary sibling and rename, so readers never see partial files"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class BinaryWriter:
    """Little-endian record builder; finish() prepends magic/version and appends a sha256"""

    def __init__(self):
        self.parts: List[bytes] = []

    def u32(self, value: int) -> "BinaryWriter":
        self.parts.append(struct.pack("<I", int(value)))
        return self

    def u64(self, value: int) -> "BinaryWriter":
        self.parts.append(struct.pack("<Q", int(value)))
        return self

    def array(self, values, dtype: str) -> "BinaryWriter":
        self.parts.append(np.ascontiguousarray(values, dtype=np.dtype(dtype)).tobytes())
        return self

    def text(self, value: str) -> "BinaryWriter":
        raw = value.encode()
        self.u32(len(raw))
        self.parts.append(raw)
        return self

    def grid(self, grid: UniformGrid) -> "BinaryWriter":
        self.u32(grid.ndim)
        self.array(grid.lower, "<f8").array(grid.upper, "<f8").array(grid.counts, "<i8")
        return self

    def finish(self, magic: bytes, version: int) -> bytes:
        body = magic + struct.pack("<I", version) + b"".join(self.parts)
        return body + hashlib.sha256(body).digest()


class BinaryReader:
    def __init__(self, data: bytes, magic: bytes, version: int, name: str = "artifact"):
        self.name = name
        header = len(magic) + 4
        if len(data) < header or data[: len(magic)] != magic:
            raise ArtifactIntegrityError(f"{name}: bad magic, not a {magic.decode()} file")
        (found,) = struct.unpack_from("<I", data, len(magic))
        if found != version:
            raise ArtifactVersionError(f"{name}: format version {found}, expected {version}")
        if len(data) < header + DIGEST_SIZE:
            raise ArtifactIntegrityError(f"{name}: file is truncated")
        body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
        if hashlib.sha256(body).digest() != digest:
            raise ArtifactIntegrityError(f"{name}: checksum mismatch (truncated or corrupt)")
        self.data = body
        self.offset = header

    @classmethod
    def open(cls, path: PathLike, magic: bytes, version: int) -> "BinaryReader":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"{path} does not exist")
        return cls(path.read_bytes(), magic, version, str(path))

    def _take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ArtifactIntegrityError(f"{self.name}: unexpected end of data")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def array(self, count: int, dtype: str) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self._take(count * dt.itemsize), dtype=dt).copy()

    def text(self) -> str:
        return self._take(self.u32()).decode()

    def grid(self) -> UniformGrid:
        ndim = self.u32()
        lower = self.array(ndim, "<f8")
        upper = self.array(ndim, "<f8")
        counts = self.array(ndim, "<i8")
        return UniformGrid(lower, upper, counts)

    def done(self) -> None:
        if self.offset != len(self.data):
            raise ArtifactIntegrityError(f"{self.name}: trailing bytes after payload")
