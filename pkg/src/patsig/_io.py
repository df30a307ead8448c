"""Small binary-format and atomic-write helpers shared by the artifact files."""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

from .errors import TruncatedError


@contextmanager
def atomic_write(path, mode: str = "wb"):
    """Write to a temp file in the target directory, then rename into place.

    An interrupted write never leaves a partial artifact at the final path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        umask = os.umask(0)
        os.umask(umask)
        os.fchmod(fd, 0o666 & ~umask)
        with os.fdopen(fd, mode) as handle:
            yield handle
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


class Reader:
    """Cursor over a bytes buffer with offset-tagged truncation errors."""

    def __init__(self, data: bytes, name: str = "<bytes>"):
        self.data = data
        self.name = name
        self.offset = 0

    def take(self, n: int) -> bytes:
        end = self.offset + n
        if end > len(self.data):
            raise TruncatedError(
                f"{self.name}: truncated at offset {self.offset} (needed {n} bytes, "
                f"{len(self.data) - self.offset} remain)"
            )
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def remaining(self) -> int:
        return len(self.data) - self.offset


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
