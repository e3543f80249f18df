"""
Atomic writes and advisory lock files for output artifacts
"""
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

from src.utils.errors import IoFailure, TargetLocked
from src.utils.logging import get_logger

logger = get_logger(__name__)


def atomic_write_bytes(path, data: bytes):
    """Write to a temp sibling then rename over the target"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, 'wb') as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp_name, path)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode('utf-8'))


@contextmanager
def write_lock(path):
    """Hold ``<path>.lock`` while writing ``path``"""
    lock_path = Path(f"{path}.lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as e:
        raise TargetLocked(f"{path} is locked by another run ({lock_path})") from e
    except OSError as e:
        raise IoFailure(f"cannot create lock {lock_path}: {e}") from e
    try:
        os.write(fd, str(os.getpid()).encode('ascii'))
        os.close(fd)
        yield lock_path
    finally:
        lock_path.unlink(missing_ok=True)


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
