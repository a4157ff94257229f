"""File-backed pydantic documents with advisory locking and atomic writes."""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable, Generic, Optional, Type, TypeVar

from filelock import FileLock
from pydantic import BaseModel, ValidationError

from .errors import CorruptState

logger = logging.getLogger(__name__)

T = TypeVar("T", bound=BaseModel)

LOCK_TIMEOUT_SECONDS = 120


class LockedDocument(Generic[T]):
    """A single JSON document guarded by a sibling ``.lock`` file.

    Mutations run read-modify-write under the exclusive lock and bump the
    document's ``version``. Readers skip the lock: writes land through
    ``os.replace`` so a reader always sees a complete document.
    """

    def __init__(self, path: Path, model: Type[T]):
        self.path = Path(path)
        self.model = model
        self.lock_path = self.path.with_name(self.path.name + ".lock")

    def _lock(self) -> FileLock:
        # A fresh FileLock per call: flock conflicts between separate fds,
        # so threads of one process exclude each other too.
        self.path.parent.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.lock_path), timeout=LOCK_TIMEOUT_SECONDS)

    def exists(self) -> bool:
        return self.path.is_file()

    def read(self) -> T:
        """Current document, or an empty one (version 0) if none was written yet."""
        if not self.path.exists():
            return self.model()
        try:
            raw = self.path.read_text(encoding="utf-8")
            return self.model.model_validate(json.loads(raw))
        except (OSError, UnicodeDecodeError, json.JSONDecodeError, ValidationError) as e:
            raise CorruptState(f"Unreadable document {self.path}: {e}")

    def read_bytes(self) -> Optional[bytes]:
        return self.path.read_bytes() if self.path.exists() else None

    def update(self, mutator: Callable[[T], None]) -> T:
        """Apply mutator under the exclusive lock and persist the result.

        If the mutator raises, nothing is written.
        """
        with self._lock():
            document = self.read()
            mutator(document)
            document.version += 1
            self._atomic_write(document)
            logger.debug(f"Wrote {self.path.name} version {document.version}")
            return document

    def _atomic_write(self, document: T) -> None:
        parent = self.path.parent
        fd, tmp_path = tempfile.mkstemp(dir=str(parent), prefix=f".{self.path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(document.model_dump(mode="json"), handle, indent=2, sort_keys=True)
                handle.write("\n")
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_path, self.path)
        except BaseException:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise
