"""Persistent host-side registry of resources and runs."""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .errors import (
    DuplicateResourceName,
    DuplicateRunName,
    ResourceHasRuns,
    ResourceNotFound,
    RunNotFound,
)
from .models import ResourceRecord, RunRecord, StateDocument, run_key
from .persistence import LockedDocument

logger = logging.getLogger(__name__)


class StateStore:
    """Registry of resources (by name) and runs (by resource/job/run triple).

    The in-memory view is refreshed from disk on every read and every
    mutation, so several CLI processes can share one store.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self._document = LockedDocument(self.path, StateDocument)
        self._snapshot = self._document.read()

    # Views --------------------------------------------------------------

    def refresh(self) -> "StateStore":
        self._snapshot = self._document.read()
        return self

    @property
    def version(self) -> int:
        return self._snapshot.version

    @property
    def resources(self) -> Dict[str, ResourceRecord]:
        return self._snapshot.resources

    @property
    def runs(self) -> Dict[str, RunRecord]:
        return self._snapshot.runs

    def raw_bytes(self) -> Optional[bytes]:
        return self._document.read_bytes()

    # Mutations ----------------------------------------------------------

    def update(self, mutator: Callable[[StateDocument], None]) -> "StateStore":
        """Run mutator as one locked read-modify-write; version increments by one."""
        self._snapshot = self._document.update(mutator)
        return self

    def register_resource(self, record: ResourceRecord) -> "StateStore":
        def add(document: StateDocument) -> None:
            if record.name in document.resources:
                raise DuplicateResourceName(f"Resource '{record.name}' already exists")
            document.resources[record.name] = record

        self.update(add)
        logger.info(f"Registered resource {record.name} ({record.size} instance(s))")
        return self

    def register_run(self, run: RunRecord) -> "StateStore":
        def add(document: StateDocument) -> None:
            add_run(document, run)

        self.update(add)
        logger.info(f"Registered run {run.key}")
        return self

    def remove_resource(self, name: str) -> "StateStore":
        """Drop a resource record that has no runs. Terminated resources are normally tombstoned instead."""
        def drop(document: StateDocument) -> None:
            get_resource(document, name)
            runs = sorted(run.run_name for run in document.runs.values() if run.resource == name)
            if runs:
                raise ResourceHasRuns(f"Resource '{name}' still has run(s) {', '.join(runs)}")
            del document.resources[name]

        return self.update(drop)

    # Lookups ------------------------------------------------------------

    def lookup_resource(self, name: str) -> ResourceRecord:
        self.refresh()
        return get_resource(self._snapshot, name)

    def lookup_run(self, resource: str, job: str, run_name: str) -> RunRecord:
        self.refresh()
        return get_run(self._snapshot, resource, job, run_name)

    def runs_for(self, resource: str, job: Optional[str] = None) -> List[RunRecord]:
        self.refresh()
        return [
            run for run in self._snapshot.runs.values()
            if run.resource == resource and (job is None or run.job == job)
        ]


def add_run(document: StateDocument, run: RunRecord) -> None:
    if run.key in document.runs:
        raise DuplicateRunName(
            f"Run '{run.run_name}' already exists for job '{run.job}' on resource '{run.resource}'"
        )
    document.runs[run.key] = run


def get_resource(document: StateDocument, name: str) -> ResourceRecord:
    try:
        return document.resources[name]
    except KeyError:
        raise ResourceNotFound(f"Resource '{name}' not found")


def get_run(document: StateDocument, resource: str, job: str, run_name: str) -> RunRecord:
    try:
        return document.runs[run_key(resource, job, run_name)]
    except KeyError:
        raise RunNotFound(f"Run '{run_name}' not found for job '{job}' on resource '{resource}'")


def open_state(config) -> StateStore:
    """Open (or lazily create) the store at config.state_path."""
    store = StateStore(config.state_path)
    logger.debug(f"Opened state store {config.state_path} at version {store.version}")
    return store
