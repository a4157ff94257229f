"""Pydantic models for resources, runs, provider records and sync plans.

Persisted through LockedDocument; use model_dump(mode='json') for proper
datetime serialization.
"""

import logging
import re
from datetime import datetime
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import VolumeSpecConflict

logger = logging.getLogger(__name__)

NAME_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")

PHASES: Tuple[str, ...] = ("gather", "submit", "execute", "retrieve", "terminate")


def is_valid_name(name: str) -> bool:
    """Resource and run names become path segments and key components."""
    return bool(name) and bool(NAME_PATTERN.match(name))


def run_key(resource: str, job: str, run_name: str) -> str:
    return f"{resource}/{job}/{run_name}"


class InstanceState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    TERMINATED = "terminated"


class ResourceState(str, Enum):
    ACTIVE = "active"
    BUSY = "busy"
    SUBMITTING = "submitting"
    TERMINATED = "terminated"


class RunStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


# ---------------------------------------------------------------------------
# Provider records
# ---------------------------------------------------------------------------


class InstanceTypeSpec(BaseModel):
    """Catalog entry. Types affect metadata and ledger rate only."""
    name: str
    vcpus: int = Field(..., ge=1)
    memory_gib: float = Field(..., gt=0)
    hourly_rate: float = Field(..., ge=0, description="Nominal USD per hour")


class InstanceHandle(BaseModel):
    """One provisioned compute node."""
    id: str
    type_name: str
    state: InstanceState = InstanceState.PENDING
    state_history: List[InstanceState] = Field(default_factory=list)
    sandbox_root: str = Field(..., description="Provider-private path (local) or address")
    volume_ids: List[str] = Field(default_factory=list)
    launched_at: datetime = Field(default_factory=datetime.now)
    terminated_at: Optional[datetime] = None

    @model_validator(mode="after")
    def _terminated_at_iff_terminated(self) -> "InstanceHandle":
        if (self.state == InstanceState.TERMINATED) != (self.terminated_at is not None):
            raise ValueError("terminated_at must be set exactly when state is terminated")
        return self

    @property
    def address(self) -> str:
        return self.sandbox_root

    @property
    def is_running(self) -> bool:
        return self.state == InstanceState.RUNNING

    def transition(self, new_state: InstanceState) -> None:
        """Advance the state machine; states only move forward."""
        order = [InstanceState.PENDING, InstanceState.RUNNING, InstanceState.TERMINATED]
        if order.index(new_state) < order.index(self.state):
            raise ValueError(f"Instance {self.id} cannot go from {self.state.value} to {new_state.value}")
        if new_state == self.state:
            return
        if new_state == InstanceState.TERMINATED:
            self.terminated_at = datetime.now()
        self.state = new_state
        self.state_history.append(new_state)


class VolumeRecord(BaseModel):
    id: str
    source_snapshot: Optional[str] = None
    attached_to: Optional[str] = None
    deleted: bool = False
    created_at: datetime = Field(default_factory=datetime.now)
    deleted_at: Optional[datetime] = None


class SnapshotRecord(BaseModel):
    id: str
    source: str = Field(default="", description="Template tree the snapshot was frozen from")
    created_at: datetime = Field(default_factory=datetime.now)


class LedgerEntry(BaseModel):
    instance_id: str
    type_name: str
    start: datetime
    stop: Optional[datetime] = None

    @property
    def is_open(self) -> bool:
        return self.stop is None

    def seconds(self, now: Optional[datetime] = None) -> float:
        end = self.stop or now or datetime.now()
        return max(0.0, (end - self.start).total_seconds())


class VolumePlan(BaseModel):
    """How provision() equips each new instance with storage.

    snapshot_id: one fresh volume per instance created from this snapshot.
    attach_volume_id: attach an existing volume (single instance only).
    Neither: no volume.
    """
    snapshot_id: Optional[str] = None
    attach_volume_id: Optional[str] = None

    @model_validator(mode="after")
    def _exclusive(self) -> "VolumePlan":
        if self.snapshot_id and self.attach_volume_id:
            raise ValueError("snapshot_id and attach_volume_id are mutually exclusive")
        return self


class ExecResult(BaseModel):
    exit_code: int
    stdout_log: str
    stderr_log: str
    wall_seconds: float = Field(..., ge=0)


class ProviderState(BaseModel):
    """Registry document of the local sandbox provider."""
    version: int = 0
    instances: Dict[str, InstanceHandle] = Field(default_factory=dict)
    volumes: Dict[str, VolumeRecord] = Field(default_factory=dict)
    snapshots: Dict[str, SnapshotRecord] = Field(default_factory=dict)
    ledger: List[LedgerEntry] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Sync plans
# ---------------------------------------------------------------------------


class ManifestEntry(BaseModel):
    size: int = Field(..., ge=0)
    mtime: float
    checksum: str = Field(..., description="SHA-256 hex digest")


class Manifest(BaseModel):
    """Checksummed inventory of the regular files of a tree."""
    root: str
    entries: Dict[str, ManifestEntry] = Field(default_factory=dict)
    directories: List[str] = Field(default_factory=list)

    @field_validator("entries")
    @classmethod
    def _relative_paths(cls, entries: Dict[str, ManifestEntry]) -> Dict[str, ManifestEntry]:
        for path in entries:
            pure = PurePosixPath(path)
            if pure.is_absolute() or ".." in pure.parts or str(pure) != path:
                raise ValueError(f"Manifest path must be relative and normalized: {path!r}")
        return entries

    def __len__(self) -> int:
        return len(self.entries)

    def to_tsv(self) -> str:
        """path<TAB>size<TAB>mtime<TAB>sha256, sorted by path, LF endings."""
        lines = [
            f"{path}\t{entry.size}\t{entry.mtime:.6f}\t{entry.checksum}"
            for path, entry in sorted(self.entries.items())
        ]
        return "".join(line + "\n" for line in lines)


class ChangeSet(BaseModel):
    to_copy: List[str] = Field(default_factory=list)
    to_delete: List[str] = Field(default_factory=list)
    dirs_to_create: List[str] = Field(default_factory=list)
    dirs_to_remove: List[str] = Field(default_factory=list)
    bytes_planned: int = 0

    @model_validator(mode="after")
    def _disjoint(self) -> "ChangeSet":
        overlap = set(self.to_copy) & set(self.to_delete)
        if overlap:
            raise ValueError(f"Paths both copied and deleted: {sorted(overlap)}")
        return self

    @property
    def is_empty(self) -> bool:
        return not (self.to_copy or self.to_delete or self.dirs_to_create or self.dirs_to_remove)


class TransferStats(BaseModel):
    files_copied: int = Field(default=0, ge=0)
    files_deleted: int = Field(default=0, ge=0)
    bytes_copied: int = Field(default=0, ge=0)
    wall_seconds: float = Field(default=0.0, ge=0)


# ---------------------------------------------------------------------------
# Job layout
# ---------------------------------------------------------------------------


class JobDirectory(BaseModel):
    """Validated host job layout: scripts, data, Results/ and RunResults/."""
    root: Path
    name: str
    scripts: List[str] = Field(default_factory=list)
    has_results_dir: bool = True
    has_runresults_dir: bool = True

    @property
    def results_dir(self) -> Path:
        return self.root / "Results"

    @property
    def runresults_dir(self) -> Path:
        return self.root / "RunResults"

    def run_results_dir(self, run_name: str) -> Path:
        return self.runresults_dir / run_name


# ---------------------------------------------------------------------------
# Resources and runs
# ---------------------------------------------------------------------------


class EbsSpec(BaseModel):
    """Storage choice for a gathered resource: existing volume, snapshot, or the default."""
    volume_id: Optional[str] = None
    snapshot_id: Optional[str] = None

    @model_validator(mode="after")
    def _not_both(self) -> "EbsSpec":
        if self.volume_id and self.snapshot_id:
            raise ValueError("volume_id and snapshot_id are never both set")
        return self

    @classmethod
    def from_flags(cls, volume_id: Optional[str] = None, snapshot_id: Optional[str] = None) -> "EbsSpec":
        if volume_id and snapshot_id:
            raise VolumeSpecConflict("-ebsvol and -snap cannot be specified at the same time")
        return cls(volume_id=volume_id, snapshot_id=snapshot_id)

    @property
    def is_default(self) -> bool:
        return not (self.volume_id or self.snapshot_id)


class ResourceRecord(BaseModel):
    """A named instance or cluster."""
    name: str
    description: str = ""
    size: int = Field(..., ge=1)
    instances: List[str]
    master: str
    volumes: List[str] = Field(default_factory=list)
    instance_type: str
    state: ResourceState = ResourceState.ACTIVE
    created_at: datetime = Field(default_factory=datetime.now)
    terminated_at: Optional[datetime] = None
    active_run: Optional[str] = Field(default=None, description="Key of the run holding the resource lock")
    phase_timings: Dict[str, float] = Field(default_factory=dict)
    submit_timings: Dict[str, float] = Field(default_factory=dict, description="Last submit seconds per job name")

    @model_validator(mode="after")
    def _cluster_shape(self) -> "ResourceRecord":
        if len(self.instances) != self.size:
            raise ValueError(f"Resource {self.name} has {len(self.instances)} instances, size {self.size}")
        if self.master not in self.instances:
            raise ValueError(f"Master {self.master} is not an instance of {self.name}")
        return self

    @property
    def workers(self) -> List[str]:
        return [iid for iid in self.instances if iid != self.master]

    @property
    def is_locked(self) -> bool:
        return self.state in (ResourceState.BUSY, ResourceState.SUBMITTING)

    @property
    def lock_holder(self) -> str:
        return f"run {self.active_run}" if self.state == ResourceState.BUSY else "a submission"


class RunRecord(BaseModel):
    """One named execution of one script on one resource."""
    run_name: str
    resource: str
    job: str
    script: str
    status: RunStatus = RunStatus.PENDING
    exit_code: Optional[int] = None
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None
    phase_timings: Dict[str, float] = Field(default_factory=dict)
    retrieved_to: Optional[str] = Field(default=None, description="Host RunResults path of the last retrieval")

    @model_validator(mode="after")
    def _status_matches_exit_code(self) -> "RunRecord":
        if self.status == RunStatus.SUCCEEDED and self.exit_code != 0:
            raise ValueError("succeeded runs have exit code 0")
        if self.status == RunStatus.FAILED and (self.exit_code is None or self.exit_code == 0):
            raise ValueError("failed runs have a nonzero exit code")
        if self.started_at and self.finished_at and self.finished_at < self.started_at:
            raise ValueError("finished_at precedes started_at")
        return self

    @property
    def key(self) -> str:
        return run_key(self.resource, self.job, self.run_name)

    @property
    def is_finished(self) -> bool:
        return self.status in (RunStatus.SUCCEEDED, RunStatus.FAILED)

    def finish(self, exit_code: int) -> None:
        self.exit_code = exit_code
        self.status = RunStatus.SUCCEEDED if exit_code == 0 else RunStatus.FAILED
        self.finished_at = datetime.now()
        logger.debug(f"Run {self.key} finished with exit code {exit_code}")


class StateDocument(BaseModel):
    """Host-side registry of resources and runs."""
    version: int = 0
    resources: Dict[str, ResourceRecord] = Field(default_factory=dict)
    runs: Dict[str, RunRecord] = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class PhaseTiming(BaseModel):
    phase: Literal["gather", "submit", "execute", "retrieve", "terminate"]
    seconds: float = Field(..., ge=0)
    resource: str
    run_name: Optional[str] = None


class RetrievalReport(BaseModel):
    run_name: str
    source: Literal["master", "all"]
    per_node: Dict[str, TransferStats]
    destination: str

    @property
    def files(self) -> int:
        return sum(stats.files_copied for stats in self.per_node.values())

    @property
    def bytes(self) -> int:
        return sum(stats.bytes_copied for stats in self.per_node.values())


class TerminationSummary(BaseModel):
    resource: str
    instances_terminated: List[str] = Field(default_factory=list)
    volumes_deleted: List[str] = Field(default_factory=list)
    volumes_kept: List[str] = Field(default_factory=list)
    unretrieved_runs: List[str] = Field(default_factory=list)
    seconds: float = Field(default=0.0, ge=0)
