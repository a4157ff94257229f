"""Compute-provider interface, instance-type catalog and provider factory."""

import abc
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Sequence

from .errors import ProviderNotImplemented, UnknownInstanceType
from .models import (
    ExecResult,
    InstanceHandle,
    InstanceTypeSpec,
    LedgerEntry,
    VolumePlan,
    VolumeRecord,
)

if TYPE_CHECKING:
    from .config import Config

logger = logging.getLogger(__name__)


def _catalog(*specs: InstanceTypeSpec) -> Dict[str, InstanceTypeSpec]:
    return {spec.name: spec for spec in specs}


# Nominal figures; types never change functional behavior.
INSTANCE_TYPES: Dict[str, InstanceTypeSpec] = _catalog(
    InstanceTypeSpec(name="m1.small", vcpus=1, memory_gib=1.7, hourly_rate=0.065),
    InstanceTypeSpec(name="m1.medium", vcpus=1, memory_gib=3.75, hourly_rate=0.13),
    InstanceTypeSpec(name="m1.large", vcpus=2, memory_gib=7.5, hourly_rate=0.26),
    InstanceTypeSpec(name="m1.xlarge", vcpus=4, memory_gib=15.0, hourly_rate=0.52),
    InstanceTypeSpec(name="m2.xlarge", vcpus=2, memory_gib=17.1, hourly_rate=0.45),
    InstanceTypeSpec(name="m2.2xlarge", vcpus=4, memory_gib=34.2, hourly_rate=0.90),
    InstanceTypeSpec(name="m2.4xlarge", vcpus=8, memory_gib=68.4, hourly_rate=1.80),
    InstanceTypeSpec(name="c1.medium", vcpus=2, memory_gib=1.7, hourly_rate=0.165),
    InstanceTypeSpec(name="c1.xlarge", vcpus=8, memory_gib=7.0, hourly_rate=0.66),
    InstanceTypeSpec(name="cc2.8xlarge", vcpus=32, memory_gib=60.5, hourly_rate=2.40),
)

PROVIDERS = ("local", "ec2")


def instance_type(name: str) -> InstanceTypeSpec:
    try:
        return INSTANCE_TYPES[name]
    except KeyError:
        raise UnknownInstanceType(f"Unknown instance type '{name}'; known: {', '.join(sorted(INSTANCE_TYPES))}")


class RemoteTree:
    """Read/write handle on an instance's remote home."""

    def __init__(self, instance_id: str, remote_home: str, path: Path):
        self.instance_id = instance_id
        self.remote_home = remote_home
        self.path = Path(path)

    def __truediv__(self, relative: str) -> Path:
        return self.path / relative

    def __repr__(self) -> str:
        return f"RemoteTree({self.instance_id}:{self.remote_home})"


class ComputeProvider(abc.ABC):
    """Provision, store, execute, access and release compute instances.

    Implementations must tolerate concurrent calls that target different
    instances; exec_command in particular may run for a long time.
    """

    name = "abstract"

    def __init__(self, remote_home: str):
        self.remote_home = remote_home

    @abc.abstractmethod
    def register_snapshot(self, template_tree: Path) -> str:
        """Freeze template_tree into a new snapshot and return its id."""

    @abc.abstractmethod
    def create_volume(self, snapshot_id: str) -> VolumeRecord:
        """Create a fresh volume holding the snapshot's content."""

    @abc.abstractmethod
    def provision(self, count: int, type_name: str, volume_plan: Optional[VolumePlan] = None) -> List[InstanceHandle]:
        """Start count instances; all are running when this returns."""

    @abc.abstractmethod
    def exec_command(self, instance_id: str, command: Sequence[str], env: Mapping[str, str],
                     cwd: str, log_dir: Optional[str] = None) -> ExecResult:
        """Run command on the instance with cwd/log_dir given as remote paths."""

    @abc.abstractmethod
    def open_remote_tree(self, instance_id: str) -> RemoteTree:
        """Tree handle rooted at the remote home of a running instance."""

    @abc.abstractmethod
    def runtime_path(self, instance_id: str, remote_path: str) -> str:
        """A remote path as processes on the instance see it."""

    @abc.abstractmethod
    def terminate(self, instance_id: str) -> InstanceHandle:
        """Stop the instance and close its billing. Terminating twice is a no-op."""

    @abc.abstractmethod
    def delete_volume(self, volume_id: str) -> VolumeRecord:
        """Mark the volume deleted and reclaim its storage."""

    @abc.abstractmethod
    def accrued_seconds(self, instance_id: str) -> float:
        """Total billed running time of the instance."""

    @abc.abstractmethod
    def describe_instance(self, instance_id: str) -> InstanceHandle:
        """Current handle of an instance."""

    @abc.abstractmethod
    def describe_volume(self, volume_id: str) -> VolumeRecord:
        """Current record of a volume."""

    @abc.abstractmethod
    def list_instances(self) -> List[InstanceHandle]:
        """All instances the provider knows, terminated ones included."""

    @abc.abstractmethod
    def list_volumes(self) -> List[VolumeRecord]:
        """All volumes the provider knows, deleted ones included."""

    @abc.abstractmethod
    def ledger(self) -> List[LedgerEntry]:
        """Billing ledger entries."""

    def running_instances(self) -> List[InstanceHandle]:
        return [handle for handle in self.list_instances() if handle.is_running]

    def open_ledger_entries(self) -> List[LedgerEntry]:
        return [entry for entry in self.ledger() if entry.is_open]

    def accrued_cost(self, instance_id: str) -> float:
        handle = self.describe_instance(instance_id)
        return self.accrued_seconds(instance_id) / 3600.0 * instance_type(handle.type_name).hourly_rate


class Ec2Provider(ComputeProvider):
    """Placeholder for a real EC2/EBS adapter. The signatures are frozen; nothing is implemented."""

    name = "ec2"

    def _unsupported(self, *args, **kwargs):
        raise ProviderNotImplemented("The ec2 provider is not implemented; use provider=local")

    register_snapshot = _unsupported
    create_volume = _unsupported
    provision = _unsupported
    exec_command = _unsupported
    open_remote_tree = _unsupported
    runtime_path = _unsupported
    terminate = _unsupported
    delete_volume = _unsupported
    accrued_seconds = _unsupported
    describe_instance = _unsupported
    describe_volume = _unsupported
    list_instances = _unsupported
    list_volumes = _unsupported
    ledger = _unsupported


def get_provider(config: "Config") -> ComputeProvider:
    """Instantiate the provider the config selects."""
    if config.provider == "local":
        from .local_provider import LocalSandboxProvider
        return LocalSandboxProvider(
            config.provider_workdir,
            remote_home=config.remote_home,
            base_snapshot_id=config.default_snapshot_id,
        )
    if config.provider == "ec2":
        return Ec2Provider(remote_home=config.remote_home)
    raise ProviderNotImplemented(f"Unknown provider '{config.provider}'")
