"""Gather and terminate resources."""

import logging
import time
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from .errors import (
    DuplicateResourceName,
    InvalidName,
    InvalidResourceSize,
    ResourceBusy,
    VolumeWithCluster,
)
from .models import (
    EbsSpec,
    InstanceHandle,
    ResourceRecord,
    ResourceState,
    RunRecord,
    StateDocument,
    TerminationSummary,
    VolumePlan,
    is_valid_name,
)
from .provider import instance_type as lookup_instance_type
from .state_store import get_resource
from .timing import write_run_timings

logger = logging.getLogger(__name__)


class ResourcesMixin:
    """Gather a named instance or cluster and tear it down again."""

    def gather_resource(self, name: Optional[str] = None, size: int = 1, instance_type: Optional[str] = None,
                        ebs: Optional[EbsSpec] = None, description: str = "") -> ResourceRecord:
        """Provision size instances and register them under name.

        The first instance is the master. A named volume (-ebsvol) can only
        be attached to a single instance; every other shape gets one fresh
        volume per instance from the requested (or default) snapshot.
        """
        name = self._resource_name(name)
        type_name = instance_type or self.config.default_instance_type
        ebs = ebs or EbsSpec()

        if size < 1:
            raise InvalidResourceSize(f"Resource size must be at least 1, got {size}")
        lookup_instance_type(type_name)
        if not is_valid_name(name):
            raise InvalidName(f"Invalid resource name '{name}'")
        if name in self.store.refresh().resources:
            raise DuplicateResourceName(f"Resource name '{name}' is already in use")
        if ebs.volume_id and size > 1:
            raise VolumeWithCluster(f"Volume {ebs.volume_id} can only be attached to a single instance, not {size}")

        if ebs.volume_id:
            plan = VolumePlan(attach_volume_id=ebs.volume_id)
        else:
            plan = VolumePlan(snapshot_id=ebs.snapshot_id or self.config.default_snapshot_id)

        started = time.monotonic()
        handles = self.provider.provision(size, type_name, plan)
        record = ResourceRecord(
            name=name,
            description=description,
            size=size,
            instances=[handle.id for handle in handles],
            master=handles[0].id,
            volumes=[vid for handle in handles for vid in handle.volume_ids],
            instance_type=type_name,
        )
        record.phase_timings["gather"] = time.monotonic() - started
        try:
            self.store.register_resource(record)
        except Exception as e:
            logger.warning(f"Registering resource '{name}' failed ({e}), releasing {len(handles)} instance(s)")
            self._release(handles, delete_volumes=not ebs.volume_id)
            raise

        logger.info(f"Gathered resource {name}: {size} x {type_name}, master {record.master}")
        return record

    def _release(self, handles: List[InstanceHandle], delete_volumes: bool) -> None:
        for handle in handles:
            self.provider.terminate(handle.id)
        if delete_volumes:
            for handle in handles:
                for vid in handle.volume_ids:
                    self.provider.delete_volume(vid)

    def terminate_resource(self, name: Optional[str] = None, delete_volumes: bool = False) -> TerminationSummary:
        """Terminate every instance of name and tombstone the record.

        Terminating an already terminated resource is a no-op. Volumes are
        kept unless delete_volumes is set. Finished runs that were never
        retrieved are reported, since their results are gone afterwards.
        """
        name = self._resource_name(name)
        if self.store.lookup_resource(name).state == ResourceState.TERMINATED:
            logger.info(f"Resource {name} is already terminated")
            return TerminationSummary(resource=name)

        started = time.monotonic()
        summary = TerminationSummary(resource=name)
        retrieved: List[RunRecord] = []

        def tear_down(document: StateDocument) -> None:
            record = get_resource(document, name)
            if record.state == ResourceState.TERMINATED:
                return
            if record.is_locked:
                raise ResourceBusy(f"Resource '{name}' is locked by {record.lock_holder}")

            stopped, failures = self._fan_out(record.instances, self.provider.terminate)
            if failures:
                raise next(iter(failures.values()))
            summary.instances_terminated.extend(stopped)

            for vid in record.volumes:
                if not delete_volumes:
                    summary.volumes_kept.append(vid)
                elif not self.provider.describe_volume(vid).deleted:
                    self.provider.delete_volume(vid)
                    summary.volumes_deleted.append(vid)

            elapsed = time.monotonic() - started
            record.state = ResourceState.TERMINATED
            record.terminated_at = datetime.now()
            record.phase_timings["terminate"] = elapsed
            for run in document.runs.values():
                if run.resource != name:
                    continue
                run.phase_timings["terminate"] = elapsed
                if run.retrieved_to:
                    retrieved.append(run.model_copy(deep=True))
                elif run.is_finished:
                    summary.unretrieved_runs.append(run.run_name)

        self.store.update(tear_down)

        for run in retrieved:
            write_run_timings(run, Path(run.retrieved_to))
        for run_name in summary.unretrieved_runs:
            logger.warning(f"Results of run {run_name} on {name} were never retrieved and are now lost")

        summary.seconds = time.monotonic() - started
        logger.info(f"Terminated resource {name} in {summary.seconds:.3f}s")
        return summary
