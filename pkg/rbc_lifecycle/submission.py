"""Push a job directory (or a bare data directory) to a resource."""

import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Union

from .errors import InvalidRequest, NotADirectory, ResourceBusy, ResourceTerminated, SubmissionFailed
from .job_model import JOB_EXCLUSIONS, resolve_job_dir
from .models import JobDirectory, ResourceRecord, ResourceState, StateDocument, TransferStats
from .state_store import get_resource
from .sync_engine import sync

logger = logging.getLogger(__name__)

TARGETS = ("master", "allnodes")


class SubmissionMixin:

    def submit_job(self, resource_name: Optional[str] = None, jobdir: Optional[JobDirectory] = None,
                   target: str = "master", data_path: Optional[Union[str, Path]] = None) -> Dict[str, TransferStats]:
        """Incrementally sync the job directory to <remote_home>/<job>/ on the target instances.

        RunResults/ never leaves the host, and remote run snapshots under
        .runs/ are left alone. With data_path, that directory is pushed
        to <remote_home>/<basename>/ instead of the job directory. The
        resource is locked against runs and terminate while the sync runs.
        Returns per-instance transfer stats, sorted by instance id.
        """
        if target not in TARGETS:
            raise InvalidRequest(f"Unknown submit target '{target}', expected one of {', '.join(TARGETS)}")
        name = self._resource_name(resource_name)
        self._usable_resource(name)

        if data_path is not None:
            source = Path(data_path).expanduser()
            if not source.is_dir():
                raise NotADirectory(f"Data directory '{source}' does not exist or is not a directory")
            source = source.resolve()
            destination = source.name
        else:
            jobdir = jobdir or resolve_job_dir()
            source, destination = jobdir.root, jobdir.name

        acquired: List[ResourceRecord] = []

        def acquire(document: StateDocument) -> None:
            current = get_resource(document, name)
            if current.state == ResourceState.TERMINATED:
                raise ResourceTerminated(f"Resource '{name}' has been terminated")
            if current.is_locked:
                raise ResourceBusy(f"Resource '{name}' is locked by {current.lock_holder}")
            current.state = ResourceState.SUBMITTING
            acquired.append(current.model_copy(deep=True))

        self.store.update(acquire)
        record = acquired[0]
        targets = [record.master] if target == "master" else record.instances
        started = time.monotonic()
        elapsed: Optional[float] = None

        # Data folders get the job exclusions too: one may be a job directory itself.
        def push(instance_id: str) -> TransferStats:
            tree = self.provider.open_remote_tree(instance_id)
            return sync(source, tree / destination, JOB_EXCLUSIONS, dst_exclusions=JOB_EXCLUSIONS)

        try:
            results, failures = self._fan_out(targets, push)
            if failures:
                raise SubmissionFailed(f"Submission of {destination} failed on {', '.join(sorted(failures))}", failures)
            elapsed = time.monotonic() - started
        finally:
            def release(document: StateDocument) -> None:
                current = get_resource(document, name)
                if current.state == ResourceState.SUBMITTING:
                    current.state = ResourceState.ACTIVE
                if elapsed is not None and data_path is None:
                    current.submit_timings[destination] = elapsed
                    current.phase_timings["submit"] = elapsed

            self.store.update(release)

        copied = sum(stats.files_copied for stats in results.values())
        logger.info(f"Submitted {destination} to {len(results)} instance(s) of {name}: {copied} file(s) in {elapsed:.3f}s")
        return results
