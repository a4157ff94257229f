"""Retrieve run snapshots into the host's RunResults/<run>/ and list runs."""

import logging
import time
from datetime import datetime
from typing import List, Optional, Union

from .errors import InvalidRequest, ResourceBusy, ResourceTerminated, RunNameMissing, SyncError
from .job_model import RESULTS_DIR, RUNS_DIR, resolve_job_dir
from .models import JobDirectory, ResourceState, RetrievalReport, RunRecord, StateDocument, TransferStats
from .state_store import get_run
from .sync_engine import sync
from .timing import TIMINGS_FILE, write_run_timings

logger = logging.getLogger(__name__)

SOURCES = ("master", "all")


class RetrievalMixin:

    def get_results(self, resource_name: Optional[str] = None, jobdir: Optional[JobDirectory] = None,
                    run_name: Optional[str] = None, source: str = "master") -> RetrievalReport:
        """Copy a finished run's Results snapshot to RunResults/<run>/ on the host.

        source="master" mirrors the master's snapshot into RunResults/<run>/;
        source="all" gives every instance its own RunResults/<run>/<instance-id>/.
        The host's own Results/ is never written. timings.tsv is (re)written
        next to the retrieved files.
        """
        if source not in SOURCES:
            raise InvalidRequest(f"Unknown results source '{source}', expected one of {', '.join(SOURCES)}")
        if not run_name:
            raise RunNameMissing("A run name is required (-runname)")
        jobdir = jobdir or resolve_job_dir()
        name = self._resource_name(resource_name)
        record = self.store.lookup_resource(name)
        run = self.store.lookup_run(name, jobdir.name, run_name)
        if record.state == ResourceState.TERMINATED:
            raise ResourceTerminated(f"Resource '{name}' has been terminated; its results are gone")
        if record.active_run == run.key or not run.is_finished:
            raise ResourceBusy(f"Run '{run_name}' is still executing on '{name}'")

        destination = jobdir.run_results_dir(run_name)
        targets = [record.master] if source == "master" else record.instances
        # per-instance folders of an earlier -fromall survive a -frommaster mirror
        keep = [TIMINGS_FILE] + [f"{iid}/" for iid in record.instances]
        started = time.monotonic()

        def fetch(instance_id: str) -> TransferStats:
            tree = self.provider.open_remote_tree(instance_id)
            snapshot = tree / jobdir.name / RUNS_DIR / run_name / RESULTS_DIR
            target = destination if source == "master" else destination / instance_id
            if not snapshot.is_dir():
                logger.debug(f"No snapshot of {run_name} on {instance_id}")
                target.mkdir(parents=True, exist_ok=True)
                return TransferStats()
            return sync(snapshot, target, dst_exclusions=keep)

        per_node, failures = self._fan_out(targets, fetch)
        if failures:
            first = sorted(failures)[0]
            error = failures[first]
            if isinstance(error, SyncError):
                raise error
            raise SyncError(f"Retrieval from {first} failed: {error}")

        elapsed = time.monotonic() - started
        updated: List[RunRecord] = []

        def mark_retrieved(document: StateDocument) -> None:
            stored = get_run(document, name, jobdir.name, run_name)
            stored.retrieved_to = str(destination)
            stored.phase_timings["retrieve"] = elapsed
            updated.append(stored.model_copy(deep=True))

        self.store.update(mark_retrieved)
        write_run_timings(updated[0], destination)

        report = RetrievalReport(run_name=run_name, source=source, per_node=per_node, destination=str(destination))
        logger.info(f"Retrieved {report.files} file(s) of run {run_name} into {destination}")
        return report

    def list_runs(self, resource_name: Optional[str] = None,
                  job: Union[JobDirectory, str, None] = None) -> List[RunRecord]:
        """Runs of a resource (optionally one job) in start order; empty when nothing matches."""
        name = self._resource_name(resource_name)
        job_name = job.name if isinstance(job, JobDirectory) else job
        return sorted(
            self.store.runs_for(name, job_name),
            key=lambda run: (run.started_at or datetime.max, run.run_name),
        )
