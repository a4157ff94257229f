"""Lifecycle facade combining gather, submit, execute, retrieve and terminate."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path, PurePosixPath
from typing import Any, Callable, Dict, Iterable, Optional, Tuple, TypeVar

from .config import Config, load_config
from .errors import ResourceBusy, ResourceTerminated
from .execution import ExecutionMixin
from .job_model import RUNS_DIR
from .models import ResourceRecord, ResourceState
from .provider import ComputeProvider, get_provider
from .resources import ResourcesMixin
from .retrieval import RetrievalMixin
from .state_store import StateStore, open_state
from .submission import SubmissionMixin

logger = logging.getLogger(__name__)

T = TypeVar("T")

MAX_FAN_OUT = 16


class Lifecycle(ResourcesMixin, SubmissionMixin, ExecutionMixin, RetrievalMixin):
    """Drives analytics jobs through the five lifecycle steps against one provider."""

    def __init__(self, config: Config, store: Optional[StateStore] = None,
                 provider: Optional[ComputeProvider] = None):
        self.config = config
        self.store = store or open_state(config)
        self.provider = provider or get_provider(config)
        logger.debug(f"Lifecycle ready with provider {self.provider.name}, state {self.store.path}")

    @classmethod
    def from_environment(cls, config_path: Optional[Path] = None) -> "Lifecycle":
        return cls(load_config(config_path))

    # Shared helpers for the mixins -----------------------------------------

    def _resource_name(self, name: Optional[str]) -> str:
        return name or self.config.default_resource_name

    def _usable_resource(self, name: str) -> ResourceRecord:
        """Resource that is neither terminated nor locked by a run."""
        record = self.store.lookup_resource(name)
        if record.state == ResourceState.TERMINATED:
            raise ResourceTerminated(f"Resource '{name}' has been terminated")
        if record.is_locked:
            raise ResourceBusy(f"Resource '{name}' is locked by {record.lock_holder}")
        return record

    def _remote_job_path(self, job_name: str) -> str:
        return str(PurePosixPath(self.config.remote_home) / job_name)

    def _remote_run_path(self, job_name: str, run_name: str) -> str:
        return str(PurePosixPath(self.config.remote_home) / job_name / RUNS_DIR / run_name)

    def _fan_out(self, instance_ids: Iterable[str], work: Callable[[str], T]) -> Tuple[Dict[str, T], Dict[str, Exception]]:
        """Run work per instance concurrently; results and failures keyed and sorted by instance id."""
        ids = sorted(set(instance_ids))
        outcomes: Dict[str, Any] = {}
        if len(ids) <= 1:
            for iid in ids:
                try:
                    outcomes[iid] = work(iid)
                except Exception as e:
                    outcomes[iid] = e
        else:
            with ThreadPoolExecutor(max_workers=min(MAX_FAN_OUT, len(ids))) as pool:
                futures = {iid: pool.submit(work, iid) for iid in ids}
            for iid in ids:
                error = futures[iid].exception()
                outcomes[iid] = error if error is not None else futures[iid].result()
        results = {iid: value for iid, value in outcomes.items() if not isinstance(value, Exception)}
        failures = {iid: value for iid, value in outcomes.items() if isinstance(value, Exception)}
        for iid, error in failures.items():
            logger.error(f"Instance {iid} failed: {error}")
        return results, failures

    def describe_resource(self, name: Optional[str] = None) -> Dict[str, Any]:
        """Resource record plus live instance state and accrued billing."""
        record = self.store.lookup_resource(self._resource_name(name))
        instances = []
        for iid in record.instances:
            handle = self.provider.describe_instance(iid)
            instances.append({
                "id": iid,
                "role": "master" if iid == record.master else "worker",
                "state": handle.state.value,
                "accrued_seconds": round(self.provider.accrued_seconds(iid), 3),
                "accrued_cost": round(self.provider.accrued_cost(iid), 6),
            })
        return {
            "name": record.name,
            "description": record.description,
            "state": record.state.value,
            "size": record.size,
            "instance_type": record.instance_type,
            "active_run": record.active_run,
            "instances": instances,
            "volumes": list(record.volumes),
            "runs": len(self.store.runs_for(record.name)),
        }
