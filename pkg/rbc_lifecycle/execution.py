"""Execute one script of a submitted job as a named run."""

import logging
import shutil
import sys
import time
from datetime import datetime
from typing import Callable, Dict, List, Optional, TextIO, Tuple

from .errors import (
    ExecutionFailed,
    InvalidName,
    JobNotSubmitted,
    NonInteractiveSession,
    NoScriptsFound,
    ResourceBusy,
    ResourceTerminated,
    RunNameMissing,
    ScriptNotFound,
)
from .job_model import RESULTS_DIR, RUNS_DIR, resolve_job_dir
from .models import (
    ExecResult,
    JobDirectory,
    ResourceRecord,
    ResourceState,
    RunRecord,
    RunStatus,
    StateDocument,
    is_valid_name,
)
from .state_store import add_run, get_resource
from .sync_engine import sync

logger = logging.getLogger(__name__)

HOSTFILE_NAME = "cluster_hosts"
MAX_PROMPT_ATTEMPTS = 3


def prompt_for_script(jobdir: JobDirectory, input_fn: Optional[Callable[[str], str]] = None,
                      output: Optional[TextIO] = None, interactive: Optional[bool] = None) -> str:
    """Ask the user to pick one of the job's scripts by number or name."""
    if not jobdir.scripts:
        raise NoScriptsFound(f"No scripts found in {jobdir.root}")
    if interactive is None:
        interactive = sys.stdin.isatty()
    if not interactive:
        raise NonInteractiveSession("No script given (-rscript) and no terminal to ask on")
    read = input_fn or input
    out = output or sys.stderr

    print(f"Scripts in {jobdir.name}:", file=out)
    for number, script in enumerate(jobdir.scripts, start=1):
        print(f"  {number}) {script}", file=out)

    for _ in range(MAX_PROMPT_ATTEMPTS):
        try:
            answer = read(f"Select a script [1-{len(jobdir.scripts)}]: ").strip()
        except EOFError:
            raise NonInteractiveSession("Input closed before a script was selected")
        if answer in jobdir.scripts:
            return answer
        if answer.isdigit() and 1 <= int(answer) <= len(jobdir.scripts):
            return jobdir.scripts[int(answer) - 1]
        print(f"❌ '{answer}' is not one of the listed scripts", file=out)
    raise ScriptNotFound(f"No valid script selected after {MAX_PROMPT_ATTEMPTS} attempts")


class ExecutionMixin:

    def build_cluster_env(self, record: ResourceRecord, run_name: str, job_name: str) -> Tuple[Dict[str, str], str]:
        """Environment for the payload and the hostfile content listing the workers.

        Hostfile lines are "<instance-id> <address>"; a single instance gets
        an empty hostfile.
        """
        if record.state == ResourceState.TERMINATED:
            raise ResourceTerminated(f"Resource '{record.name}' has been terminated")
        lines = []
        for iid in record.workers:
            lines.append(f"{iid} {self.provider.describe_instance(iid).address}\n")
        hostfile = f"{self._remote_run_path(job_name, run_name)}/{HOSTFILE_NAME}"
        env = {
            "RBC_RUN_NAME": run_name,
            "RBC_ROLE": "master",
            "RBC_CLUSTER_SIZE": str(record.size),
            "RBC_HOSTFILE": self.provider.runtime_path(record.master, hostfile),
            "RBC_JOB_NAME": job_name,
            "RBC_REMOTE_HOME": self.provider.runtime_path(record.master, self.config.remote_home),
        }
        return env, "".join(lines)

    def prompt_for_script(self, jobdir: JobDirectory, **kwargs) -> str:
        return prompt_for_script(jobdir, **kwargs)

    def execute_job(self, resource_name: Optional[str] = None, jobdir: Optional[JobDirectory] = None,
                    script: Optional[str] = None, run_name: Optional[str] = None) -> RunRecord:
        """Run script on the master as run_name and snapshot Results/ for it.

        The resource is locked for the duration of the run. Results/ is
        cleared on every instance holding the job before the payload starts,
        so each run's snapshot contains only what that run wrote. A nonzero
        exit raises ExecutionFailed after the run has been recorded.
        """
        if not run_name:
            raise RunNameMissing("A run name is required (-runname)")
        if not is_valid_name(run_name):
            raise InvalidName(f"Invalid run name '{run_name}'")
        jobdir = jobdir or resolve_job_dir()
        name = self._resource_name(resource_name)
        record = self._usable_resource(name)

        if script is None:
            script = self.prompt_for_script(jobdir)
        elif script not in jobdir.scripts:
            raise ScriptNotFound(f"Script '{script}' not found in {jobdir.root}")

        if not (self.provider.open_remote_tree(record.master) / jobdir.name).is_dir():
            raise JobNotSubmitted(f"Job '{jobdir.name}' has not been submitted to resource '{name}'")

        run = RunRecord(run_name=run_name, resource=name, job=jobdir.name, script=script)
        key = run.key

        def acquire(document: StateDocument) -> None:
            current = get_resource(document, name)
            if current.state == ResourceState.TERMINATED:
                raise ResourceTerminated(f"Resource '{name}' has been terminated")
            if current.is_locked:
                raise ResourceBusy(f"Resource '{name}' is locked by {current.lock_holder}")
            add_run(document, run)
            current.state = ResourceState.BUSY
            current.active_run = key

        self.store.update(acquire)
        logger.info(f"Run {key} acquired resource {name}")

        started = time.monotonic()
        exit_code = -1
        finished: List[RunRecord] = []
        try:
            def mark_running(document: StateDocument) -> None:
                stored = document.runs[key]
                stored.status = RunStatus.RUNNING
                stored.started_at = datetime.now()
                if "gather" in record.phase_timings:
                    stored.phase_timings["gather"] = record.phase_timings["gather"]
                if jobdir.name in record.submit_timings:
                    stored.phase_timings["submit"] = record.submit_timings[jobdir.name]

            self.store.update(mark_running)
            result = self._run_payload(record, jobdir.name, script, run_name)
            exit_code = result.exit_code
        finally:
            elapsed = time.monotonic() - started

            def release(document: StateDocument) -> None:
                current = document.resources[name]
                current.state = ResourceState.ACTIVE
                current.active_run = None
                stored = document.runs[key]
                if stored.started_at is None:
                    stored.started_at = datetime.now()
                stored.finish(exit_code)
                stored.phase_timings["execute"] = elapsed
                finished.append(stored.model_copy(deep=True))

            self.store.update(release)
            logger.info(f"Run {key} released resource {name} with exit code {exit_code}")

        run = finished[0]
        if run.status == RunStatus.FAILED:
            raise ExecutionFailed(f"Script {script} of run {run_name} exited with code {exit_code}", run)
        return run

    def _run_payload(self, record: ResourceRecord, job: str, script: str, run_name: str) -> ExecResult:
        holders = [
            iid for iid in record.instances
            if (self.provider.open_remote_tree(iid) / job).is_dir()
        ]

        def reset_results(instance_id: str) -> None:
            results = self.provider.open_remote_tree(instance_id) / job / RESULTS_DIR
            if results.exists():
                shutil.rmtree(results)
            results.mkdir(parents=True)

        _, failures = self._fan_out(holders, reset_results)
        if failures:
            raise next(iter(failures.values()))

        env, hostfile = self.build_cluster_env(record, run_name, job)
        run_dir = self.provider.open_remote_tree(record.master) / job / RUNS_DIR / run_name
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / HOSTFILE_NAME).write_text(hostfile, encoding="utf-8")

        logger.info(f"Executing {script} on {record.master} as run {run_name}")
        result = self.provider.exec_command(
            record.master,
            self.config.runtime_argv(script),
            env,
            cwd=self._remote_job_path(job),
            log_dir=self._remote_run_path(job, run_name),
        )
        logger.info(f"{script} exited with code {result.exit_code} after {result.wall_seconds:.3f}s")

        def snapshot(instance_id: str) -> None:
            tree = self.provider.open_remote_tree(instance_id)
            sync(tree / job / RESULTS_DIR, tree / job / RUNS_DIR / run_name / RESULTS_DIR)

        _, failures = self._fan_out(holders, snapshot)
        if failures:
            raise next(iter(failures.values()))
        return result
