"""Local sandbox provider: instances, volumes and snapshots on the host filesystem.

Layout under the workdir (stable, tests rely on it)::

    provider.json                 registry document (+ provider.json.lock)
    instances/<id>/home/<user>/   remote home of an instance
    instances/<id>/data           mount link to the attached volume
    instances/<id>/tmp/           TMPDIR of processes run on the instance
    volumes/<id>/                 volume storage
    snapshots/<id>/               frozen snapshot content
"""

import logging
import os
import shutil
import subprocess
import time
import uuid
from datetime import datetime
from pathlib import Path, PurePosixPath
from typing import Iterable, List, Mapping, Optional, Sequence

from .errors import (
    InstanceNotFound,
    InstanceNotRunning,
    InvalidRequest,
    PathNotFound,
    SnapshotNotFound,
    VolumeDeleted,
    VolumeInUse,
    VolumeNotFound,
)
from .models import (
    ExecResult,
    InstanceHandle,
    InstanceState,
    LedgerEntry,
    ProviderState,
    SnapshotRecord,
    VolumePlan,
    VolumeRecord,
)
from .persistence import LockedDocument
from .provider import ComputeProvider, RemoteTree, instance_type

logger = logging.getLogger(__name__)

MOUNT_NAME = "data"


def _new_id(prefix: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    while True:
        candidate = f"{prefix}-{uuid.uuid4().hex[:8]}"
        if candidate not in taken:
            return candidate


class LocalSandboxProvider(ComputeProvider):
    """Emulates instances as sandbox directories plus locally spawned processes."""

    name = "local"

    def __init__(self, workdir: Path, remote_home: str = "/home/root", base_snapshot_id: str = "snap-default"):
        super().__init__(remote_home)
        self.workdir = Path(workdir).expanduser()
        self.base_snapshot_id = base_snapshot_id
        self._document = LockedDocument(self.workdir / "provider.json", ProviderState)

    # Layout ------------------------------------------------------------------

    def _instance_dir(self, instance_id: str) -> Path:
        return self.workdir / "instances" / instance_id

    def _volume_dir(self, volume_id: str) -> Path:
        return self.workdir / "volumes" / volume_id

    def _snapshot_dir(self, snapshot_id: str) -> Path:
        return self.workdir / "snapshots" / snapshot_id

    def _resolve(self, handle: InstanceHandle, remote_path: str) -> Path:
        pure = PurePosixPath(remote_path)
        if not pure.is_absolute():
            pure = PurePosixPath(self.remote_home) / pure
        if ".." in pure.parts:
            raise InvalidRequest(f"Remote path escapes the instance: {remote_path}")
        return Path(handle.sandbox_root).joinpath(*pure.parts[1:])

    def _home_dir(self, handle: InstanceHandle) -> Path:
        return self._resolve(handle, self.remote_home)

    # Registry helpers ----------------------------------------------------------

    def _state(self) -> ProviderState:
        return self._document.read()

    @staticmethod
    def _instance(state: ProviderState, instance_id: str) -> InstanceHandle:
        try:
            return state.instances[instance_id]
        except KeyError:
            raise InstanceNotFound(f"Instance '{instance_id}' not found")

    @staticmethod
    def _volume(state: ProviderState, volume_id: str) -> VolumeRecord:
        try:
            return state.volumes[volume_id]
        except KeyError:
            raise VolumeNotFound(f"Volume '{volume_id}' not found")

    def _running(self, instance_id: str) -> InstanceHandle:
        handle = self._instance(self._state(), instance_id)
        if not handle.is_running:
            raise InstanceNotRunning(f"Instance '{instance_id}' is {handle.state.value}")
        return handle

    def _ensure_snapshot(self, state: ProviderState, snapshot_id: str) -> SnapshotRecord:
        if snapshot_id not in state.snapshots and snapshot_id == self.base_snapshot_id:
            self._snapshot_dir(snapshot_id).mkdir(parents=True, exist_ok=True)
            state.snapshots[snapshot_id] = SnapshotRecord(id=snapshot_id, source="<base image>")
            logger.info(f"Seeded base snapshot {snapshot_id}")
        try:
            return state.snapshots[snapshot_id]
        except KeyError:
            raise SnapshotNotFound(f"Snapshot '{snapshot_id}' not found")

    def _new_volume(self, state: ProviderState, snapshot_id: str) -> VolumeRecord:
        self._ensure_snapshot(state, snapshot_id)
        volume = VolumeRecord(id=_new_id("vol", state.volumes), source_snapshot=snapshot_id)
        try:
            shutil.copytree(self._snapshot_dir(snapshot_id), self._volume_dir(volume.id), symlinks=True)
        except BaseException:
            shutil.rmtree(self._volume_dir(volume.id), ignore_errors=True)
            raise
        state.volumes[volume.id] = volume
        logger.debug(f"Created volume {volume.id} from {snapshot_id}")
        return volume

    def _attachable(self, state: ProviderState, volume_id: str) -> VolumeRecord:
        volume = self._volume(state, volume_id)
        if volume.deleted:
            raise VolumeDeleted(f"Volume '{volume_id}' was deleted")
        if volume.attached_to:
            holder = state.instances.get(volume.attached_to)
            if holder is not None and holder.state != InstanceState.TERMINATED:
                raise VolumeInUse(f"Volume '{volume_id}' is attached to {volume.attached_to}")
        return volume

    def _attach(self, handle: InstanceHandle, volume: VolumeRecord) -> None:
        volume.attached_to = handle.id
        handle.volume_ids.append(volume.id)
        os.symlink(self._volume_dir(volume.id), Path(handle.sandbox_root) / MOUNT_NAME, target_is_directory=True)

    # Snapshots and volumes -------------------------------------------------------

    def register_snapshot(self, template_tree: Path) -> str:
        template = Path(template_tree)
        if not template.is_dir():
            raise PathNotFound(f"Snapshot template '{template}' is not a directory")
        created: List[str] = []

        def freeze(state: ProviderState) -> None:
            snapshot_id = _new_id("snap", state.snapshots)
            shutil.copytree(template, self._snapshot_dir(snapshot_id), symlinks=True)
            state.snapshots[snapshot_id] = SnapshotRecord(id=snapshot_id, source=str(template.resolve()))
            created.append(snapshot_id)

        self._document.update(freeze)
        logger.info(f"Registered snapshot {created[0]} from {template}")
        return created[0]

    def create_volume(self, snapshot_id: str) -> VolumeRecord:
        created: List[VolumeRecord] = []
        self._document.update(lambda state: created.append(self._new_volume(state, snapshot_id)))
        return created[0]

    def delete_volume(self, volume_id: str) -> VolumeRecord:
        deleted: List[VolumeRecord] = []

        def delete(state: ProviderState) -> None:
            volume = self._volume(state, volume_id)
            if volume.deleted:
                raise VolumeDeleted(f"Volume '{volume_id}' is already deleted")
            if volume.attached_to:
                holder = state.instances.get(volume.attached_to)
                if holder is not None and holder.state != InstanceState.TERMINATED:
                    raise VolumeInUse(f"Volume '{volume_id}' is attached to running instance {holder.id}")
            volume.deleted = True
            volume.deleted_at = datetime.now()
            volume.attached_to = None
            deleted.append(volume)

        self._document.update(delete)
        shutil.rmtree(self._volume_dir(volume_id), ignore_errors=True)
        logger.info(f"Deleted volume {volume_id}")
        return deleted[0]

    # Instances --------------------------------------------------------------------

    def provision(self, count: int, type_name: str, volume_plan: Optional[VolumePlan] = None) -> List[InstanceHandle]:
        if count < 1:
            raise InvalidRequest(f"Instance count must be at least 1, got {count}")
        instance_type(type_name)
        plan = volume_plan or VolumePlan()
        if plan.attach_volume_id and count != 1:
            raise InvalidRequest("An existing volume can only be attached to a single instance")
        launched: List[InstanceHandle] = []
        made_dirs: List[Path] = []

        def launch(state: ProviderState) -> None:
            if plan.snapshot_id:
                self._ensure_snapshot(state, plan.snapshot_id)
            existing = self._attachable(state, plan.attach_volume_id) if plan.attach_volume_id else None
            try:
                for _ in range(count):
                    instance_id = _new_id("i", state.instances)
                    root = self._instance_dir(instance_id)
                    made_dirs.append(root)
                    handle = InstanceHandle(
                        id=instance_id,
                        type_name=type_name,
                        sandbox_root=str(root),
                        state_history=[InstanceState.PENDING],
                    )
                    self._home_dir(handle).mkdir(parents=True)
                    (root / "tmp").mkdir()
                    if plan.snapshot_id:
                        volume = self._new_volume(state, plan.snapshot_id)
                        made_dirs.append(self._volume_dir(volume.id))
                        self._attach(handle, volume)
                    elif existing is not None:
                        self._attach(handle, existing)
                    handle.transition(InstanceState.RUNNING)
                    state.instances[instance_id] = handle
                    state.ledger.append(LedgerEntry(instance_id=instance_id, type_name=type_name, start=datetime.now()))
                    launched.append(handle)
            except BaseException:
                for path in made_dirs:
                    shutil.rmtree(path, ignore_errors=True)
                raise

        self._document.update(launch)
        logger.info(f"Provisioned {count} x {type_name}: {', '.join(h.id for h in launched)}")
        return [handle.model_copy(deep=True) for handle in launched]

    def terminate(self, instance_id: str) -> InstanceHandle:
        current = self._instance(self._state(), instance_id)
        if current.state == InstanceState.TERMINATED:
            logger.debug(f"Instance {instance_id} already terminated")
            return current
        stopped: List[InstanceHandle] = []

        def stop(state: ProviderState) -> None:
            handle = self._instance(state, instance_id)
            if handle.state != InstanceState.TERMINATED:
                handle.transition(InstanceState.TERMINATED)
                for entry in state.ledger:
                    if entry.instance_id == instance_id and entry.is_open:
                        entry.stop = handle.terminated_at
                for volume_id in handle.volume_ids:
                    volume = state.volumes.get(volume_id)
                    if volume is not None and volume.attached_to == instance_id:
                        volume.attached_to = None
            stopped.append(handle)

        self._document.update(stop)
        shutil.rmtree(self._instance_dir(instance_id), ignore_errors=True)
        logger.info(f"Terminated instance {instance_id}")
        return stopped[0]

    def exec_command(self, instance_id: str, command: Sequence[str], env: Mapping[str, str],
                     cwd: str, log_dir: Optional[str] = None) -> ExecResult:
        handle = self._running(instance_id)
        workdir = self._resolve(handle, cwd)
        if not workdir.is_dir():
            raise PathNotFound(f"Remote directory {cwd} does not exist on {instance_id}")
        log_remote = PurePosixPath(log_dir or cwd)
        if not log_remote.is_absolute():
            log_remote = PurePosixPath(self.remote_home) / log_remote
        logs = self._resolve(handle, str(log_remote))
        logs.mkdir(parents=True, exist_ok=True)

        process_env = dict(os.environ)
        process_env["HOME"] = str(self._home_dir(handle))
        process_env["TMPDIR"] = str(Path(handle.sandbox_root) / "tmp")
        process_env.update(env)

        logger.debug(f"exec on {instance_id} in {cwd}: {list(command)}")
        started = time.monotonic()
        with open(logs / "stdout.log", "w", encoding="utf-8") as out, \
                open(logs / "stderr.log", "w", encoding="utf-8") as err:
            try:
                completed = subprocess.run(
                    list(command), cwd=workdir, env=process_env,
                    stdin=subprocess.DEVNULL, stdout=out, stderr=err,
                )
                exit_code = completed.returncode
            except FileNotFoundError as e:
                err.write(f"command not found: {e}\n")
                exit_code = 127
            except PermissionError as e:
                err.write(f"command not executable: {e}\n")
                exit_code = 126
        wall_seconds = max(0.0, time.monotonic() - started)

        return ExecResult(
            exit_code=exit_code,
            stdout_log=str(log_remote / "stdout.log"),
            stderr_log=str(log_remote / "stderr.log"),
            wall_seconds=wall_seconds,
        )

    def open_remote_tree(self, instance_id: str) -> RemoteTree:
        handle = self._running(instance_id)
        home = self._home_dir(handle)
        home.mkdir(parents=True, exist_ok=True)
        return RemoteTree(instance_id, self.remote_home, home)

    def runtime_path(self, instance_id: str, remote_path: str) -> str:
        return str(self._resolve(self._instance(self._state(), instance_id), remote_path))

    # Accounting and views ---------------------------------------------------------------

    def accrued_seconds(self, instance_id: str) -> float:
        state = self._state()
        self._instance(state, instance_id)
        now = datetime.now()
        return sum(entry.seconds(now) for entry in state.ledger if entry.instance_id == instance_id)

    def describe_instance(self, instance_id: str) -> InstanceHandle:
        return self._instance(self._state(), instance_id)

    def describe_volume(self, volume_id: str) -> VolumeRecord:
        return self._volume(self._state(), volume_id)

    def list_instances(self) -> List[InstanceHandle]:
        return sorted(self._state().instances.values(), key=lambda handle: handle.id)

    def list_volumes(self) -> List[VolumeRecord]:
        return sorted(self._state().volumes.values(), key=lambda volume: volume.id)

    def list_snapshots(self) -> List[SnapshotRecord]:
        return sorted(self._state().snapshots.values(), key=lambda snapshot: snapshot.id)

    def ledger(self) -> List[LedgerEntry]:
        return list(self._state().ledger)
