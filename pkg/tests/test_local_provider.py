"""Local sandbox provider: snapshots, volumes, instances, execution and billing."""

import os
import random
import time
from pathlib import Path
from typing import Dict

import pytest

from rbc_lifecycle.config import Config
from rbc_lifecycle.errors import (
    InstanceNotFound,
    InstanceNotRunning,
    InvalidRequest,
    PathNotFound,
    ProviderNotImplemented,
    SnapshotNotFound,
    UnknownInstanceType,
    VolumeDeleted,
    VolumeInUse,
)
from rbc_lifecycle.local_provider import MOUNT_NAME, LocalSandboxProvider
from rbc_lifecycle.models import InstanceState, VolumePlan
from rbc_lifecycle.provider import INSTANCE_TYPES, Ec2Provider, get_provider
from rbc_lifecycle.sync_engine import build_manifest


def tree_bytes(root: Path) -> Dict[str, bytes]:
    return {
        path.relative_to(root).as_posix(): path.read_bytes()
        for path in sorted(Path(root).rglob("*"))
        if path.is_file()
    }


@pytest.fixture
def template(tmp_path) -> Path:
    root = tmp_path / "template"
    (root / "genomes").mkdir(parents=True)
    (root / "genomes" / "hg19.fa").write_text(">chr1\nACGT\n")
    (root / "README").write_text("reference data\n")
    return root


def test_register_snapshot_freezes_content(provider, template):
    snapshot_id = provider.register_snapshot(template)
    frozen = tree_bytes(template)
    (template / "README").write_text("edited after freezing\n")
    (template / "extra.txt").write_text("new\n")

    volume = provider.create_volume(snapshot_id)

    assert tree_bytes(provider.workdir / "volumes" / volume.id) == frozen
    assert volume.source_snapshot == snapshot_id


def test_empty_snapshot_gives_empty_volumes(provider, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    volume = provider.create_volume(provider.register_snapshot(empty))
    assert tree_bytes(provider.workdir / "volumes" / volume.id) == {}


def test_register_snapshot_of_missing_tree(provider, tmp_path):
    with pytest.raises(PathNotFound):
        provider.register_snapshot(tmp_path / "nope")


def test_volumes_from_one_snapshot_are_distinct_copies(provider, template):
    snapshot_id = provider.register_snapshot(template)
    first, second = provider.create_volume(snapshot_id), provider.create_volume(snapshot_id)

    assert first.id != second.id
    assert tree_bytes(provider.workdir / "volumes" / first.id) == tree_bytes(provider.workdir / "volumes" / second.id)


def test_default_snapshot_is_seeded_on_first_use(provider):
    volume = provider.create_volume("snap-default")
    assert [snapshot.id for snapshot in provider.list_snapshots()] == ["snap-default"]
    assert tree_bytes(provider.workdir / "volumes" / volume.id) == {}


def test_create_volume_from_unknown_snapshot(provider):
    with pytest.raises(SnapshotNotFound):
        provider.create_volume("snap-bogus")


def test_provision_single_xlarge(provider):
    (handle,) = provider.provision(1, "m1.xlarge", VolumePlan(snapshot_id="snap-default"))

    assert handle.state == InstanceState.RUNNING
    assert handle.state_history == [InstanceState.PENDING, InstanceState.RUNNING]
    assert len(handle.volume_ids) == 1
    mount = Path(handle.sandbox_root) / MOUNT_NAME
    assert mount.is_symlink()
    assert mount.resolve() == (provider.workdir / "volumes" / handle.volume_ids[0]).resolve()
    assert provider.describe_volume(handle.volume_ids[0]).attached_to == handle.id
    assert len(provider.open_ledger_entries()) == 1


def test_provision_cluster_of_eight(provider):
    handles = provider.provision(8, "m1.large", VolumePlan(snapshot_id="snap-default"))

    assert len(handles) == 8
    assert len({handle.sandbox_root for handle in handles}) == 8
    assert len({vid for handle in handles for vid in handle.volume_ids}) == 8
    assert all(handle.is_running for handle in handles)


def test_failed_provision_leaves_no_instance_or_volume_trees(provider, monkeypatch):
    attach = provider._attach
    calls = []

    def attach_then_fail(handle, volume):
        calls.append(volume.id)
        if len(calls) == 2:
            raise OSError("mount failed")
        attach(handle, volume)

    monkeypatch.setattr(provider, "_attach", attach_then_fail)

    with pytest.raises(OSError):
        provider.provision(3, "m1.small", VolumePlan(snapshot_id="snap-default"))

    assert len(calls) == 2
    assert provider.list_instances() == []
    assert provider.list_volumes() == []
    assert list((provider.workdir / "volumes").iterdir()) == []
    assert list((provider.workdir / "instances").iterdir()) == []


@pytest.mark.parametrize("count, type_name, error", [
    (0, "m1.small", InvalidRequest),
    (1, "t9.enormous", UnknownInstanceType),
])
def test_provision_preconditions(provider, count, type_name, error):
    with pytest.raises(error):
        provider.provision(count, type_name)
    assert provider.list_instances() == []


def test_attach_existing_volume(provider):
    volume = provider.create_volume("snap-default")
    (provider.workdir / "volumes" / volume.id / "keep.txt").write_text("persisted\n")

    with pytest.raises(InvalidRequest):
        provider.provision(2, "m1.small", VolumePlan(attach_volume_id=volume.id))
    (handle,) = provider.provision(1, "m1.small", VolumePlan(attach_volume_id=volume.id))

    assert (Path(handle.sandbox_root) / MOUNT_NAME / "keep.txt").read_text() == "persisted\n"
    with pytest.raises(VolumeInUse):
        provider.provision(1, "m1.small", VolumePlan(attach_volume_id=volume.id))

    provider.terminate(handle.id)
    assert provider.describe_volume(volume.id).attached_to is None
    (again,) = provider.provision(1, "m1.small", VolumePlan(attach_volume_id=volume.id))
    assert (Path(again.sandbox_root) / MOUNT_NAME / "keep.txt").exists()


def test_deleted_volume_is_never_attachable(provider):
    volume = provider.create_volume("snap-default")
    provider.delete_volume(volume.id)

    with pytest.raises(VolumeDeleted):
        provider.provision(1, "m1.small", VolumePlan(attach_volume_id=volume.id))
    with pytest.raises(VolumeDeleted):
        provider.delete_volume(volume.id)
    assert not (provider.workdir / "volumes" / volume.id).exists()


def test_delete_volume_of_running_instance_is_refused(provider):
    (handle,) = provider.provision(1, "m1.small", VolumePlan(snapshot_id="snap-default"))
    with pytest.raises(VolumeInUse):
        provider.delete_volume(handle.volume_ids[0])

    provider.terminate(handle.id)
    assert provider.delete_volume(handle.volume_ids[0]).deleted


def test_exec_command_writes_into_remote_tree(provider):
    (handle,) = provider.provision(1, "m1.small")
    tree = provider.open_remote_tree(handle.id)
    (tree / "job" / "Results").mkdir(parents=True)

    result = provider.exec_command(
        handle.id, ["sh", "-c", 'echo "$GREETING" > Results/out.txt; echo done'], {"GREETING": "hello"},
        cwd="job",
    )

    assert result.exit_code == 0
    assert (tree / "job" / "Results" / "out.txt").read_text() == "hello\n"
    assert result.stdout_log == "/home/root/job/stdout.log"
    assert (tree / "job" / "stdout.log").read_text() == "done\n"
    assert result.wall_seconds >= 0


def test_exec_command_reports_exit_codes(provider):
    (handle,) = provider.provision(1, "m1.small")
    tree = provider.open_remote_tree(handle.id)

    assert provider.exec_command(handle.id, ["sh", "-c", "exit 3"], {}, cwd="/home/root").exit_code == 3
    missing = provider.exec_command(handle.id, ["no-such-runtime-binary"], {}, cwd="/home/root", log_dir="logs")
    assert missing.exit_code == 127
    assert "command not found" in (tree / "logs" / "stderr.log").read_text()


def test_exec_command_environment_points_inside_the_sandbox(provider):
    (handle,) = provider.provision(1, "m1.small")
    tree = provider.open_remote_tree(handle.id)

    provider.exec_command(handle.id, ["sh", "-c", 'echo "$HOME"; echo "$TMPDIR"'], {}, cwd="/home/root")

    home, tmpdir = (tree / "stdout.log").read_text().splitlines()
    assert Path(home) == tree.path
    assert Path(tmpdir) == Path(handle.sandbox_root) / "tmp"


def test_exec_command_is_hermetic(provider, tmp_path):
    guard = tmp_path / "guard"
    guard.mkdir()
    (guard / "sentinel").write_text("untouched\n")
    before = {p: p.stat().st_mtime_ns for p in guard.rglob("*")}
    (handle,) = provider.provision(1, "m1.small")

    provider.exec_command(handle.id, ["sh", "-c", 'mkdir -p out && echo x > out/y && echo t > "$TMPDIR/t"'], {},
                          cwd="/home/root")

    assert {p: p.stat().st_mtime_ns for p in guard.rglob("*")} == before
    assert (provider.open_remote_tree(handle.id) / "out" / "y").exists()


def test_exec_command_preconditions(provider):
    (handle,) = provider.provision(1, "m1.small")
    with pytest.raises(PathNotFound):
        provider.exec_command(handle.id, ["true"], {}, cwd="missing")
    with pytest.raises(InvalidRequest):
        provider.exec_command(handle.id, ["true"], {}, cwd="../../escape")

    provider.terminate(handle.id)
    with pytest.raises(InstanceNotRunning):
        provider.exec_command(handle.id, ["true"], {}, cwd="/home/root")
    with pytest.raises(InstanceNotRunning):
        provider.open_remote_tree(handle.id)


def test_remote_tree_starts_empty_and_counts_synced_files(provider):
    (handle,) = provider.provision(1, "m1.small")
    tree = provider.open_remote_tree(handle.id)
    assert len(build_manifest(tree.path)) == 0

    for n in range(5):
        (tree / f"f{n}.txt").write_text(str(n))
    assert len(build_manifest(tree.path)) == 5


def test_terminate_closes_billing_and_is_idempotent(provider):
    (handle,) = provider.provision(1, "m1.small")
    assert provider.accrued_seconds(handle.id) >= 0

    stopped = provider.terminate(handle.id)
    again = provider.terminate(handle.id)

    assert stopped.state == again.state == InstanceState.TERMINATED
    assert stopped.terminated_at == again.terminated_at
    assert stopped.state_history == [InstanceState.PENDING, InstanceState.RUNNING, InstanceState.TERMINATED]
    assert provider.open_ledger_entries() == []
    assert not Path(handle.sandbox_root).exists()

    first = provider.accrued_seconds(handle.id)
    time.sleep(0.05)
    assert provider.accrued_seconds(handle.id) == first


def test_unknown_instance(provider):
    with pytest.raises(InstanceNotFound):
        provider.accrued_seconds("i-bogus")
    with pytest.raises(InstanceNotFound):
        provider.terminate("i-bogus")


def test_accrued_cost_uses_catalog_rate(provider):
    (handle,) = provider.provision(1, "cc2.8xlarge")
    provider.terminate(handle.id)
    seconds = provider.accrued_seconds(handle.id)
    assert provider.accrued_cost(handle.id) == pytest.approx(seconds / 3600 * INSTANCE_TYPES["cc2.8xlarge"].hourly_rate)


def test_two_providers_share_one_sandbox(tmp_path):
    first = LocalSandboxProvider(tmp_path / "shared")
    second = LocalSandboxProvider(tmp_path / "shared")
    (handle,) = first.provision(1, "m1.small")

    second.terminate(handle.id)

    assert first.describe_instance(handle.id).state == InstanceState.TERMINATED


def test_factory_selects_provider(tmp_path):
    local = get_provider(Config(provider_workdir=tmp_path / "sb", remote_user="ubuntu"))
    assert isinstance(local, LocalSandboxProvider)
    assert local.remote_home == "/home/ubuntu"

    ec2 = get_provider(Config(provider="ec2"))
    assert isinstance(ec2, Ec2Provider)
    with pytest.raises(ProviderNotImplemented):
        ec2.provision(1, "m1.small")


# ---------------------------------------------------------------------------
# Randomized operations against a model of the instance/volume state machine
# ---------------------------------------------------------------------------

OPERATIONS_PER_SEED = 100


@pytest.mark.parametrize("seed", range(12))
def test_random_operations_match_the_state_machine_model(tmp_path, seed):
    rng = random.Random(seed)
    provider = LocalSandboxProvider(tmp_path / "sandbox")
    template = tmp_path / "template"
    template.mkdir()
    for n in range(rng.randint(0, 4)):
        (template / f"file{n}.dat").write_bytes(os.urandom(rng.randint(0, 512)))
    snapshot_id = provider.register_snapshot(template)
    frozen = tree_bytes(template)
    (template / "late.dat").write_bytes(b"added after freezing")

    states: Dict[str, str] = {}
    volumes: Dict[str, Dict] = {}
    closed_accrual: Dict[str, float] = {}
    last_accrual: Dict[str, float] = {}
    types = sorted(INSTANCE_TYPES)

    for _ in range(OPERATIONS_PER_SEED):
        op = rng.choice(["provision", "terminate", "terminate", "create_volume", "delete_volume", "sample"])

        if op == "provision":
            plan = VolumePlan(snapshot_id=snapshot_id) if rng.random() < 0.6 else None
            for handle in provider.provision(rng.randint(1, 3), rng.choice(types), plan):
                states[handle.id] = "running"
                for vid in handle.volume_ids:
                    volumes[vid] = {"attached_to": handle.id, "deleted": False}
                    assert tree_bytes(provider.workdir / "volumes" / vid) == frozen

        elif op == "terminate" and states:
            iid = rng.choice(sorted(states))
            provider.terminate(iid)
            if states[iid] == "running":
                states[iid] = "terminated"
                closed_accrual[iid] = provider.accrued_seconds(iid)
                for volume in volumes.values():
                    if volume["attached_to"] == iid:
                        volume["attached_to"] = None

        elif op == "create_volume":
            volume = provider.create_volume(snapshot_id)
            volumes[volume.id] = {"attached_to": None, "deleted": False}
            assert tree_bytes(provider.workdir / "volumes" / volume.id) == frozen

        elif op == "delete_volume" and volumes:
            vid = rng.choice(sorted(volumes))
            expected = volumes[vid]
            if expected["deleted"]:
                with pytest.raises(VolumeDeleted):
                    provider.delete_volume(vid)
            elif expected["attached_to"] is not None:
                with pytest.raises(VolumeInUse):
                    provider.delete_volume(vid)
            else:
                provider.delete_volume(vid)
                expected["deleted"] = True

        handles = {handle.id: handle for handle in provider.list_instances()}
        assert {iid: handle.state.value for iid, handle in handles.items()} == states
        for iid, handle in handles.items():
            history = [InstanceState.PENDING, InstanceState.RUNNING]
            if states[iid] == "terminated":
                history.append(InstanceState.TERMINATED)
            assert handle.state_history == history
            assert (handle.terminated_at is not None) == (states[iid] == "terminated")

        open_entries = sorted(entry.instance_id for entry in provider.open_ledger_entries())
        assert open_entries == sorted(iid for iid, state in states.items() if state == "running")

        recorded = {volume.id: volume for volume in provider.list_volumes()}
        assert {vid: (v.attached_to, v.deleted) for vid, v in recorded.items()} == {
            vid: (v["attached_to"], v["deleted"]) for vid, v in volumes.items()
        }

        for iid in states:
            seconds = provider.accrued_seconds(iid)
            assert seconds >= last_accrual.get(iid, 0.0)
            if iid in closed_accrual:
                assert seconds == closed_accrual[iid]
            last_accrual[iid] = seconds

    for iid in sorted(states):
        provider.terminate(iid)
    assert provider.open_ledger_entries() == []
