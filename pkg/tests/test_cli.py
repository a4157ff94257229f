"""Command-line surface: flags, exit codes and reports."""

import pytest

from rbc_lifecycle import __version__
from rbc_lifecycle.cli import (
    COMMANDS,
    execute_main,
    gather_main,
    main,
    results_main,
    submit_main,
    terminate_main,
)
from rbc_lifecycle.local_provider import LocalSandboxProvider
from rbc_lifecycle.state_store import StateStore
from rbc_lifecycle.timing import TIMINGS_FILE

ENTRY_POINTS = {
    "gather": gather_main,
    "submit": submit_main,
    "execute": execute_main,
    "results": results_main,
    "terminate": terminate_main,
}


def store_version(config) -> int:
    return StateStore(config.state_path).version


def test_full_lifecycle_from_the_command_line(cli_config, make_job, capsys):
    job = make_job("BSGenome")
    jobdir = str(job.root)

    assert gather_main(["-rname", "BSgenome_instance", "-rsize", "1", "-desc", "For_Genome_Searching"]) == 0
    assert submit_main(["-rname", "BSgenome_instance", "-jobdir", jobdir]) == 0
    assert execute_main(["-rname", "BSgenome_instance", "-jobdir", jobdir, "-rscript", "search.R",
                         "-runname", "Run1_on_BSgenome_instance"]) == 0
    assert results_main(["-rname", "BSgenome_instance", "-jobdir", jobdir, "-frommaster",
                         "-runname", "Run1_on_BSgenome_instance"]) == 0
    assert terminate_main(["-rname", "BSgenome_instance", "-deletevol"]) == 0

    out = capsys.readouterr().out
    assert "✅ Gathered BSgenome_instance" in out
    assert out.count("⏱") == 5
    retrieved = job.run_results_dir("Run1_on_BSgenome_instance")
    assert (retrieved / "a.txt").read_text() == "alpha\n"
    assert (retrieved / "b.txt").read_text() == "beta Run1_on_BSgenome_instance\n"
    assert len((retrieved / TIMINGS_FILE).read_text().splitlines()) == 5

    provider = LocalSandboxProvider(cli_config.provider_workdir)
    assert provider.running_instances() == []
    assert all(volume.deleted for volume in provider.list_volumes())


def test_umbrella_command_and_tsv_report(cli_config, make_job, capsys, monkeypatch):
    job = make_job("logitT")
    monkeypatch.chdir(job.root)

    assert main(["gather", "-rname", "pair", "-rsize", "2", "-report", "tsv"]) == 0
    assert main(["submit", "-rname", "pair", "-toallnodes", "-report", "tsv"]) == 0

    lines = capsys.readouterr().out.splitlines()
    gathered = lines[0].split("\t")
    assert gathered[:3] == ["pair", "2", "m1.small"]
    assert lines[1].split("\t")[:3] == ["gather", "pair", "-"]
    submitted = [line.split("\t") for line in lines[2:4]]
    assert sorted(row[0] for row in submitted) == sorted(gathered[4].split(","))
    assert all(row[1] == "1" for row in submitted)
    assert lines[4].startswith("submit\tpair\t-\t")


@pytest.mark.parametrize("argv", [
    ["-rname", "x", "-ebsvol", "vol-1", "-snap", "snap-1"],
    ["-rname", "x", "-rsize", "0"],
    ["-rname", "x", "-rsize", "many"],
    ["-rname", "x", "-bogus"],
])
def test_gather_usage_errors(cli_config, argv):
    assert gather_main(argv) == 2
    assert not cli_config.state_path.exists()


@pytest.mark.parametrize("command, argv", [
    ("execute", ["-rname", "x", "-rscript", "search.R"]),
    ("results", ["-rname", "x"]),
    ("results", ["-rname", "x", "-runname", "r", "-frommaster", "-fromall"]),
    ("submit", ["-rname", "x", "-toallnodes", "-tomaster"]),
])
def test_usage_errors_exit_2(cli_config, command, argv):
    assert ENTRY_POINTS[command](argv) == 2


def test_duplicate_resource_name_exits_1(cli_config, capsys):
    assert gather_main(["-rname", "BSgenome_instance"]) == 0
    capsys.readouterr()

    assert gather_main(["-rname", "BSgenome_instance"]) == 1
    assert "DuplicateResourceName" in capsys.readouterr().err


def test_unknown_resource_exits_1(cli_config, make_job, capsys):
    job = make_job()
    assert submit_main(["-rname", "nowhere", "-jobdir", str(job.root)]) == 1
    assert "❌ ResourceNotFound" in capsys.readouterr().err


def test_failed_payload_exits_1_and_is_recorded(cli_config, make_job, capsys):
    job = make_job(scripts={"broken.R": "exit 7\n"})
    gather_main(["-rname", "r"])
    submit_main(["-rname", "r", "-jobdir", str(job.root)])

    code = execute_main(["-rname", "r", "-jobdir", str(job.root), "-rscript", "broken.R", "-runname", "bad"])

    assert code == 1
    assert "ExecutionFailed" in capsys.readouterr().err
    run = StateStore(cli_config.state_path).lookup_run("r", job.name, "bad")
    assert run.exit_code == 7


def test_missing_script_without_terminal_exits_2(cli_config, make_job, capsys):
    job = make_job()
    gather_main(["-rname", "r"])
    submit_main(["-rname", "r", "-jobdir", str(job.root)])

    assert execute_main(["-rname", "r", "-jobdir", str(job.root), "-runname", "Run1"]) == 2
    assert "NonInteractiveSession" in capsys.readouterr().err


@pytest.mark.parametrize("command", sorted(COMMANDS))
@pytest.mark.parametrize("flag", ["-h", "-v"])
def test_help_and_version_have_no_side_effects(cli_config, capsys, command, flag):
    gather_main(["-rname", "existing"])
    version = store_version(cli_config)
    capsys.readouterr()

    assert ENTRY_POINTS[command]([flag]) == 0
    assert main([command, flag]) == 0

    out = capsys.readouterr().out
    if flag == "-v":
        assert __version__ in out
    else:
        assert "-rname" in out
    assert store_version(cli_config) == version
    assert len(LocalSandboxProvider(cli_config.provider_workdir).list_instances()) == 1


def test_alias_programs_carry_their_names(cli_config, capsys):
    assert gather_main(["-h"]) == 0
    assert "RBC_GatherResource" in capsys.readouterr().out
