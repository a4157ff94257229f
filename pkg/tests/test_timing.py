"""Timing lines, timings.tsv and report formatting."""

from rbc_lifecycle.models import PhaseTiming, RetrievalReport, RunRecord, TerminationSummary, TransferStats
from rbc_lifecycle.timing import (
    TIMINGS_FILE,
    emit_timing,
    format_retrieval_report,
    format_termination,
    write_run_timings,
)


def test_timing_lines():
    gather = PhaseTiming(phase="gather", seconds=0.8, resource="BSgenome_instance")
    execute = PhaseTiming(phase="execute", seconds=12.34567, resource="BSgenome_instance", run_name="Run1")

    assert emit_timing(gather, "tsv") == "gather\tBSgenome_instance\t-\t0.800"
    assert emit_timing(execute, "tsv") == "execute\tBSgenome_instance\tRun1\t12.346"
    assert emit_timing(execute).startswith("⏱")
    assert emit_timing(execute).endswith("12.346s")


def test_timings_file_is_in_lifecycle_order(tmp_path):
    run = RunRecord(
        run_name="Run1", resource="r", job="job", script="a.R",
        phase_timings={"retrieve": 0.5, "gather": 1.0, "execute": 2.0, "submit": 0.25},
    )

    path = write_run_timings(run, tmp_path / "RunResults" / "Run1")

    assert path.name == TIMINGS_FILE
    rows = [line.split("\t") for line in path.read_text().splitlines()]
    assert [row[0] for row in rows] == ["gather", "submit", "execute", "retrieve"]
    assert rows[1] == ["submit", "r", "Run1", "0.250"]


def test_retrieval_report_formats():
    report = RetrievalReport(
        run_name="Run1", source="all", destination="/jobs/x/RunResults/Run1",
        per_node={"i-2": TransferStats(files_copied=1, bytes_copied=10),
                  "i-1": TransferStats(files_copied=2, bytes_copied=5)},
    )

    assert format_retrieval_report(report, "tsv").splitlines() == ["instance\tfiles\tbytes", "i-1\t2\t5", "i-2\t1\t10"]
    text = format_retrieval_report(report).splitlines()
    assert text[-1].split() == ["total", "3", "15"]


def test_termination_text():
    assert "already terminated" in format_termination(TerminationSummary(resource="r"))
    summary = TerminationSummary(resource="r", instances_terminated=["i-1"], volumes_kept=["vol-1"])
    assert format_termination(summary) == "Terminated r: 1 instance(s), kept volume(s) vol-1"
