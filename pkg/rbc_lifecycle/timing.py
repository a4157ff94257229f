"""Per-phase timing lines, the per-run timings.tsv and report formatting."""

import logging
from pathlib import Path
from typing import List

from .models import PHASES, PhaseTiming, RetrievalReport, RunRecord, TerminationSummary

logger = logging.getLogger(__name__)

TIMINGS_FILE = "timings.tsv"
FORMATS = ("text", "tsv")


def emit_timing(timing: PhaseTiming, fmt: str = "text") -> str:
    """One line for a completed phase.

    tsv: ``phase<TAB>resource<TAB>run<TAB>seconds`` with ``-`` for no run.
    """
    run = timing.run_name or "-"
    if fmt == "tsv":
        return f"{timing.phase}\t{timing.resource}\t{run}\t{timing.seconds:.3f}"
    return f"⏱  {timing.phase:<9} {timing.resource} {run} {timing.seconds:.3f}s"


def run_timings(run: RunRecord) -> List[PhaseTiming]:
    """Recorded phases of a run, in lifecycle order."""
    return [
        PhaseTiming(phase=phase, seconds=run.phase_timings[phase], resource=run.resource, run_name=run.run_name)
        for phase in PHASES
        if phase in run.phase_timings
    ]


def write_run_timings(run: RunRecord, directory: Path) -> Path:
    """(Re)write directory/timings.tsv from the run's recorded phases."""
    path = Path(directory) / TIMINGS_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [emit_timing(timing, "tsv") for timing in run_timings(run)]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    logger.debug(f"Wrote {len(lines)} timing rows to {path}")
    return path


def format_retrieval_report(report: RetrievalReport, fmt: str = "text") -> str:
    nodes = sorted(report.per_node.items())
    if fmt == "tsv":
        rows = [f"{iid}\t{stats.files_copied}\t{stats.bytes_copied}" for iid, stats in nodes]
        return "\n".join(["instance\tfiles\tbytes"] + rows)
    width = max(len("instance"), *(len(iid) for iid, _ in nodes))
    lines = [
        f"Results of {report.run_name} (from {report.source}) -> {report.destination}",
        f"  {'instance':<{width}}  {'files':>6}  {'bytes':>10}",
    ]
    for iid, stats in nodes:
        lines.append(f"  {iid:<{width}}  {stats.files_copied:>6}  {stats.bytes_copied:>10}")
    lines.append(f"  {'total':<{width}}  {report.files:>6}  {report.bytes:>10}")
    return "\n".join(lines)


def format_termination(summary: TerminationSummary) -> str:
    if not summary.instances_terminated:
        return f"Resource {summary.resource} was already terminated"
    text = f"Terminated {summary.resource}: {len(summary.instances_terminated)} instance(s)"
    if summary.volumes_deleted:
        text += f", deleted volume(s) {', '.join(summary.volumes_deleted)}"
    if summary.volumes_kept:
        text += f", kept volume(s) {', '.join(summary.volumes_kept)}"
    return text
