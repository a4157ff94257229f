"""Command-line interface: ``rbc <command>`` plus one alias binary per command.

Flags are single-dash long options exactly as the commands have always
printed them (``-rname``, ``-rsize`` ...). Exit codes: 0 success,
1 operational failure, 2 usage error.
"""

import argparse
import logging
import os
import sys
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .errors import RbcError
from .job_model import resolve_job_dir
from .lifecycle import Lifecycle
from .models import EbsSpec, PhaseTiming
from .timing import FORMATS, emit_timing, format_retrieval_report, format_termination

logger = logging.getLogger(__name__)

PROG = "rbc"


def setup_logging() -> None:
    level = os.environ.get("RBC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer value: '{value}'")
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {number}")
    return number


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-v", action="version", version=f"%(prog)s {__version__}",
                        help="show the version and exit")
    parser.add_argument("-report", choices=FORMATS, default="text",
                        help="output format of reports and timing lines (default: text)")


def _add_gather_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-rname", metavar="RESOURCE_NAME", help="name of the resource (default from config)")
    parser.add_argument("-rsize", metavar="RESOURCE_SIZE", type=positive_int, default=1,
                        help="number of instances; more than one forms a cluster (default: 1)")
    volume = parser.add_mutually_exclusive_group()
    volume.add_argument("-ebsvol", metavar="EBS_VOLUME", help="existing volume to attach (single instance only)")
    volume.add_argument("-snap", metavar="EBS_SNAP", help="snapshot to create each instance's volume from")
    parser.add_argument("-type", metavar="INSTANCE_TYPE", help="instance type (default from config)")
    parser.add_argument("-desc", metavar="RESOURCE_DESCRIPTION", default="", help="free-text description")


def _add_submit_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-rname", metavar="RESOURCE_NAME", help="name of the resource (default from config)")
    target = parser.add_mutually_exclusive_group()
    target.add_argument("-toallnodes", action="store_true", help="submit to every instance of the resource")
    target.add_argument("-tomaster", action="store_true", help="submit to the master only (default)")
    parser.add_argument("-jobdir", metavar="JOB_DIRECTORY", help="job directory (default: current directory)")
    parser.add_argument("-data", metavar="PATH", help="synchronize this folder instead of the job directory")


def _add_execute_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-rname", metavar="RESOURCE_NAME", help="name of the resource (default from config)")
    parser.add_argument("-jobdir", metavar="JOB_DIRECTORY", help="job directory (default: current directory)")
    parser.add_argument("-rscript", metavar="R_SCRIPT", help="script to execute (prompted for when omitted)")
    parser.add_argument("-runname", metavar="RUN_NAME", required=True, help="name of this run")


def _add_results_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-rname", metavar="RESOURCE_NAME", help="name of the resource (default from config)")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("-frommaster", action="store_true", help="retrieve the master's results (default)")
    source.add_argument("-fromall", action="store_true", help="retrieve every instance's results")
    parser.add_argument("-jobdir", metavar="JOB_DIRECTORY", help="job directory (default: current directory)")
    parser.add_argument("-runname", metavar="RUN_NAME", required=True, help="run whose results to retrieve")


def _add_terminate_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-rname", metavar="RESOURCE_NAME", help="name of the resource (default from config)")
    parser.add_argument("-deletevol", action="store_true", help="also delete the resource's volumes")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _print_timing(phase: str, seconds: float, resource: str, run_name: Optional[str], fmt: str) -> None:
    timing = PhaseTiming(phase=phase, seconds=max(0.0, seconds), resource=resource, run_name=run_name)
    print(emit_timing(timing, fmt))


def cmd_gather(lifecycle: Lifecycle, args: argparse.Namespace) -> int:
    ebs = EbsSpec.from_flags(volume_id=args.ebsvol, snapshot_id=args.snap)
    started = time.monotonic()
    record = lifecycle.gather_resource(args.rname, args.rsize, args.type, ebs, args.desc)
    elapsed = time.monotonic() - started
    if args.report == "tsv":
        print(f"{record.name}\t{record.size}\t{record.instance_type}\t{record.master}\t{','.join(record.instances)}")
    else:
        print(f"✅ Gathered {record.name}: {record.size} x {record.instance_type}, master {record.master}")
        for iid in record.workers:
            print(f"   worker {iid}")
    _print_timing("gather", elapsed, record.name, None, args.report)
    return 0


def cmd_submit(lifecycle: Lifecycle, args: argparse.Namespace) -> int:
    name = args.rname or lifecycle.config.default_resource_name
    jobdir = None if args.data else resolve_job_dir(args.jobdir)
    target = "allnodes" if args.toallnodes else "master"
    started = time.monotonic()
    results = lifecycle.submit_job(name, jobdir, target, data_path=args.data)
    elapsed = time.monotonic() - started
    for iid, stats in results.items():
        if args.report == "tsv":
            print(f"{iid}\t{stats.files_copied}\t{stats.files_deleted}\t{stats.bytes_copied}")
        else:
            print(f"✅ {iid}: {stats.files_copied} copied, {stats.files_deleted} deleted, {stats.bytes_copied} bytes")
    _print_timing("submit", elapsed, name, None, args.report)
    return 0


def cmd_execute(lifecycle: Lifecycle, args: argparse.Namespace) -> int:
    name = args.rname or lifecycle.config.default_resource_name
    jobdir = resolve_job_dir(args.jobdir)
    started = time.monotonic()
    run = lifecycle.execute_job(name, jobdir, args.rscript, args.runname)
    elapsed = time.monotonic() - started
    if args.report == "tsv":
        print(f"{run.run_name}\t{run.script}\t{run.status.value}\t{run.exit_code}")
    else:
        print(f"✅ Run {run.run_name} of {run.script} {run.status.value} (exit {run.exit_code})")
    _print_timing("execute", elapsed, name, run.run_name, args.report)
    return 0


def cmd_results(lifecycle: Lifecycle, args: argparse.Namespace) -> int:
    name = args.rname or lifecycle.config.default_resource_name
    jobdir = resolve_job_dir(args.jobdir)
    started = time.monotonic()
    report = lifecycle.get_results(name, jobdir, args.runname, "all" if args.fromall else "master")
    elapsed = time.monotonic() - started
    print(format_retrieval_report(report, args.report))
    _print_timing("retrieve", elapsed, name, args.runname, args.report)
    return 0


def cmd_terminate(lifecycle: Lifecycle, args: argparse.Namespace) -> int:
    summary = lifecycle.terminate_resource(args.rname, delete_volumes=args.deletevol)
    if args.report == "tsv":
        print(f"{summary.resource}\t{len(summary.instances_terminated)}\t"
              f"{','.join(summary.volumes_deleted) or '-'}\t{','.join(summary.volumes_kept) or '-'}")
    else:
        print(f"✅ {format_termination(summary)}")
        for run_name in summary.unretrieved_runs:
            print(f"   results of run {run_name} were never retrieved")
    _print_timing("terminate", summary.seconds, summary.resource, None, args.report)
    return 0


Handler = Callable[[Lifecycle, argparse.Namespace], int]

COMMANDS: Dict[str, Tuple[str, str, Callable[[argparse.ArgumentParser], None], Handler]] = {
    "gather": ("RBC_GatherResource", "Gather a resource: one instance or a cluster", _add_gather_args, cmd_gather),
    "submit": ("RBC_SubmitJob", "Submit a job directory to a resource", _add_submit_args, cmd_submit),
    "execute": ("RBC_ExecuteJob", "Execute a script of a submitted job as a named run", _add_execute_args, cmd_execute),
    "results": ("RBC_GetResults", "Retrieve the results of a run", _add_results_args, cmd_results),
    "terminate": ("RBC_TerminateResource", "Terminate a resource", _add_terminate_args, cmd_terminate),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Run analytics jobs on gathered cloud resources.",
                                     allow_abbrev=False)
    parser.add_argument("-v", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command, (_, help_text, add_args, handler) in COMMANDS.items():
        sub = subparsers.add_parser(command, help=help_text, description=help_text, allow_abbrev=False)
        add_args(sub)
        _common(sub)
        sub.set_defaults(handler=handler)
    return parser


def build_command_parser(command: str) -> argparse.ArgumentParser:
    prog, help_text, add_args, handler = COMMANDS[command]
    parser = argparse.ArgumentParser(prog=prog, description=help_text, allow_abbrev=False)
    add_args(parser)
    _common(parser)
    parser.set_defaults(command=command, handler=handler)
    return parser


def _dispatch(parser: argparse.ArgumentParser, argv: Optional[Sequence[str]]) -> int:
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for -h/-v and 2 for usage errors
        return e.code if isinstance(e.code, int) else (0 if e.code is None else 2)

    setup_logging()
    try:
        lifecycle = Lifecycle.from_environment()
        return args.handler(lifecycle, args)
    except RbcError as e:
        print(f"❌ {type(e).__name__}: {e.message}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("❌ Interrupted", file=sys.stderr)
        return 130
    except Exception as e:
        logger.error(f"Unexpected failure in {args.command}: {e}", exc_info=True)
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    return _dispatch(build_parser(), argv)


def gather_main(argv: Optional[List[str]] = None) -> int:
    return _dispatch(build_command_parser("gather"), argv)


def submit_main(argv: Optional[List[str]] = None) -> int:
    return _dispatch(build_command_parser("submit"), argv)


def execute_main(argv: Optional[List[str]] = None) -> int:
    return _dispatch(build_command_parser("execute"), argv)


def results_main(argv: Optional[List[str]] = None) -> int:
    return _dispatch(build_command_parser("results"), argv)


def terminate_main(argv: Optional[List[str]] = None) -> int:
    return _dispatch(build_command_parser("terminate"), argv)


if __name__ == "__main__":
    sys.exit(main())
