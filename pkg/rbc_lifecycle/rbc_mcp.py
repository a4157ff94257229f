"""RBC MCP server wrapper using FastMCP."""

import logging
from typing import Any, Callable, Dict, Optional

logger = logging.getLogger(__name__)

try:
    from mcp.server.fastmcp import FastMCP
except ImportError:
    logger.error("FastMCP not available - install mcp package")
    raise

from .errors import RbcError
from .job_model import resolve_job_dir
from .lifecycle import Lifecycle
from .models import EbsSpec
from .timing import format_retrieval_report, format_termination

app = FastMCP("RBC")

_lifecycle: Optional[Lifecycle] = None


def get_lifecycle() -> Lifecycle:
    """Lifecycle built from the environment on first use."""
    global _lifecycle
    if _lifecycle is None:
        logger.info("Initializing RBC lifecycle")
        _lifecycle = Lifecycle.from_environment()
    return _lifecycle


def _guarded(tool: str, action: Callable[[], str]) -> str:
    try:
        return action()
    except RbcError as e:
        return f"❌ {type(e).__name__}: {e.message}"
    except Exception as e:
        logger.error(f"Error in {tool}: {e}", exc_info=True)
        return f"❌ Error in {tool}: {str(e)}"


@app.tool()
def gather_resource(name: str = "", size: int = 1, instance_type: str = "", volume_id: str = "",
                    snapshot_id: str = "", description: str = "") -> str:
    """Provision a named instance (size 1) or cluster (size > 1). The first instance is the master.

    Args:
        name: Resource name (default from config)
        size: Number of instances
        instance_type: Catalog instance type (default from config)
        volume_id: Existing volume to attach; single instance only
        snapshot_id: Snapshot each instance's volume is created from
        description: Free-text description
    """
    logger.debug(f"gather_resource called with name={name}, size={size}, instance_type={instance_type}")

    def action() -> str:
        ebs = EbsSpec.from_flags(volume_id=volume_id or None, snapshot_id=snapshot_id or None)
        record = get_lifecycle().gather_resource(name or None, size, instance_type or None, ebs, description)
        return f"✅ Gathered {record.name}: {record.size} x {record.instance_type}, master {record.master}"

    return _guarded("gather_resource", action)


@app.tool()
def submit_job(jobdir: str, resource: str = "", to_all_nodes: bool = False) -> str:
    """Incrementally synchronize a job directory to the master (or every instance). RunResults/ is never sent."""
    logger.debug(f"submit_job called with jobdir={jobdir}, resource={resource}, to_all_nodes={to_all_nodes}")

    def action() -> str:
        results = get_lifecycle().submit_job(resource or None, resolve_job_dir(jobdir),
                                             "allnodes" if to_all_nodes else "master")
        copied = sum(stats.files_copied for stats in results.values())
        return f"✅ Submitted {jobdir} to {len(results)} instance(s): {copied} file(s) copied"

    return _guarded("submit_job", action)


@app.tool()
def execute_job(jobdir: str, script: str, run_name: str, resource: str = "") -> str:
    """Execute one script of a submitted job as a named run. The resource is locked until the run ends."""
    logger.debug(f"execute_job called with jobdir={jobdir}, script={script}, run_name={run_name}")

    def action() -> str:
        run = get_lifecycle().execute_job(resource or None, resolve_job_dir(jobdir), script, run_name)
        return f"✅ Run {run.run_name} {run.status.value} (exit {run.exit_code})"

    return _guarded("execute_job", action)


@app.tool()
def get_results(jobdir: str, run_name: str, resource: str = "", from_all: bool = False) -> str:
    """Retrieve a finished run's results into RunResults/<run_name>/ of the job directory."""
    logger.debug(f"get_results called with jobdir={jobdir}, run_name={run_name}, from_all={from_all}")

    def action() -> str:
        report = get_lifecycle().get_results(resource or None, resolve_job_dir(jobdir), run_name,
                                             "all" if from_all else "master")
        return "✅ " + format_retrieval_report(report)

    return _guarded("get_results", action)


@app.tool()
def terminate_resource(resource: str = "", delete_volumes: bool = False) -> str:
    """Terminate every instance of a resource, optionally deleting its volumes."""
    logger.debug(f"terminate_resource called with resource={resource}, delete_volumes={delete_volumes}")
    return _guarded(
        "terminate_resource",
        lambda: "✅ " + format_termination(get_lifecycle().terminate_resource(resource or None, delete_volumes)),
    )


@app.tool()
def list_runs(resource: str = "", job: str = "") -> str:
    """List runs of a resource (optionally of one job) in start order."""
    logger.debug(f"list_runs called with resource={resource}, job={job}")

    def action() -> str:
        runs = get_lifecycle().list_runs(resource or None, job or None)
        if not runs:
            return "No runs recorded"
        lines = [
            f"{run.job}/{run.run_name}: {run.script} {run.status.value}"
            + (f" (exit {run.exit_code})" if run.exit_code is not None else "")
            + (" retrieved" if run.retrieved_to else "")
            for run in runs
        ]
        return "\n".join(lines)

    return _guarded("list_runs", action)


@app.tool()
def describe_resource(resource: str = "") -> Dict[str, Any]:
    """Resource record with live instance states and accrued billing."""
    logger.debug(f"describe_resource called with resource={resource}")
    try:
        return get_lifecycle().describe_resource(resource or None)
    except RbcError as e:
        return {"error": f"{type(e).__name__}: {e.message}"}


@app.tool()
def lifecycle_guide() -> str:
    """Returns the RBC lifecycle workflow and tool usage guide."""

    return """
<RBC_GUIDE>
☁️ RBC - Analytics Job Lifecycle

gather_resource(name, size) [¹]
    ↓
submit_job(jobdir, resource) [²]
    ↓
execute_job(jobdir, script, run_name, resource) [³]   (repeat with new run names)
    ↓
get_results(jobdir, run_name, resource) [⁴]
    ↓
terminate_resource(resource, delete_volumes) [⁵]

[¹] Gather: one instance, or a cluster whose first instance is the master
[²] Submit: incremental sync of the job directory; RunResults/ stays on the host
[³] Execute: locks the resource, runs the script on the master, snapshots Results/
[⁴] Retrieve: copies the run's results into RunResults/<run_name>/
[⁵] Terminate: results not yet retrieved are lost

A job directory holds scripts, data, Results/ and RunResults/.
list_runs(resource) and describe_resource(resource) show what exists.
</RBC_GUIDE>
"""


def main():
    """Main entry point for console script."""
    logger.info("Starting RBC MCP server")
    app.run()


if __name__ == "__main__":
    main()
