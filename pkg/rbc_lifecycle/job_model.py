"""Host job directory convention: scripts, data, Results/ and RunResults/."""

import logging
import os
from pathlib import Path
from typing import List, Optional, Union

from .errors import MissingResultsDir, MissingRunResultsDir, NotADirectory
from .models import JobDirectory

logger = logging.getLogger(__name__)

SCRIPT_SUFFIX = ".R"
RESULTS_DIR = "Results"
RUNRESULTS_DIR = "RunResults"
RUNS_DIR = ".runs"
# Never pushed from the host; on the remote side .runs/ holds run snapshots outside the synced scope.
JOB_EXCLUSIONS = (f"{RUNRESULTS_DIR}/", f"{RUNS_DIR}/")


def discover_scripts(root: Path) -> List[str]:
    """Top-level, non-hidden regular files with the script suffix, sorted."""
    scripts = []
    for entry in root.iterdir():
        if entry.name.startswith(".") or entry.suffix != SCRIPT_SUFFIX:
            continue
        if entry.is_symlink() or not entry.is_file():
            continue
        scripts.append(entry.name)
    return sorted(scripts)


def validate_job_dir(path: Union[str, Path]) -> JobDirectory:
    """Check the layout of a job directory without modifying it."""
    root = Path(path).expanduser()
    if not root.is_dir():
        raise NotADirectory(f"Job directory '{root}' does not exist or is not a directory")
    root = root.resolve()
    if not (root / RESULTS_DIR).is_dir():
        raise MissingResultsDir(f"Job directory '{root}' has no {RESULTS_DIR}/ sub-directory")
    if not (root / RUNRESULTS_DIR).is_dir():
        raise MissingRunResultsDir(f"Job directory '{root}' has no {RUNRESULTS_DIR}/ sub-directory")

    job = JobDirectory(root=root, name=root.name, scripts=discover_scripts(root))
    logger.debug(f"Validated job directory {root} with scripts {job.scripts}")
    return job


def resolve_job_dir(flag_value: Optional[Union[str, Path]] = None) -> JobDirectory:
    """The -jobdir value if given, else the current working directory."""
    return validate_job_dir(flag_value if flag_value else os.getcwd())
