"""Exception hierarchy for the job lifecycle framework.

Every error carries the process exit code the CLI reports for it:
1 for operational failures, 2 for usage errors.
"""

from typing import Dict, Optional


class RbcError(Exception):
    """Base class for all framework errors."""

    exit_code = 1

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


class UsageError(RbcError):
    exit_code = 2


# config-state

class ConfigError(RbcError):
    pass


class MalformedConfig(ConfigError):
    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        where = ""
        if path and line_number:
            where = f"{path}:{line_number}: "
        elif line_number:
            where = f"line {line_number}: "
        super().__init__(f"{where}{message}")
        self.line_number = line_number
        self.path = path


class StateError(RbcError):
    pass


class CorruptState(StateError):
    pass


class DuplicateResourceName(StateError):
    pass


class DuplicateRunName(StateError):
    pass


class ResourceNotFound(StateError):
    pass


class RunNotFound(StateError):
    pass


class ResourceHasRuns(StateError):
    pass


# provider

class ProviderError(RbcError):
    pass


class UnknownInstanceType(ProviderError):
    pass


class SnapshotNotFound(ProviderError):
    pass


class VolumeNotFound(ProviderError):
    pass


class VolumeDeleted(VolumeNotFound):
    """Raised when deleting or attaching a volume that was already deleted."""


class VolumeInUse(ProviderError):
    pass


class InstanceNotFound(ProviderError):
    pass


class InstanceNotRunning(ProviderError):
    pass


class PathNotFound(ProviderError):
    pass


class InvalidRequest(ProviderError):
    pass


class ProviderNotImplemented(ProviderError):
    pass


# sync-engine

class SyncError(RbcError):
    pass


class TreeUnreadable(SyncError):
    pass


class TransferFailed(SyncError):
    def __init__(self, message: str, path: str, stats=None):
        super().__init__(f"{message} (at {path})")
        self.path = path
        self.stats = stats


# job-model

class JobError(RbcError):
    pass


class NotADirectory(JobError):
    pass


class MissingResultsDir(JobError):
    pass


class MissingRunResultsDir(JobError):
    pass


class NoScriptsFound(JobError):
    pass


class ScriptNotFound(JobError):
    pass


# executor / retrieval

class LifecycleError(RbcError):
    pass


class ResourceBusy(LifecycleError):
    pass


class ResourceTerminated(LifecycleError):
    pass


class JobNotSubmitted(LifecycleError):
    pass


class RunNameMissing(LifecycleError):
    pass


class VolumeWithCluster(LifecycleError):
    pass


class InvalidResourceSize(LifecycleError):
    pass


class InvalidName(LifecycleError):
    pass


class ExecutionFailed(LifecycleError):
    def __init__(self, message: str, run=None):
        super().__init__(message)
        self.run = run


class SubmissionFailed(LifecycleError):
    def __init__(self, message: str, failures: Optional[Dict[str, Exception]] = None):
        super().__init__(message)
        self.failures = failures or {}


class VolumeSpecConflict(UsageError):
    pass


class NonInteractiveSession(UsageError):
    pass
