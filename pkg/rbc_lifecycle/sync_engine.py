"""Manifest-based incremental directory synchronization.

A sync builds a checksummed manifest of both trees, diffs them into a
ChangeSet and applies it: new or changed files are copied (size mismatch
decides immediately, equal sizes are confirmed by SHA-256), files missing
at the source are deleted at the destination. Only the synced scope is
touched: paths matching an exclusion are invisible on both sides.

Exclusion patterns are either a directory prefix (``RunResults/``), a
literal path (``timings.tsv``) or a glob where ``*`` matches within one
path segment (``*.log``; patterns without ``/`` also match basenames).
"""

import hashlib
import logging
import os
import re
import shutil
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from .errors import TransferFailed, TreeUnreadable
from .models import ChangeSet, Manifest, ManifestEntry, TransferStats

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1024 * 1024

_glob_cache: Dict[str, "re.Pattern[str]"] = {}


def _glob(pattern: str) -> "re.Pattern[str]":
    if pattern not in _glob_cache:
        _glob_cache[pattern] = re.compile("^" + re.escape(pattern).replace(r"\*", "[^/]*") + "$")
    return _glob_cache[pattern]


def is_excluded(path: str, exclusions: Iterable[str]) -> bool:
    """True if the relative POSIX path falls under any exclusion pattern."""
    basename = path.rsplit("/", 1)[-1]
    for pattern in exclusions:
        if pattern.endswith("/"):
            prefix = pattern.rstrip("/")
            if path == prefix or path.startswith(prefix + "/"):
                return True
        elif "*" in pattern:
            if _glob(pattern).match(path):
                return True
            if "/" not in pattern and _glob(pattern).match(basename):
                return True
        elif path == pattern or path.startswith(pattern + "/"):
            return True
    return False


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(tree: Path, exclusions: Sequence[str] = ()) -> Manifest:
    """Inventory every regular file under tree that no exclusion matches.

    Symbolic links are never followed; they are skipped with a warning.
    """
    root = Path(tree)
    if not root.is_dir():
        raise TreeUnreadable(f"Tree '{root}' is not a readable directory")

    def fail(error: OSError) -> None:
        raise TreeUnreadable(f"Cannot read '{error.filename}': {error.strerror}")

    entries: Dict[str, ManifestEntry] = {}
    directories: List[str] = []
    try:
        for dirpath, dirnames, filenames in os.walk(root, onerror=fail):
            here = Path(dirpath)
            rel_dir = here.relative_to(root)
            kept = []
            for name in sorted(dirnames):
                rel = (rel_dir / name).as_posix()
                if (here / name).is_symlink():
                    logger.warning(f"Skipping symbolic link {root / rel}")
                    continue
                if is_excluded(rel, exclusions):
                    continue
                kept.append(name)
                directories.append(rel)
            dirnames[:] = kept
            for name in sorted(filenames):
                full = here / name
                rel = (rel_dir / name).as_posix()
                if full.is_symlink():
                    logger.warning(f"Skipping symbolic link {full}")
                    continue
                if is_excluded(rel, exclusions) or not full.is_file():
                    continue
                stat = full.stat()
                entries[rel] = ManifestEntry(size=stat.st_size, mtime=stat.st_mtime, checksum=file_digest(full))
    except OSError as e:
        raise TreeUnreadable(f"Cannot read tree '{root}': {e}")

    return Manifest(root=str(root), entries=entries, directories=sorted(directories))


def diff(src: Manifest, dst: Manifest) -> ChangeSet:
    """Minimal plan that makes dst's scope equal src's."""
    to_copy = []
    for path, entry in sorted(src.entries.items()):
        other = dst.entries.get(path)
        if other is None or other.size != entry.size or other.checksum != entry.checksum:
            to_copy.append(path)
    to_delete = sorted(path for path in dst.entries if path not in src.entries)
    src_dirs, dst_dirs = set(src.directories), set(dst.directories)
    return ChangeSet(
        to_copy=to_copy,
        to_delete=to_delete,
        dirs_to_create=sorted(src_dirs - dst_dirs),
        # deepest first so parents empty out before their own removal
        dirs_to_remove=sorted(dst_dirs - src_dirs, key=lambda path: (-path.count("/"), path)),
        bytes_planned=sum(src.entries[path].size for path in to_copy),
    )


def _copy_file(source: Path, target: Path) -> int:
    target.parent.mkdir(parents=True, exist_ok=True)
    temporary = target.with_name(f".{target.name}.rbc-partial")
    try:
        shutil.copy2(source, temporary)
        size = temporary.stat().st_size
        os.replace(temporary, target)
    finally:
        if temporary.exists():
            temporary.unlink()
    return size


def apply(changeset: ChangeSet, src: Path, dst: Path) -> TransferStats:
    """Apply changeset to dst. On failure the partial stats ride on TransferFailed."""
    src, dst = Path(src), Path(dst)
    started = time.monotonic()
    stats = TransferStats()
    current = ""
    try:
        dst.mkdir(parents=True, exist_ok=True)
        for current in changeset.to_delete:
            try:
                (dst / current).unlink()
            except FileNotFoundError:
                continue
            stats.files_deleted += 1
            logger.debug(f"deleted {dst / current}")
        for current in changeset.dirs_to_remove:
            try:
                (dst / current).rmdir()
            except OSError:
                logger.debug(f"kept non-empty directory {dst / current}")
        for current in changeset.dirs_to_create:
            (dst / current).mkdir(parents=True, exist_ok=True)
        for current in changeset.to_copy:
            stats.bytes_copied += _copy_file(src / current, dst / current)
            stats.files_copied += 1
            logger.debug(f"copied {current}")
    except OSError as e:
        stats.wall_seconds = time.monotonic() - started
        raise TransferFailed(f"Transfer into {dst} failed: {e}", current, stats)
    stats.wall_seconds = time.monotonic() - started
    return stats


def sync(src: Path, dst: Path, exclusions: Sequence[str] = (), dst_exclusions: Optional[Sequence[str]] = None) -> TransferStats:
    """Make dst mirror src minus exclusions.

    dst_exclusions additionally hides destination paths that lie outside the
    synced scope (execution logs, run snapshots) so they are never deleted.
    """
    started = time.monotonic()
    src_manifest = build_manifest(src, exclusions)
    Path(dst).mkdir(parents=True, exist_ok=True)
    dst_manifest = build_manifest(dst, list(exclusions) + list(dst_exclusions or ()))
    changes = diff(src_manifest, dst_manifest)
    stats = apply(changes, src, dst)
    stats.wall_seconds = time.monotonic() - started
    logger.info(
        f"Synced {src} -> {dst}: {stats.files_copied} copied, "
        f"{stats.files_deleted} deleted, {stats.bytes_copied} bytes"
    )
    return stats
