"""Repository adapters: a deterministic in-memory repo and a directory content-hash repo.

Both present a single line of history as (Revision, Change) pairs. The hook
flow never trusts pushed data; callers always pull authoritative changes via
changes_since, so these adapters are the single source of truth.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Optional, Protocol

from buildherd.errors import (
    EmptyPathsError,
    RepositoryUnreachableError,
    UnknownRevisionError,
)
from buildherd.model import EMPTY_REVISION, Change, Revision

MANIFEST_HEADER_PREFIX = "buildherd-manifest v1"
SNAPSHOT_AUTHOR = "snapshot"
_HASH_ALGO = "sha256"


class Repository(Protocol):
    repo_id: str

    def head(self) -> Revision: ...

    def changes_since(self, since: Revision) -> list[Change]: ...

    def changes_since_seq(self, seq: int) -> list[Change]: ...


class InMemoryRepository:
    """Test/simulation double for developer activity: commits are explicit calls."""

    def __init__(self, repo_id: str) -> None:
        self.repo_id = repo_id
        self._changes: list[Change] = []

    def head(self) -> Revision:
        if not self._changes:
            return EMPTY_REVISION
        return self._changes[-1].revision

    def changes_since_seq(self, seq: int) -> list[Change]:
        if seq > self.head().seq:
            raise UnknownRevisionError(f"seq {seq} is beyond head {self.head().seq}")
        return [c for c in self._changes if c.revision.seq > seq]

    def changes_since(self, since: Revision) -> list[Change]:
        return self.changes_since_seq(since.seq)

    def commit(self, author: str, paths: list[str], at: int) -> Revision:
        if not paths:
            raise EmptyPathsError("a commit must touch at least one path")
        if self._changes and at < self._changes[-1].timestamp:
            raise ValueError("commit timestamps must be non-decreasing")
        seq = self.head().seq + 1
        digest = hashlib.sha256(
            f"{self.repo_id}:{seq}:{author}:{at}:{':'.join(paths)}".encode()
        ).hexdigest()[:16]
        revision = Revision(id=digest, seq=seq)
        self._changes.append(
            Change(revision=revision, author=author, timestamp=at, changed_paths=tuple(paths))
        )
        return revision


class DirectoryHashRepository:
    """Content-hash adapter over a plain directory tree.

    Each snapshot hashes the sorted file tree; a changed tree hash appends a
    new revision whose changed paths are the files that appeared, vanished,
    or changed. State persists across restarts in a line-delimited manifest.
    """

    def __init__(self, repo_id: str, root: Path, manifest: Path) -> None:
        self.repo_id = repo_id
        self.root = Path(root)
        self.manifest = Path(manifest)
        # entries: (seq, tree_hash, at_ms, {path: file_hash})
        self._entries: list[tuple[int, str, int, dict[str, str]]] = []
        if self.manifest.exists():
            self._load_manifest()

    def head(self) -> Revision:
        if not self._entries:
            return EMPTY_REVISION
        seq, tree_hash, _, _ = self._entries[-1]
        return Revision(id=tree_hash, seq=seq)

    def changes_since_seq(self, seq: int) -> list[Change]:
        if seq > self.head().seq:
            raise UnknownRevisionError(f"seq {seq} is beyond head {self.head().seq}")
        changes = []
        for i, (entry_seq, tree_hash, at_ms, files) in enumerate(self._entries):
            if entry_seq <= seq:
                continue
            previous = self._entries[i - 1][3] if i > 0 else {}
            changes.append(
                Change(
                    revision=Revision(id=tree_hash, seq=entry_seq),
                    author=SNAPSHOT_AUTHOR,
                    timestamp=at_ms,
                    changed_paths=tuple(_diff_paths(previous, files)),
                )
            )
        return changes

    def changes_since(self, since: Revision) -> list[Change]:
        return self.changes_since_seq(since.seq)

    def snapshot(self, at: int) -> Revision:
        """Hash the tree and append a revision if it differs from the last one."""
        files = self._hash_tree()
        tree_hash = _tree_hash(files)
        if self._entries and self._entries[-1][1] == tree_hash:
            return self.head()
        if not self._entries and not files:
            # an empty tree is the sentinel state, not a first revision
            return EMPTY_REVISION
        seq = self.head().seq + 1
        self._entries.append((seq, tree_hash, at, files))
        self._append_manifest_entry(seq, tree_hash, at, files)
        return Revision(id=tree_hash, seq=seq)

    def _hash_tree(self) -> dict[str, str]:
        if not self.root.is_dir() or not os.access(self.root, os.R_OK):
            raise RepositoryUnreachableError(f"cannot read repository root {self.root}")
        manifest_abs = self.manifest.resolve()
        files: dict[str, str] = {}
        for path in sorted(self.root.rglob("*")):
            if not path.is_file() or path.resolve() == manifest_abs:
                continue
            rel = path.relative_to(self.root).as_posix()
            try:
                content = path.read_bytes()
            except OSError as exc:
                raise RepositoryUnreachableError(f"cannot read {path}: {exc}") from exc
            files[rel] = hashlib.sha256(content).hexdigest()
        return files

    def _append_manifest_entry(self, seq: int, tree_hash: str, at: int, files: dict[str, str]) -> None:
        new_file = not self.manifest.exists()
        with self.manifest.open("a", encoding="utf-8") as handle:
            if new_file:
                handle.write(f"{MANIFEST_HEADER_PREFIX} {_HASH_ALGO}\n")
            handle.write(f"{seq} {tree_hash} {at}\n")
            for path in sorted(files):
                handle.write(f"  {path} {files[path]}\n")
            handle.flush()

    def _load_manifest(self) -> None:
        lines = self.manifest.read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith(MANIFEST_HEADER_PREFIX):
            raise RepositoryUnreachableError(f"bad manifest header in {self.manifest}")
        current: Optional[tuple[int, str, int, dict[str, str]]] = None
        for line in lines[1:]:
            if not line.strip():
                continue
            if line.startswith("  "):
                if current is None:
                    raise RepositoryUnreachableError("manifest file entry before revision line")
                path, file_hash = line.strip().rsplit(" ", 1)
                current[3][path] = file_hash
            else:
                if current is not None:
                    self._entries.append(current)
                seq_s, tree_hash, at_s = line.split(" ")
                current = (int(seq_s), tree_hash, int(at_s), {})
        if current is not None:
            self._entries.append(current)


def _tree_hash(files: dict[str, str]) -> str:
    payload = "\n".join(f"{path} {files[path]}" for path in sorted(files))
    return hashlib.sha256(payload.encode()).hexdigest()


def _diff_paths(before: dict[str, str], after: dict[str, str]) -> list[str]:
    changed = set()
    for path in before.keys() | after.keys():
        if before.get(path) != after.get(path):
            changed.add(path)
    return sorted(changed)
