"""File-based memory bank: plan, run state, summaries, playbook snapshots,
provider transcripts.

The bank is the connective tissue between agents and the sole source of
resumability. All writes are atomic (temp + rename) so a crash leaves every
file either old or new, never torn. A lock file enforces single-writer
access; concurrent readers are fine.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import plan as plan_mod
from .errors import (
    BankLocked,
    HashMismatch,
    IndexGap,
    IoFailure,
    NonEmptyForeignDir,
    PlanMissing,
    StateCorrupt,
)
from .fsio import atomic_write_text
from .providers import CompletionProvider, record_transcript

STATUS_PENDING = "pending"
STATUS_IN_PROGRESS = "in_progress"
STATUS_DONE = "done"
STATUS_SKIPPED = "skipped"
STATUS_FAILED = "failed"
STATUSES = (STATUS_PENDING, STATUS_IN_PROGRESS, STATUS_DONE, STATUS_SKIPPED, STATUS_FAILED)
TERMINAL_STATUSES = (STATUS_DONE, STATUS_SKIPPED, STATUS_FAILED)

_LAYOUT_DIRS = ("playbooks", "summaries", "transcripts")
_KNOWN_ENTRIES = {"plan.json", "plan.dot", "state.json", "lock", *_LAYOUT_DIRS}


@dataclass
class RunState:
    """Persisted migration progress: statuses, attempts and chunk cursor.

    `chunks` records the chunk boundaries the run was started with so a
    resume can detect a strategy change.
    """

    plan_hash: str
    status: dict[int, str]
    attempts: dict[int, int] = field(default_factory=dict)
    next_chunk: int = 0
    chunks: list[list[int]] = field(default_factory=list)

    @classmethod
    def fresh(cls, plan: plan_mod.MigrationPlan, chunks) -> "RunState":
        ids = list(plan.step_ids)
        return cls(
            plan_hash=plan.plan_hash,
            status={sid: STATUS_PENDING for sid in ids},
            attempts={sid: 0 for sid in ids},
            next_chunk=0,
            chunks=[list(chunk) for chunk in chunks],
        )


@dataclass(frozen=True)
class MemoryBank:
    root: Path

    @property
    def plan_path(self) -> Path:
        return self.root / "plan.json"

    @property
    def dot_path(self) -> Path:
        return self.root / "plan.dot"

    @property
    def state_path(self) -> Path:
        return self.root / "state.json"

    @property
    def lock_path(self) -> Path:
        return self.root / "lock"

    @property
    def playbooks_dir(self) -> Path:
        return self.root / "playbooks"

    @property
    def summaries_dir(self) -> Path:
        return self.root / "summaries"

    @property
    def transcripts_dir(self) -> Path:
        return self.root / "transcripts"

    # -- locking ----------------------------------------------------------

    def acquire_lock(self) -> None:
        try:
            fd = os.open(str(self.lock_path), os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            holder = "unknown"
            try:
                holder = self.lock_path.read_text(encoding="utf-8").strip()
            except OSError:
                pass
            raise BankLocked(
                f"bank {self.root} is locked by pid {holder}; "
                "clear a stale lock with the CLI flag if the process is gone"
            ) from None
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(f"{os.getpid()}\n")

    def release_lock(self) -> None:
        try:
            self.lock_path.unlink()
        except FileNotFoundError:
            pass

    def clear_stale_lock(self, max_age_secs: float) -> bool:
        """Remove the lock file if it is older than `max_age_secs`."""
        try:
            age = time.time() - self.lock_path.stat().st_mtime
        except FileNotFoundError:
            return False
        if age > max_age_secs:
            self.release_lock()
            return True
        return False

    def locked(self):
        return _BankLock(self)


class _BankLock:
    def __init__(self, bank: MemoryBank):
        self._bank = bank

    def __enter__(self):
        self._bank.acquire_lock()
        return self._bank

    def __exit__(self, exc_type, exc, tb):
        self._bank.release_lock()
        return False


def init_bank(directory) -> MemoryBank:
    """Create the bank layout. Idempotent on an empty or already-initialized dir."""
    root = Path(directory)
    if root.exists():
        if not root.is_dir():
            raise NonEmptyForeignDir(f"{root} exists and is not a directory")
        unknown = sorted(p.name for p in root.iterdir() if p.name not in _KNOWN_ENTRIES)
        if unknown:
            raise NonEmptyForeignDir(
                f"{root} holds unrecognized content: {', '.join(unknown)}"
            )
    try:
        root.mkdir(parents=True, exist_ok=True)
        for sub in _LAYOUT_DIRS:
            (root / sub).mkdir(exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"could not initialize bank at {root}: {exc}") from exc
    return MemoryBank(root=root)


def open_bank(directory) -> MemoryBank:
    """Open an existing bank without touching its contents."""
    root = Path(directory)
    if not root.is_dir():
        raise PlanMissing(f"no memory bank at {root}")
    return MemoryBank(root=root)


# -- plan ------------------------------------------------------------------


def save_plan(bank: MemoryBank, plan: plan_mod.MigrationPlan) -> None:
    try:
        atomic_write_text(bank.plan_path, plan_mod.canonical_serialize(plan))
        atomic_write_text(bank.dot_path, plan_mod.render_plan_dot(plan))
    except OSError as exc:
        raise IoFailure(f"could not persist plan: {exc}") from exc


def load_plan(bank: MemoryBank) -> plan_mod.MigrationPlan:
    if not bank.plan_path.is_file():
        raise PlanMissing(f"no plan stored in bank {bank.root}")
    return plan_mod.parse_plan(bank.plan_path.read_text(encoding="utf-8"))


# -- summaries ---------------------------------------------------------------


def _summary_files(bank: MemoryBank) -> list[Path]:
    return sorted(bank.summaries_dir.glob("*.md"))


def append_summary(bank: MemoryBank, chunk_index: int, body: str) -> Path:
    """Store the summary for `chunk_index`; indices must stay contiguous from 0."""
    existing = _summary_files(bank)
    if chunk_index != len(existing):
        raise IndexGap(
            f"summary index {chunk_index} does not follow count {len(existing)}"
        )
    target = bank.summaries_dir / f"{chunk_index:04d}.md"
    try:
        atomic_write_text(target, body)
    except OSError as exc:
        raise IoFailure(f"could not persist summary: {exc}") from exc
    return target


def load_summaries(bank: MemoryBank) -> list[str]:
    texts = []
    for index, path in enumerate(_summary_files(bank)):
        if path.name != f"{index:04d}.md":
            raise IndexGap(f"summary files are not contiguous at {path.name}")
        texts.append(path.read_text(encoding="utf-8"))
    return texts


# -- run state ---------------------------------------------------------------


def save_state(bank: MemoryBank, state: RunState) -> None:
    stored = load_plan(bank)
    if stored.plan_hash != state.plan_hash:
        raise HashMismatch("state plan_hash does not match the stored plan")
    payload = {
        "plan_hash": state.plan_hash,
        "status": {str(k): v for k, v in sorted(state.status.items())},
        "attempts": {str(k): v for k, v in sorted(state.attempts.items())},
        "next_chunk": state.next_chunk,
        "chunks": [list(chunk) for chunk in state.chunks],
    }
    try:
        atomic_write_text(bank.state_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"could not persist state: {exc}") from exc


def load_state(bank: MemoryBank) -> RunState:
    if not bank.state_path.is_file():
        raise StateCorrupt(f"no run state stored in bank {bank.root}")
    try:
        payload = json.loads(bank.state_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StateCorrupt(f"state.json is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise StateCorrupt("state.json root must be an object")

    try:
        plan_hash = payload["plan_hash"]
        status = {int(k): v for k, v in payload["status"].items()}
        attempts = {int(k): int(v) for k, v in payload.get("attempts", {}).items()}
        next_chunk = int(payload["next_chunk"])
        chunks = [[int(s) for s in chunk] for chunk in payload.get("chunks", [])]
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise StateCorrupt(f"state.json is malformed: {exc}") from exc

    for value in status.values():
        if value not in STATUSES:
            raise StateCorrupt(f"unknown status token {value!r}")
    if next_chunk < 0 or next_chunk > len(chunks):
        raise StateCorrupt(f"next_chunk {next_chunk} out of range")

    stored = load_plan(bank)
    if stored.plan_hash != plan_hash:
        raise HashMismatch("state refers to a different plan hash")
    if set(status) != set(stored.step_ids):
        raise StateCorrupt("state statuses do not cover the plan's step ids")

    return RunState(
        plan_hash=plan_hash,
        status=status,
        attempts={sid: attempts.get(sid, 0) for sid in stored.step_ids},
        next_chunk=next_chunk,
        chunks=chunks,
    )


# -- playbook snapshots -------------------------------------------------------


def snapshot_playbooks(bank: MemoryBank, playbook_set) -> list[str]:
    """Store versioned playbook snapshots; identical content writes nothing new."""
    written = []
    for pb in playbook_set:
        target = bank.playbooks_dir / f"{pb.kind}.{pb.name}.{pb.version}.md"
        if target.exists():
            continue
        try:
            atomic_write_text(target, pb.body)
        except OSError as exc:
            raise IoFailure(f"could not snapshot playbook: {exc}") from exc
        written.append(target.name)
    return written


# -- transcripts --------------------------------------------------------------


def _tag_filename(tag: str) -> str:
    return re.sub(r"[^\w.\-]", "_", tag or "untagged") + ".json"


def append_transcript(bank: MemoryBank, request, response) -> Path:
    path = bank.transcripts_dir / _tag_filename(request.tag)
    record_transcript(path, request, response)
    return path


class BankRecordingProvider(CompletionProvider):
    """Wraps a provider, recording every exchange into the bank per tag."""

    def __init__(self, inner: CompletionProvider, bank: MemoryBank):
        self._inner = inner
        self._bank = bank

    def complete(self, request):
        response = self._inner.complete(request)
        append_transcript(self._bank, request, response)
        return response
