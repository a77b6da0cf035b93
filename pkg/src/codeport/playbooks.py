"""Playbook hierarchy: loading, prompt assembly, client playbook generation.

Playbooks are markdown guidance files in four tiers (general, style, task,
client) concatenated into agent system prompts. Client playbooks can be
generated from golden example migrations via two provider rounds per pair
plus one summarization round; a human reviews the result out-of-band before
it is installed into configuration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .blocks import first_block
from .errors import (
    DuplicateName,
    EmptyGoldenPair,
    EmptyPlaybook,
    MalformedPlaybookBlock,
    MalformedUnitsBlock,
    UnknownSelection,
)
from .providers import ChatMessage, CompletionRequest, ROLE_SYSTEM, ROLE_USER

KIND_GENERAL = "general"
KIND_STYLE = "style"
KIND_TASK = "task"
KIND_CLIENT = "client"
KIND_ORDER = (KIND_GENERAL, KIND_STYLE, KIND_TASK, KIND_CLIENT)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Playbook:
    kind: str
    name: str
    body: str
    version: str

    def __post_init__(self):
        if self.kind not in KIND_ORDER:
            raise ValueError(f"unknown playbook kind {self.kind!r}")
        if not self.body.strip():
            raise EmptyPlaybook(f"playbook {self.kind}/{self.name} is empty")

    @classmethod
    def from_body(cls, kind: str, name: str, body: str) -> "Playbook":
        return cls(kind=kind, name=name, body=body, version=_digest(body))


@dataclass(frozen=True)
class PlaybookSet:
    """Ordered playbooks: tier order general, style, task, client; load order within a tier."""

    playbooks: tuple[Playbook, ...]

    def __post_init__(self):
        seen = set()
        last_rank = 0
        for pb in self.playbooks:
            key = (pb.kind, pb.name)
            if key in seen:
                raise DuplicateName(f"duplicate playbook {pb.kind}/{pb.name}")
            seen.add(key)
            rank = KIND_ORDER.index(pb.kind)
            if rank < last_rank:
                raise ValueError("playbooks must be ordered by tier")
            last_rank = rank

    def __iter__(self):
        return iter(self.playbooks)

    def __len__(self):
        return len(self.playbooks)

    def names(self) -> tuple[tuple[str, str], ...]:
        return tuple((pb.kind, pb.name) for pb in self.playbooks)

    def of_kind(self, kind: str) -> tuple[Playbook, ...]:
        return tuple(pb for pb in self.playbooks if pb.kind == kind)

    def digest(self) -> str:
        parts = [f"{pb.kind}/{pb.name}@{pb.version}" for pb in self.playbooks]
        return _digest("\n".join(parts))


def load_set(paths_by_kind) -> PlaybookSet:
    """Load playbooks from a `{kind: [paths]}` mapping, bodies read verbatim."""
    loaded = []
    for kind in KIND_ORDER:
        for raw_path in paths_by_kind.get(kind, []):
            path = Path(raw_path)
            if not path.is_file():
                raise FileNotFoundError(f"playbook file not found: {path}")
            body = path.read_text(encoding="utf-8")
            loaded.append(Playbook.from_body(kind, path.stem, body))
    return PlaybookSet(playbooks=tuple(loaded))


def assemble_system_prompt(playbook_set: PlaybookSet, selection=None) -> str:
    """Concatenate selected playbook bodies in set order, each under a header line.

    `selection` is an iterable of (kind, name) pairs; None selects everything,
    an explicit empty selection yields empty text.
    """
    if selection is None:
        chosen = set(playbook_set.names())
    else:
        chosen = set()
        known = set(playbook_set.names())
        for kind, name in selection:
            if (kind, name) not in known:
                raise UnknownSelection(f"no playbook {kind}/{name} in the set")
            chosen.add((kind, name))

    parts = []
    for pb in playbook_set:
        if (pb.kind, pb.name) in chosen:
            parts.append(f"## PLAYBOOK: {pb.kind}/{pb.name}\n\n{pb.body}")
    return "\n\n".join(parts)


@dataclass(frozen=True)
class GoldenPair:
    """A completed human migration: legacy tree plus its migrated counterpart."""

    source_root: Path
    target_root: Path
    label: str

    def __post_init__(self):
        for root in (self.source_root, self.target_root):
            if not Path(root).is_dir() or not _tree_files(Path(root)):
                raise EmptyGoldenPair(f"golden root {root} is missing or empty")
        object.__setattr__(self, "source_root", Path(self.source_root))
        object.__setattr__(self, "target_root", Path(self.target_root))


def _tree_files(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*") if p.is_file())


def _render_tree(label: str, root: Path) -> str:
    parts = []
    for path in _tree_files(root):
        rel = path.relative_to(root).as_posix()
        parts.append(f"--- {label}: {rel}\n{path.read_text(encoding='utf-8')}\n--- end")
    return "\n".join(parts)


_DECOMPOSE_SYSTEM = (
    "You decompose a completed code migration into fine-grained semantic units "
    "(for example: base imports, base methods, loss computation, metrics output). "
    "Reply with a fenced `units` block listing one unit per entry with the fields "
    "unit_name, source_excerpt_refs and target_excerpt_refs."
)

_SUMMARIZE_SYSTEM = (
    "You distill general migration rules from paired semantic units of completed "
    "migrations. Reply with a fenced `playbook` block containing markdown rules "
    "with concrete code examples."
)


def generate_client_playbook(pairs, provider, name: str = "generated") -> Playbook:
    """Generate a client-tier playbook from golden migration pairs.

    Makes exactly len(pairs) decomposition calls plus one summarization call.
    The returned playbook is emitted, not approved: human review happens
    out-of-band before installation.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyGoldenPair("at least one golden pair is required")

    unit_sections = []
    for pair in pairs:
        prompt = (
            f"Golden example {pair.label!r}.\n\n"
            "Legacy implementation:\n"
            f"{_render_tree('source', pair.source_root)}\n\n"
            "Migrated implementation:\n"
            f"{_render_tree('target', pair.target_root)}\n\n"
            "Break the migrated code down into semantic units and reply with a "
            "fenced `units` block."
        )
        request = CompletionRequest(
            messages=(
                ChatMessage(ROLE_SYSTEM, _DECOMPOSE_SYSTEM),
                ChatMessage(ROLE_USER, prompt),
            ),
            tag=f"playbook.decompose.{pair.label}",
        )
        reply = provider.complete(request)
        units = first_block(reply.content, "units")
        if units is None or not units.strip():
            raise MalformedUnitsBlock(
                f"decomposition reply for {pair.label!r} lacks a `units` block"
            )
        unit_sections.append(f"### Units from {pair.label}\n{units}")

    summary_prompt = (
        "Semantic units extracted from the golden examples:\n\n"
        + "\n\n".join(unit_sections)
        + "\n\nSummarize general migration rules covering these units. Reply with a "
        "fenced `playbook` block of markdown rules with code examples."
    )
    request = CompletionRequest(
        messages=(
            ChatMessage(ROLE_SYSTEM, _SUMMARIZE_SYSTEM),
            ChatMessage(ROLE_USER, summary_prompt),
        ),
        tag="playbook.summarize",
    )
    reply = provider.complete(request)
    body = first_block(reply.content, "playbook")
    if body is None or not body.strip():
        raise MalformedPlaybookBlock("summarization reply lacks a `playbook` block")
    return Playbook.from_body(KIND_CLIENT, name, body)
