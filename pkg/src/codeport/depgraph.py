"""Static import discovery and leaf-first migration ordering.

Dependency discovery is deliberately a line-anchored grammar over a
simplified source dialect rather than a full language parser: it must be
deterministic, cheap, and must never fail a migration. Cycles are collapsed
into clusters so a migration order exists for real codebases.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass

from .errors import RootNotFound

_IMPORT_RE = re.compile(r"^\s*import\s+([A-Za-z_][\w.]*)(?:\s+as\s+[A-Za-z_]\w*)?\s*$")
_FROM_RE = re.compile(r"^\s*from\s+([A-Za-z_][\w.]*)\s+import\s+(.+?)\s*$")
_MEMBER_RE = re.compile(r"^([A-Za-z_]\w*)(?:\s+as\s+[A-Za-z_]\w*)?$")


@dataclass(frozen=True)
class ImportRef:
    """One recognized import: the raw dotted module and its resolution, if any."""

    raw_module: str
    resolved_path: str | None


@dataclass(frozen=True)
class DependencyGraph:
    """File-level import graph over a workspace snapshot."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]  # (importer, imported)
    externals: tuple[str, ...]


@dataclass(frozen=True)
class MigrationOrder:
    """Clusters (strongly connected components) in dependencies-first order."""

    clusters: tuple[tuple[str, ...], ...]


def _resolve_module(module: str, workspace, ext: str) -> str | None:
    base = module.replace(".", "/")
    for candidate in (f"{base}.{ext}", f"{base}/__init__.{ext}"):
        if (workspace.root / candidate).is_file():
            return candidate
    return None


def extract_imports(file_text: str, file_path: str, workspace, ext: str = "py") -> list[ImportRef]:
    """Scan one file for line-anchored imports, resolving against the workspace.

    Recognized forms: `import a.b.c`, `import a.b as x`,
    `from a.b import c[, d][ as x]`. Comment lines are ignored, unparseable
    lines are skipped, and refs are deduplicated by raw module keeping first
    occurrence order. `file_path` names the importer for provenance.
    """
    del file_path  # importer identity is the caller's concern
    refs: list[ImportRef] = []
    seen: set[str] = set()

    def add(module: str) -> None:
        if module in seen:
            return
        seen.add(module)
        refs.append(ImportRef(module, _resolve_module(module, workspace, ext)))

    for line in file_text.splitlines():
        if line.lstrip().startswith("#"):
            continue
        match = _IMPORT_RE.match(line)
        if match:
            add(match.group(1))
            continue
        match = _FROM_RE.match(line)
        if match:
            base = match.group(1)
            for part in match.group(2).split(","):
                member = _MEMBER_RE.match(part.strip())
                if member:
                    add(f"{base}.{member.group(1)}")
    return refs


def build_graph(root_file: str, workspace, ext: str = "py") -> DependencyGraph:
    """Breadth-first import closure starting at `root_file`."""
    root_path = workspace.root / root_file
    if not root_path.is_file():
        raise RootNotFound(f"root file {root_file!r} not found in workspace")

    nodes: list[str] = []
    edges: list[tuple[str, str]] = []
    externals: set[str] = set()
    visited: set[str] = set()
    queue = [root_file]
    visited.add(root_file)

    while queue:
        current = queue.pop(0)
        nodes.append(current)
        text = (workspace.root / current).read_text(encoding="utf-8")
        for ref in extract_imports(text, current, workspace, ext):
            if ref.resolved_path is None:
                externals.add(ref.raw_module)
                continue
            if ref.resolved_path == current:
                continue  # self-imports dropped
            edge = (current, ref.resolved_path)
            if edge not in edges:
                edges.append(edge)
            if ref.resolved_path not in visited:
                visited.add(ref.resolved_path)
                queue.append(ref.resolved_path)

    return DependencyGraph(
        nodes=tuple(sorted(nodes)),
        edges=tuple(sorted(edges)),
        externals=tuple(sorted(externals)),
    )


def _strongly_connected_components(nodes, adjacency):
    """Tarjan's algorithm; returns components as lists of nodes."""
    index_counter = 0
    indexes: dict[str, int] = {}
    lowlinks: dict[str, int] = {}
    stack: list[str] = []
    on_stack: set[str] = set()
    components: list[list[str]] = []

    def strong_connect(node):
        nonlocal index_counter
        indexes[node] = index_counter
        lowlinks[node] = index_counter
        index_counter += 1
        stack.append(node)
        on_stack.add(node)

        for neighbor in adjacency.get(node, ()):
            if neighbor not in indexes:
                strong_connect(neighbor)
                lowlinks[node] = min(lowlinks[node], lowlinks[neighbor])
            elif neighbor in on_stack:
                lowlinks[node] = min(lowlinks[node], indexes[neighbor])

        if lowlinks[node] == indexes[node]:
            component = []
            while True:
                member = stack.pop()
                on_stack.remove(member)
                component.append(member)
                if member == node:
                    break
            components.append(component)

    for node in nodes:
        if node not in indexes:
            strong_connect(node)
    return components


def leaf_first_order(graph: DependencyGraph) -> MigrationOrder:
    """Condense the graph into SCC clusters and order them dependencies-first.

    Among clusters whose dependencies are all emitted, the one with the
    lexicographically smallest member path is emitted next, making the order
    deterministic. Within a cluster, paths are sorted lexicographically.
    """
    adjacency: dict[str, list[str]] = {node: [] for node in graph.nodes}
    for importer, imported in graph.edges:
        adjacency[importer].append(imported)
    for neighbors in adjacency.values():
        neighbors.sort()

    components = _strongly_connected_components(sorted(graph.nodes), adjacency)
    members = [tuple(sorted(component)) for component in components]
    component_of = {}
    for ci, component in enumerate(members):
        for node in component:
            component_of[node] = ci

    # depends_on[c] = clusters that c imports (must be emitted before c)
    depends_on: list[set[int]] = [set() for _ in members]
    dependents: list[set[int]] = [set() for _ in members]
    for importer, imported in graph.edges:
        a, b = component_of[importer], component_of[imported]
        if a != b:
            depends_on[a].add(b)
            dependents[b].add(a)

    remaining = {ci: len(depends_on[ci]) for ci in range(len(members))}
    ready = [(members[ci][0], ci) for ci in remaining if remaining[ci] == 0]
    heapq.heapify(ready)

    ordered: list[tuple[str, ...]] = []
    while ready:
        _, ci = heapq.heappop(ready)
        ordered.append(members[ci])
        for dependent in dependents[ci]:
            remaining[dependent] -= 1
            if remaining[dependent] == 0:
                heapq.heappush(ready, (members[dependent][0], dependent))

    return MigrationOrder(clusters=tuple(ordered))
