"""Backward slicing of a traced script down to the code one output needs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .. import prov
from ..minilang import Sandbox, Script, ScriptSyntaxError, execute_script, parse_script, sha256_hex
from ..minilang.interp import TraceResult
from ..minilang.printer import render_header
from ..minilang.syntax import CallStmt, For, If, Stmt, structural_lines
from ..prov import NodeId, ProvenanceGraph, list_outputs, validate_graph
from .fmt import format_script


class CurationError(Exception):
    pass


class InvalidGraph(CurationError):
    pass


class UnknownTarget(CurationError):
    def __init__(self, target: str, valid: Sequence[str] = ()) -> None:
        msg = f"unknown target {target!r}"
        if valid:
            msg += "; valid targets: " + ", ".join(valid)
        super().__init__(msg)
        self.target = target
        self.valid = tuple(valid)


class InconsistentTrace(CurationError):
    pass


class MissingInput(CurationError):
    pass


class HashMismatch(CurationError):
    pass


class EmitUnparseable(CurationError):
    pass


@dataclass(frozen=True)
class DependencyView:
    """Provenance restricted to entities, activities and data edges."""

    graph: ProvenanceGraph

    @property
    def nodes(self):
        return self.graph.nodes

    @property
    def edges(self):
        return self.graph.edges


@dataclass(frozen=True)
class SliceSet:
    target: NodeId
    activities: frozenset[NodeId]
    entities: frozenset[NodeId]
    input_files: frozenset[tuple[str, str]]
    libraries: frozenset[tuple[str, str]]


@dataclass(frozen=True)
class InputFile:
    path: str
    data: bytes
    sha256: str


@dataclass(frozen=True)
class CurationResult:
    target: str
    curated_source: str
    source_lines: tuple[int, ...]
    inputs: tuple[InputFile, ...]
    libraries: tuple[tuple[str, str], ...]
    slice: SliceSet

    @property
    def statement_count(self) -> int:
        return parse_script(self.curated_source).statement_count()


def build_dependency_view(g: ProvenanceGraph) -> DependencyView:
    report = validate_graph(g)
    if not report.ok:
        first = report.violations[0]
        raise InvalidGraph(f"{len(report.violations)} violation(s), first: {first.rule}: {first.message}")
    nodes = {nid: n for nid, n in g.nodes.items() if n.kind != prov.AGENT}
    edges = tuple(e for e in g.edges if e.kind in (prov.USED, prov.GENERATED))
    return DependencyView(ProvenanceGraph(nodes, edges))


def _reach(view: DependencyView, entities: set[NodeId], activities: set[NodeId],
           frontier: Iterable[NodeId]) -> None:
    """Grow ``entities``/``activities`` in place with everything upstream of ``frontier``."""
    g = view.graph
    queue = deque(frontier)
    while queue:
        nid = queue.popleft()
        if g.nodes[nid].kind == prov.ENTITY:
            gen = g.generator(nid)
            if gen is not None and gen not in activities:
                activities.add(gen)
                queue.append(gen)
        else:
            for ent in g.used_by(nid):
                if ent not in entities:
                    entities.add(ent)
                    queue.append(ent)


def _make_slice(view: DependencyView, target: NodeId, entities: set[NodeId],
                activities: set[NodeId]) -> SliceSet:
    g = view.graph
    inputs = set()
    libraries = set()
    for nid in entities:
        node = g.nodes[nid]
        if node.subkind == prov.FILE and g.generator(nid) is None:
            inputs.add((node.get("path"), node.get("sha256")))
        elif node.subkind == prov.LIBRARY:
            libraries.add((node.get("name"), node.get("version")))
    return SliceSet(target, frozenset(activities), frozenset(entities),
                    frozenset(inputs), frozenset(libraries))


def backward_slice(view: DependencyView, target: NodeId | str) -> SliceSet:
    """All activities and entities the target entity transitively derives from."""
    return backward_slice_union(view, [target])


def backward_slice_union(view: DependencyView, targets: Sequence[NodeId | str]) -> SliceSet:
    ids = []
    for t in targets:
        nid = NodeId.parse(t) if isinstance(t, str) else t
        node = view.nodes.get(nid)
        if node is None or node.kind != prov.ENTITY:
            raise UnknownTarget(str(t))
        ids.append(nid)
    entities = set(ids)
    activities: set[NodeId] = set()
    _reach(view, entities, activities, ids)
    return _make_slice(view, ids[0], entities, activities)


class _LineIndex:
    def __init__(self, script: Script) -> None:
        self.enclosing: dict[int, list[Stmt]] = {}
        self.at_line: dict[int, list[Stmt]] = {}
        for stmt, parents in script.walk():
            self.at_line.setdefault(stmt.line, []).append(stmt)
            if isinstance(stmt, (If, For)):
                for line in range(stmt.line, stmt.end_line + 1):
                    self.enclosing.setdefault(line, []).append(stmt)

    def close(self, lines: set[int]) -> set[int]:
        out = set(lines)
        for line in lines:
            for construct in self.enclosing.get(line, ()):
                out.update(structural_lines(construct))
        return out

    def is_library_call(self, line: int) -> bool:
        return any(
            isinstance(s, CallStmt) and s.call.namespace is None and s.call.name == "library"
            for s in self.at_line.get(line, ())
        )


def _activity_line(g: ProvenanceGraph, act: NodeId, index: _LineIndex) -> int:
    node = g.nodes[act]
    raw = node.get("source-line")
    if raw is None or not raw.isdigit():
        raise InconsistentTrace(f"activity {act} has no source line")
    line = int(raw)
    stmts = index.at_line.get(line)
    if not stmts or node.get("text") not in {render_header(s) for s in stmts}:
        raise InconsistentTrace(f"activity {act} ({node.get('text')!r}) does not match line {line}")
    return line


def close_slice(slice_: SliceSet, script: Script, g: ProvenanceGraph) -> tuple[tuple[int, ...], SliceSet]:
    """Line set for a slice plus the slice grown to cover every kept line.

    Source code cannot keep one loop iteration and drop another, so every
    instance of a kept line joins the slice, together with its own upstream
    dependencies; the enclosing construct syntax and the ``library()`` calls
    of used libraries are added until nothing changes.
    """
    # traversal only follows used/wasGeneratedBy edges, so the full graph will do
    view = DependencyView(g)
    index = _LineIndex(script)
    by_line: dict[int, list[NodeId]] = {}
    for node in g.of_kind(prov.ACTIVITY):
        by_line.setdefault(_activity_line(g, node.id, index), []).append(node.id)

    entities = set(slice_.entities)
    activities = set(slice_.activities)
    lines: set[int] = set()
    while True:
        wanted = {_activity_line(g, a, index) for a in activities}
        for nid in entities:
            node = g.nodes[nid]
            if node.subkind == prov.LIBRARY:
                for act in g.sources(nid, prov.USED):
                    line = _activity_line(g, act, index)
                    if index.is_library_call(line):
                        wanted.add(line)
        wanted = index.close(wanted | lines)
        if wanted == lines:
            break
        lines = wanted
        fresh = [a for line in lines for a in by_line.get(line, ()) if a not in activities]
        activities.update(fresh)
        _reach(view, entities, activities, fresh)
    return tuple(sorted(lines)), _make_slice(view, slice_.target, entities, activities)


def structural_closure(slice_: SliceSet, script: Script, g: ProvenanceGraph) -> tuple[int, ...]:
    return close_slice(slice_, script, g)[0]


def collect_inputs(slice_: SliceSet, sandbox: Sandbox) -> list[InputFile]:
    out = []
    for path, digest in sorted(slice_.input_files):
        data = sandbox.load(path)
        if data is None:
            raise MissingInput(f"input {path!r} is no longer available")
        actual = sha256_hex(data)
        if actual != digest:
            raise HashMismatch(f"input {path!r} changed since it was traced ({actual} != {digest})")
        out.append(InputFile(path, data, digest))
    return out


def emit_curated_script(lines: Sequence[int], script: Script) -> str:
    if not lines:
        raise EmitUnparseable("no lines selected")
    if any(not 1 <= n <= len(script.lines) for n in lines):
        raise EmitUnparseable("line out of range")
    text = "".join(script.lines[n - 1] + "\n" for n in sorted(set(lines)))
    try:
        parse_script(text)
    except ScriptSyntaxError as exc:
        raise EmitUnparseable(f"selected lines do not parse: {exc}") from None
    return text


def _resolve_targets(trace: TraceResult, targets: Sequence[str]) -> list[prov.OutputRef]:
    outputs = {o.path: o for o in list_outputs(trace.provenance)}
    refs = []
    for t in targets:
        if t not in outputs:
            raise UnknownTarget(t, sorted(outputs))
        refs.append(outputs[t])
    return refs


def curate(script: Script, sandbox: Sandbox, targets: Sequence[str],
           trace: TraceResult | None = None) -> list[CurationResult]:
    """One curated, formatted script per requested output path."""
    if trace is None:
        trace = execute_script(script, sandbox)
    refs = _resolve_targets(trace, targets)
    view = build_dependency_view(trace.provenance)
    results = []
    for ref in refs:
        raw = backward_slice(view, ref.entity)
        lines, full = close_slice(raw, script, trace.provenance)
        source = format_script(emit_curated_script(lines, script))
        results.append(CurationResult(
            target=ref.path,
            curated_source=source,
            source_lines=lines,
            inputs=tuple(collect_inputs(full, sandbox)),
            libraries=tuple(sorted(full.libraries)),
            slice=full,
        ))
    return results


def curated_lines(script: Script, trace: TraceResult, targets: Sequence[str]) -> tuple[int, ...]:
    """Line set needed by several outputs at once."""
    refs = _resolve_targets(trace, targets)
    view = build_dependency_view(trace.provenance)
    raw = backward_slice_union(view, [r.entity for r in refs])
    return close_slice(raw, script, trace.provenance)[0]
