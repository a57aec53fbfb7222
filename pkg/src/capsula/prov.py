"""Provenance graph model, PROV-JSON style (de)serialization and validation.

A graph holds entities (data values, files, libraries, RNG states, console
snapshots), activities (executed statement instances) and agents, joined by
``used``, ``wasGeneratedBy``, ``wasInformedBy`` and ``wasAssociatedWith``
edges.  Edges always point from effect to cause, so a well-formed trace is
acyclic.  The document grammar is in ``docs/prov-format.md``.
"""

from __future__ import annotations

import graphlib
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple

ENTITY = "Entity"
ACTIVITY = "Activity"
AGENT = "Agent"
NODE_KINDS = (ACTIVITY, AGENT, ENTITY)

DATA_VALUE = "data-value"
FILE = "file"
LIBRARY = "library"
RNG_STATE = "rng-state"
CONSOLE = "console"
SUBKINDS = (DATA_VALUE, FILE, LIBRARY, RNG_STATE, CONSOLE)

USED = "used"
GENERATED = "wasGeneratedBy"
INFORMED = "wasInformedBy"
ASSOCIATED = "wasAssociatedWith"
EDGE_KINDS = (USED, GENERATED, INFORMED, ASSOCIATED)

# edge kind -> (required src kind, required dst kind)
EDGE_ENDPOINTS = {
    USED: (ACTIVITY, ENTITY),
    GENERATED: (ENTITY, ACTIVITY),
    INFORMED: (ACTIVITY, ACTIVITY),
    ASSOCIATED: (ACTIVITY, AGENT),
}

# edge kind -> (json key of src, json key of dst)
EDGE_KEYS = {
    USED: ("prov:activity", "prov:entity"),
    GENERATED: ("prov:entity", "prov:activity"),
    INFORMED: ("prov:informed", "prov:informant"),
    ASSOCIATED: ("prov:activity", "prov:agent"),
}
_EDGE_PREFIX = {USED: "u", GENERATED: "g", INFORMED: "i", ASSOCIATED: "a"}
_NODE_SECTIONS = {"entity": ENTITY, "activity": ACTIVITY, "agent": AGENT}
_SUBKIND_KEY = "prov:type"

_HEX64 = re.compile(r"[0-9a-f]{64}")


class ProvError(Exception):
    pass


class MalformedDocument(ProvError):
    pass


class UnknownKind(ProvError):
    pass


class DanglingEdge(ProvError):
    pass


class CycleDetected(ProvError):
    pass


@dataclass(frozen=True, order=True)
class NodeId:
    namespace: str
    local: str

    def __post_init__(self) -> None:
        if not self.namespace or not self.local or ":" in self.namespace:
            raise ValueError(f"invalid node id {self.namespace!r}:{self.local!r}")

    def __str__(self) -> str:
        return f"{self.namespace}:{self.local}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        ns, sep, local = text.partition(":")
        if not sep or not ns or not local:
            raise MalformedDocument(f"identifier {text!r} is not of the form namespace:local")
        return cls(ns, local)


@dataclass(frozen=True)
class ProvNode:
    id: NodeId
    kind: str
    subkind: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in NODE_KINDS:
            raise UnknownKind(f"unknown node kind {self.kind!r}")
        if (self.kind == ENTITY) != (self.subkind is not None):
            raise ValueError("exactly the entity nodes carry a subkind")
        if self.subkind is not None and self.subkind not in SUBKINDS:
            raise UnknownKind(f"unknown entity subkind {self.subkind!r}")
        object.__setattr__(self, "attributes", dict(sorted(self.attributes.items())))

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.attributes.get(key, default)


@dataclass(frozen=True)
class ProvEdge:
    src: NodeId
    dst: NodeId
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in EDGE_KINDS:
            raise UnknownKind(f"unknown edge kind {self.kind!r}")

    def sort_key(self) -> tuple[str, str, str]:
        return (self.kind, str(self.src), str(self.dst))


@dataclass(frozen=True)
class ProvenanceGraph:
    """Immutable provenance graph.  Edges are kept sorted; duplicates allowed."""

    nodes: dict[NodeId, ProvNode] = field(default_factory=dict)
    edges: tuple[ProvEdge, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=ProvEdge.sort_key)))

    @classmethod
    def build(cls, nodes: Iterable[ProvNode], edges: Iterable[ProvEdge]) -> "ProvenanceGraph":
        table: dict[NodeId, ProvNode] = {}
        for n in nodes:
            if n.id in table:
                raise ValueError(f"duplicate node id {n.id}")
            table[n.id] = n
        return cls(table, tuple(edges))

    def node(self, node_id: NodeId) -> ProvNode:
        return self.nodes[node_id]

    def of_kind(self, kind: str, subkind: str | None = None) -> list[ProvNode]:
        return sorted(
            (n for n in self.nodes.values()
             if n.kind == kind and (subkind is None or n.subkind == subkind)),
            key=lambda n: n.id,
        )

    @cached_property
    def _out(self) -> dict[tuple[NodeId, str], list[NodeId]]:
        table: dict[tuple[NodeId, str], list[NodeId]] = defaultdict(list)
        for e in self.edges:
            table[(e.src, e.kind)].append(e.dst)
        return dict(table)

    @cached_property
    def _in(self) -> dict[tuple[NodeId, str], list[NodeId]]:
        table: dict[tuple[NodeId, str], list[NodeId]] = defaultdict(list)
        for e in self.edges:
            table[(e.dst, e.kind)].append(e.src)
        return dict(table)

    def targets(self, src: NodeId, kind: str) -> list[NodeId]:
        return self._out.get((src, kind), [])

    def sources(self, dst: NodeId, kind: str) -> list[NodeId]:
        return self._in.get((dst, kind), [])

    def generator(self, entity: NodeId) -> NodeId | None:
        gens = self.targets(entity, GENERATED)
        return gens[0] if gens else None

    def used_by(self, activity: NodeId) -> list[NodeId]:
        return self.targets(activity, USED)

    def structurally_equal(self, other: "ProvenanceGraph") -> bool:
        return self.nodes == other.nodes and self.edges == other.edges


# -- serialization -----------------------------------------------------------


def serialize_prov_document(g: ProvenanceGraph) -> str:
    """Canonical text: sorted keys, nodes by (kind, id), edges by (kind, src, dst)."""
    doc: dict[str, dict] = {"entity": {}, "activity": {}, "agent": {}}
    section_of = {v: k for k, v in _NODE_SECTIONS.items()}
    for node in sorted(g.nodes.values(), key=lambda n: (n.kind, n.id)):
        record = dict(node.attributes)
        if node.subkind is not None:
            record[_SUBKIND_KEY] = node.subkind
        doc[section_of[node.kind]][str(node.id)] = record
    for kind in EDGE_KINDS:
        doc[kind] = {}
    counters: dict[str, int] = defaultdict(int)
    for e in g.edges:
        counters[e.kind] += 1
        src_key, dst_key = EDGE_KEYS[e.kind]
        rid = f"_:{_EDGE_PREFIX[e.kind]}{counters[e.kind]:06d}"
        doc[e.kind][rid] = {src_key: str(e.src), dst_key: str(e.dst)}
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _no_duplicates(pairs: list[tuple[str, object]]) -> dict:
    out: dict = {}
    for k, v in pairs:
        if k in out:
            raise MalformedDocument(f"duplicate key {k!r}")
        out[k] = v
    return out


def _string_map(obj: object, where: str) -> dict[str, str]:
    if not isinstance(obj, dict):
        raise MalformedDocument(f"{where}: expected an object")
    for k, v in obj.items():
        if not isinstance(v, str):
            raise MalformedDocument(f"{where}: attribute {k!r} must be a string")
    return obj


def parse_prov_document(text: str) -> ProvenanceGraph:
    """Parse a document into a graph, rejecting dangling edges and derivation cycles."""
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be an object")
    for section in doc:
        if section not in _NODE_SECTIONS and section not in EDGE_KINDS and section != "prefix":
            raise UnknownKind(f"unknown section {section!r}")

    nodes: dict[NodeId, ProvNode] = {}
    for section, kind in _NODE_SECTIONS.items():
        records = doc.get(section, {})
        if not isinstance(records, dict):
            raise MalformedDocument(f"section {section!r} must be an object")
        for raw_id, record in records.items():
            nid = NodeId.parse(raw_id)
            attrs = dict(_string_map(record, f"{section} {raw_id}"))
            subkind = None
            if kind == ENTITY:
                if _SUBKIND_KEY not in attrs:
                    raise MalformedDocument(f"entity {raw_id} lacks {_SUBKIND_KEY!r}")
                subkind = attrs.pop(_SUBKIND_KEY)
                if subkind not in SUBKINDS:
                    raise UnknownKind(f"entity {raw_id}: unknown subkind {subkind!r}")
            if nid in nodes:
                raise MalformedDocument(f"identifier {raw_id} defined twice")
            nodes[nid] = ProvNode(nid, kind, subkind, attrs)

    edges: list[ProvEdge] = []
    for kind in EDGE_KINDS:
        records = doc.get(kind, {})
        if not isinstance(records, dict):
            raise MalformedDocument(f"section {kind!r} must be an object")
        src_key, dst_key = EDGE_KEYS[kind]
        for rid, record in records.items():
            rec = _string_map(record, f"{kind} {rid}")
            if set(rec) != {src_key, dst_key}:
                raise MalformedDocument(
                    f"{kind} {rid}: expected keys {src_key!r} and {dst_key!r}, got {sorted(rec)}"
                )
            src, dst = NodeId.parse(rec[src_key]), NodeId.parse(rec[dst_key])
            for end in (src, dst):
                if end not in nodes:
                    raise DanglingEdge(f"{kind} {rid}: no node {end}")
            edges.append(ProvEdge(src, dst, kind))

    g = ProvenanceGraph(nodes, tuple(edges))
    cycle = find_derivation_cycle(g)
    if cycle:
        raise CycleDetected("derivation cycle: " + " -> ".join(str(n) for n in cycle))
    return g


# -- validation --------------------------------------------------------------


class Violation(NamedTuple):
    rule: str
    message: str
    subject: object


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


def find_derivation_cycle(g: ProvenanceGraph) -> list[NodeId] | None:
    """Return one cycle of the used/wasGeneratedBy relation, or None."""
    sorter = graphlib.TopologicalSorter()
    for e in g.edges:
        if e.kind in (USED, GENERATED):
            sorter.add(e.src, e.dst)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        return list(exc.args[1])
    return None


def _is_int(text: str | None, minimum: int) -> bool:
    return text is not None and text.isdigit() and int(text) >= minimum


_REQUIRED = {
    DATA_VALUE: ("variable", "version", "value-text"),
    FILE: ("path", "sha256"),
    LIBRARY: ("name", "version"),
    RNG_STATE: ("version",),
    CONSOLE: ("version",),
}


def _attribute_violations(node: ProvNode) -> Iterable[Violation]:
    if node.kind == ENTITY:
        for key in _REQUIRED[node.subkind]:
            if key not in node.attributes:
                yield Violation("required-attributes", f"{node.subkind} entity lacks {key!r}", node.id)
        if node.subkind == DATA_VALUE and "version" in node.attributes:
            if not _is_int(node.get("version"), 1):
                yield Violation("attribute-format", "data-value version must be an integer >= 1", node.id)
        if node.subkind == FILE and "sha256" in node.attributes:
            if not _HEX64.fullmatch(node.get("sha256", "")):
                yield Violation("attribute-format", "sha256 must be 64 lowercase hex digits", node.id)
    elif node.kind == ACTIVITY:
        if "source-line" in node.attributes and not _is_int(node.get("source-line"), 1):
            yield Violation("attribute-format", "source-line must be an integer >= 1", node.id)
        if "instance" in node.attributes and not _is_int(node.get("instance"), 0):
            yield Violation("attribute-format", "instance must be an integer >= 0", node.id)


def validate_graph(g: ProvenanceGraph) -> ValidationReport:
    """Check structural rules; violations are returned, never raised."""
    out: list[Violation] = []
    for node in sorted(g.nodes.values(), key=lambda n: n.id):
        out.extend(_attribute_violations(node))

    generations: dict[NodeId, int] = defaultdict(int)
    for e in g.edges:
        missing = [n for n in (e.src, e.dst) if n not in g.nodes]
        if missing:
            out.append(Violation("dangling-edge", f"{e.kind} endpoint {missing[0]} missing", e))
            continue
        want_src, want_dst = EDGE_ENDPOINTS[e.kind]
        src_kind, dst_kind = g.nodes[e.src].kind, g.nodes[e.dst].kind
        if (src_kind, dst_kind) != (want_src, want_dst):
            out.append(Violation(
                "edge-endpoint",
                f"{e.kind} must join {want_src}->{want_dst}, found {src_kind}->{dst_kind}",
                e,
            ))
        if e.kind in (USED, GENERATED) and src_kind == dst_kind:
            out.append(Violation("alternation", f"{e.kind} joins two {src_kind} nodes", e))
        if e.kind == GENERATED:
            generations[e.src] += 1

    for entity, count in sorted(generations.items()):
        if count > 1:
            out.append(Violation("single-generation", f"generated {count} times", entity))

    cycle = find_derivation_cycle(g)
    if cycle:
        out.append(Violation("acyclic", "derivation cycle through " + ", ".join(map(str, cycle)), cycle))
    return ValidationReport(tuple(out))


# -- queries -----------------------------------------------------------------


class OutputRef(NamedTuple):
    entity: NodeId
    path: str  # "console" for the console stream
    line: int


def _version(node: ProvNode) -> int:
    v = node.get("version", "0")
    return int(v) if v.isdigit() else 0


def list_outputs(g: ProvenanceGraph) -> list[OutputRef]:
    """Final version of every written file, plus the console if anything printed."""
    latest: dict[str, ProvNode] = {}
    for node in g.of_kind(ENTITY, FILE):
        if g.generator(node.id) is None:
            continue
        path = node.get("path")
        if path not in latest or _version(node) > _version(latest[path]):
            latest[path] = node
    console = [n for n in g.of_kind(ENTITY, CONSOLE) if g.generator(n.id) is not None]
    if console:
        latest.setdefault("console", max(console, key=_version))

    out = []
    for path, node in latest.items():
        act = g.node(g.generator(node.id))
        out.append(OutputRef(node.id, path, int(act.get("source-line", "0"))))
    return sorted(out, key=lambda o: o.path)
