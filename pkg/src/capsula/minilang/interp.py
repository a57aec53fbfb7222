"""Tree-walking interpreter that records statement-level provenance.

Each executed statement instance becomes one activity.  Assignments generate
a new version of the assigned variable (``var:x@1``, ``var:x@2``, ...), reads
use the latest version, and files, library loads, RNG states and console
writes are entities of their own.  Activities nested in ``if``/``for`` bodies
also use the value that governed the construct (the predicate or the
iterable), so control decisions show up as ordinary data dependencies.
"""

from __future__ import annotations

import hashlib
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Mapping

from .. import prov
from ..prov import NodeId, ProvEdge, ProvNode, ProvenanceGraph
from .errors import (
    FileNotFound,
    MinilangError,
    SandboxViolation,
    TypeMismatch,
    UndefinedVariable,
    UnknownFunction,
    UnknownLibrary,
)
from .printer import render_header
from .rng import RngState, next_random, seed_state
from .stdlib import BUILTINS, LIBRARIES, SPECIAL_FORMS, Function, as_count, as_number, as_text
from .syntax import (
    Assign,
    BinOp,
    Bool,
    Call,
    CallStmt,
    Expr,
    For,
    If,
    Neg,
    Num,
    Script,
    Stmt,
    Str,
    Var,
)
from .values import NumVector, TextVector, Value, canonical_value_text, provenance_text, type_name

INTERPRETER = "capsula-minilang 0.1.0"

_NUMERIC_LINE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def normalize_path(path: str) -> str:
    """Check a script-supplied path is relative and stays inside the sandbox."""
    if not path or "\\" in path or "\x00" in path:
        raise SandboxViolation(f"invalid path {path!r}")
    p = PurePosixPath(path)
    if p.is_absolute() or any(part == ".." for part in p.parts):
        raise SandboxViolation(f"path {path!r} escapes the sandbox")
    return p.as_posix()


class Sandbox:
    """File system view for one script run.

    Inputs come from ``inputs`` first, then from files under ``root`` (if
    given).  Writes never touch the disk: they are collected in ``written``
    once a run succeeds, together with the console text.
    """

    def __init__(self, root: str | Path | None = None, inputs: Mapping[str, bytes] | None = None):
        self.root = Path(root).resolve() if root is not None else None
        self.inputs = {normalize_path(k): bytes(v) for k, v in (inputs or {}).items()}
        self.written: dict[str, bytes] = {}
        self.console = ""

    def load(self, path: str) -> bytes | None:
        path = normalize_path(path)
        if path in self.inputs:
            return self.inputs[path]
        if self.root is None:
            return None
        target = (self.root / path).resolve()
        try:
            target.relative_to(self.root)
        except ValueError:
            raise SandboxViolation(f"path {path!r} resolves outside the sandbox") from None
        if not target.is_file():
            return None
        return target.read_bytes()


@dataclass
class TraceResult:
    outputs: dict[str, bytes]
    console: str
    provenance: ProvenanceGraph
    libraries_used: frozenset[tuple[str, str]]
    inputs_read: dict[str, bytes] = field(default_factory=dict)


def _num_or_vec(op_name: str, v: Value) -> float | NumVector:
    if isinstance(v, bool) or not isinstance(v, (float, NumVector)):
        raise TypeMismatch(f"operator {op_name!r} needs numbers, got {type_name(v)}")
    return v


def _divide(a: float, b: float) -> float:
    if b != 0:
        return a / b
    if a == 0 or math.isnan(a):
        return math.nan
    return math.copysign(math.inf, a) * math.copysign(1.0, b)


_ARITH = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": _divide}
_COMPARE = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _arith(op: str, a: Value, b: Value) -> Value:
    a, b = _num_or_vec(op, a), _num_or_vec(op, b)
    fn = _ARITH[op]
    if isinstance(a, float) and isinstance(b, float):
        return fn(a, b)
    xs = a if isinstance(a, NumVector) else None
    ys = b if isinstance(b, NumVector) else None
    if xs is not None and ys is not None:
        if len(xs) != len(ys):
            raise TypeMismatch(f"vector lengths differ ({len(xs)} vs {len(ys)}) in {op!r}")
        return NumVector(fn(x, y) for x, y in zip(xs, ys))
    if xs is not None:
        return NumVector(fn(x, b) for x in xs)
    return NumVector(fn(a, y) for y in ys)


def _compare(op: str, a: Value, b: Value) -> bool:
    if isinstance(a, NumVector) and len(a) == 1:
        a = a[0]
    if isinstance(b, NumVector) and len(b) == 1:
        b = b[0]
    same = (
        (isinstance(a, bool) and isinstance(b, bool))
        or (isinstance(a, str) and isinstance(b, str))
        or (type(a) is float and type(b) is float)
    )
    if not same:
        raise TypeMismatch(f"cannot compare {type_name(a)} with {type_name(b)}")
    if isinstance(a, bool) and op not in ("==", "!="):
        raise TypeMismatch("booleans only support == and !=")
    return _COMPARE[op](a, b)


def _parse_numbers(path: str, data: bytes) -> NumVector:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise TypeMismatch(f"{path} is not UTF-8 text") from None
    out: list[float] = []
    for raw in text.split("\n"):
        tok = raw.strip()
        if not tok:
            continue
        if not _NUMERIC_LINE.fullmatch(tok):
            raise TypeMismatch(f"{path}: {tok!r} is not a number")
        out.append(float(tok))
    return NumVector(out)


class _Tracer:
    def __init__(self, sandbox: Sandbox) -> None:
        self.sandbox = sandbox
        self.nodes: dict[NodeId, ProvNode] = {}
        self.edges: list[ProvEdge] = []
        self.env: dict[str, tuple[Value, NodeId]] = {}
        self.versions: dict[str, int] = {}
        self.instances: dict[int, int] = {}
        self.seq = 0
        self.prev_activity: NodeId | None = None
        self.guards: list[NodeId] = []
        # path -> (bytes, entity) for every file seen during the run
        self.files: dict[str, tuple[bytes, NodeId]] = {}
        self.file_versions: dict[str, int] = {}
        self.written: dict[str, bytes] = {}
        self.inputs_read: dict[str, bytes] = {}
        self.rng = RngState(0)
        self.rng_entity: NodeId | None = None
        self.rng_version = 0
        self.console: list[str] = []
        self.console_entity: NodeId | None = None
        self.attached: set[str] = set()
        self.lib_entities: dict[str, NodeId] = {}
        # per-activity scratch
        self.activity: NodeId | None = None
        self.used: dict[NodeId, None] = {}
        self.rng_touched = False

    # -- graph helpers -------------------------------------------------------

    def _entity(self, nid: NodeId, subkind: str, **attrs: str) -> NodeId:
        self.nodes[nid] = ProvNode(nid, prov.ENTITY, subkind, attrs)
        return nid

    def use(self, entity: NodeId) -> None:
        if entity not in self.used:
            self.used[entity] = None
            self.edges.append(ProvEdge(self.activity, entity, prov.USED))

    def generate(self, entity: NodeId) -> None:
        self.edges.append(ProvEdge(entity, self.activity, prov.GENERATED))

    def new_value(self, name: str, value: Value) -> NodeId:
        version = self.versions.get(name, 0) + 1
        self.versions[name] = version
        nid = self._entity(
            NodeId("var", f"{name}@{version}"),
            prov.DATA_VALUE,
            variable=name,
            version=str(version),
            **{"value-text": provenance_text(value)},
        )
        return nid

    def begin(self, stmt: Stmt) -> None:
        self.seq += 1
        instance = self.instances.get(id(stmt), 0)
        self.instances[id(stmt)] = instance + 1
        act = NodeId("act", str(self.seq))
        self.nodes[act] = ProvNode(
            act,
            prov.ACTIVITY,
            None,
            {"source-line": str(stmt.line), "instance": str(instance), "text": render_header(stmt)},
        )
        if self.prev_activity is not None:
            self.edges.append(ProvEdge(act, self.prev_activity, prov.INFORMED))
        self.prev_activity = act
        self.activity = act
        self.used = {}
        self.rng_touched = False
        if self.guards:
            self.use(self.guards[-1])

    def end(self) -> None:
        if self.rng_touched:
            self.rng_version += 1
            self.rng_entity = self._entity(
                NodeId("rng", f"state@{self.rng_version}"),
                prov.RNG_STATE,
                version=str(self.rng_version),
                state=str(self.rng.s),
            )
            self.generate(self.rng_entity)

    # -- statements ----------------------------------------------------------

    def run_block(self, stmts: list[Stmt]) -> None:
        for s in stmts:
            self.run(s)

    def run(self, stmt: Stmt) -> None:
        try:
            self._run(stmt)
        except MinilangError as exc:
            if exc.line is None:
                exc.line = stmt.line
            raise

    def _run(self, stmt: Stmt) -> None:
        self.begin(stmt)
        if isinstance(stmt, Assign):
            value = self.eval(stmt.expr)
            if value is None:
                raise TypeMismatch(f"right-hand side of {stmt.target!r} has no value")
            nid = self.new_value(stmt.target, value)
            self.generate(nid)
            self.env[stmt.target] = (value, nid)
            self.end()
        elif isinstance(stmt, CallStmt):
            self.eval(stmt.call)
            self.end()
        elif isinstance(stmt, If):
            cond = self.eval(stmt.cond)
            if not isinstance(cond, bool):
                raise TypeMismatch(f"if condition must be TRUE or FALSE, got {type_name(cond)}")
            guard = self.new_value(f"%if{stmt.line}", cond)
            self.generate(guard)
            self.end()
            branch = stmt.then if cond else stmt.orelse
            if branch:
                self.guards.append(guard)
                try:
                    self.run_block(branch)
                finally:
                    self.guards.pop()
        elif isinstance(stmt, For):
            seq = self.eval(stmt.iterable)
            if isinstance(seq, float) and not isinstance(seq, bool):
                seq = NumVector([seq])
            elif isinstance(seq, str):
                seq = TextVector([seq])
            if not isinstance(seq, (NumVector, TextVector)):
                raise TypeMismatch(f"cannot iterate over {type_name(seq)}")
            guard = self.new_value(f"%for{stmt.line}", seq)
            self.generate(guard)
            header = self.activity
            self.end()
            for item in seq:
                self.activity = header
                nid = self.new_value(stmt.var, item)
                self.generate(nid)
                self.env[stmt.var] = (item, nid)
                self.guards.append(guard)
                try:
                    self.run_block(stmt.body)
                finally:
                    self.guards.pop()
        else:
            raise TypeError(f"unknown statement {stmt!r}")

    # -- expressions ---------------------------------------------------------

    def eval(self, e: Expr) -> Value | None:
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Str):
            return e.value
        if isinstance(e, Bool):
            return e.value
        if isinstance(e, Var):
            if e.name not in self.env:
                raise UndefinedVariable(f"object {e.name!r} not found")
            value, nid = self.env[e.name]
            self.use(nid)
            return value
        if isinstance(e, Neg):
            v = _num_or_vec("-", self.value(e.operand))
            return NumVector(-x for x in v) if isinstance(v, NumVector) else -v
        if isinstance(e, BinOp):
            a, b = self.value(e.left), self.value(e.right)
            if e.op in _ARITH:
                return _arith(e.op, a, b)
            return _compare(e.op, a, b)
        if isinstance(e, Call):
            return self.call(e)
        raise TypeError(f"unknown expression {e!r}")

    def value(self, e: Expr) -> Value:
        v = self.eval(e)
        if v is None:
            raise TypeMismatch(f"{e.qualname}() returns no value")
        return v

    def call(self, c: Call) -> Value | None:
        if c.namespace is None and c.name in SPECIAL_FORMS:
            return getattr(self, "_" + c.name.replace(".", "_"))(c)
        fn = self.resolve(c)
        args = [self.value(a) for a in c.args]
        if not fn.writes:
            return fn.impl(args)
        if not args:
            raise TypeMismatch(f"{c.qualname}() needs a path argument")
        for expr, value in zip(c.args[:-1], args[:-1]):
            self.record_argument(expr, value)
        path = normalize_path(as_text(c.qualname, args[-1]))
        self.store_file(path, fn.impl(args))
        return None

    def resolve(self, c: Call) -> Function:
        if c.namespace is not None:
            if c.namespace not in LIBRARIES:
                raise UnknownLibrary(f"there is no package called {c.namespace!r}")
            if c.namespace not in self.attached:
                raise UnknownLibrary(f"library {c.namespace!r} is not loaded; call library() first")
            lib = LIBRARIES[c.namespace]
            if c.name not in lib.functions:
                raise UnknownFunction(f"{c.qualname} is not exported by {lib.name}")
            self.use(self.lib_entities[lib.name])
            return lib.functions[c.name]
        if c.name in BUILTINS:
            return BUILTINS[c.name]
        for name in sorted(self.attached):
            lib = LIBRARIES[name]
            if c.name in lib.functions:
                self.use(self.lib_entities[name])
                return lib.functions[c.name]
        raise UnknownFunction(f"could not find function {c.name!r}")

    def record_argument(self, expr: Expr, value: Value) -> None:
        # bare variables are already used; inline values get their own entity
        if not isinstance(expr, Var):
            self.use(self.new_value("%arg", value))

    def store_file(self, path: str, data: bytes) -> None:
        version = self.file_versions.get(path, 0) + 1
        self.file_versions[path] = version
        nid = self._entity(
            NodeId("file", f"{path}@{version}"),
            prov.FILE,
            path=path,
            sha256=sha256_hex(data),
            version=str(version),
        )
        self.generate(nid)
        self.files[path] = (data, nid)
        self.written[path] = data

    def load_file(self, path: str) -> bytes:
        path = normalize_path(path)
        if path not in self.files:
            data = self.sandbox.load(path)
            if data is None:
                raise FileNotFound(f"cannot open file {path!r}: no such file")
            nid = self._entity(
                NodeId("file", f"{path}@0"), prov.FILE, path=path, sha256=sha256_hex(data), version="0"
            )
            self.files[path] = (data, nid)
            self.inputs_read[path] = data
        data, nid = self.files[path]
        self.use(nid)
        return data

    # -- special forms -------------------------------------------------------

    def _args(self, c: Call, lo: int, hi: int | None = None) -> list[Value]:
        hi = lo if hi is None else hi
        if not lo <= len(c.args) <= hi:
            raise TypeMismatch(f"{c.name}() takes {lo if lo == hi else f'{lo}-{hi}'} arguments")
        return [self.value(a) for a in c.args]

    def _read(self, c: Call) -> Value:
        (path,) = self._args(c, 1)
        path = as_text("read", path)
        return _parse_numbers(path, self.load_file(path))

    def _read_text(self, c: Call) -> Value:
        (path,) = self._args(c, 1)
        path = as_text("read_text", path)
        try:
            return self.load_file(path).decode("utf-8")
        except UnicodeDecodeError:
            raise TypeMismatch(f"{path} is not UTF-8 text") from None

    def _print(self, c: Call) -> None:
        (value,) = self._args(c, 1)
        self.record_argument(c.args[0], value)
        self.console.append(canonical_value_text(value))
        if self.console_entity is not None:
            self.use(self.console_entity)
        version = len(self.console)
        text = "".join(self.console)
        self.console_entity = self._entity(
            NodeId("console", f"stdout@{version}"),
            prov.CONSOLE,
            version=str(version),
            sha256=sha256_hex(text.encode("utf-8")),
        )
        self.generate(self.console_entity)

    def _library(self, c: Call) -> None:
        if len(c.args) != 1:
            raise TypeMismatch("library() takes 1 argument")
        arg = c.args[0]
        name = arg.name if isinstance(arg, Var) else as_text("library", self.value(arg))
        if name not in LIBRARIES:
            raise UnknownLibrary(f"there is no package called {name!r}")
        lib = LIBRARIES[name]
        if name not in self.lib_entities:
            self.lib_entities[name] = self._entity(
                NodeId("lib", name), prov.LIBRARY, name=name, version=lib.version
            )
        self.attached.add(name)
        self.use(self.lib_entities[name])

    def _set_seed(self, c: Call) -> None:
        (n,) = self._args(c, 1)
        x = as_number("set.seed", n)
        if not math.isfinite(x) or x != int(x):
            raise TypeMismatch(f"set.seed() expects a whole number, got {x!r}")
        self.rng = seed_state(int(x))
        # a reseed overrides any draws made earlier in this statement
        self.rng_touched = True

    def _runif(self, c: Call) -> Value:
        (n,) = self._args(c, 1)
        count = as_count("runif", n)
        if not self.rng_touched:
            if self.rng_entity is None:
                self.rng_entity = self._entity(
                    NodeId("rng", "state@0"), prov.RNG_STATE, version="0", state=str(self.rng.s)
                )
            self.use(self.rng_entity)
            self.rng_touched = True
        draws = []
        for _ in range(count):
            self.rng, u = next_random(self.rng)
            draws.append(u)
        return NumVector(draws)

    def freeze(self) -> ProvenanceGraph:
        return ProvenanceGraph(dict(self.nodes), tuple(self.edges))


def execute_script(script: Script, sandbox: Sandbox) -> TraceResult:
    """Run ``script`` against ``sandbox`` and return its outputs and provenance.

    Errors propagate as :class:`MinilangError` subclasses carrying the failing
    line; in that case nothing is recorded in the sandbox.
    """
    tracer = _Tracer(sandbox)
    tracer.run_block(script.statements)
    console = "".join(tracer.console)
    sandbox.written = dict(tracer.written)
    sandbox.console = console
    libs = frozenset((name, LIBRARIES[name].version) for name in tracer.lib_entities)
    return TraceResult(
        outputs=dict(tracer.written),
        console=console,
        provenance=tracer.freeze(),
        libraries_used=libs,
        inputs_read=dict(tracer.inputs_read),
    )


def run_source(source: str, sandbox: Sandbox) -> TraceResult:
    from .syntax import parse_script

    return execute_script(parse_script(source), sandbox)
