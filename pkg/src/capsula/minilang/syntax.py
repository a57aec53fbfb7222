"""Lexer, AST and recursive-descent parser for minilang.

The grammar is documented in ``docs/grammar.md``.  Every simple statement
lives on a single source line; compound statements (``if``/``for``) record
the lines their braces and ``else`` keywords sit on so that slicing can keep
a construct's syntax intact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import ScriptSyntaxError

KEYWORDS = {"if", "else", "for", "in", "TRUE", "FALSE"}
COMPARISONS = ("==", "!=", "<=", ">=", "<", ">")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<str>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<op><-|<=|>=|==|!=|::|[<>+\-*/(){},])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | kw | str | op | newline | eof
    text: str
    line: int
    col: int


def _unescape(body: str, line: int) -> str:
    out = []
    chars = iter(body)
    for ch in chars:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(chars, "")
        if nxt not in _ESCAPES:
            raise ScriptSyntaxError(f"unknown escape '\\{nxt}'", line)
        out.append(_ESCAPES[nxt])
    return "".join(out)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ScriptSyntaxError(f"unexpected character {source[pos]!r}", line)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if kind == "newline":
            tokens.append(Token("newline", text, line, col))
            line += 1
            line_start = m.end()
        elif kind == "ident":
            tokens.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
        elif kind in ("num", "str", "op"):
            tokens.append(Token(kind, text, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    text: str


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]
    namespace: str | None = None

    @property
    def qualname(self) -> str:
        return f"{self.namespace}::{self.name}" if self.namespace else self.name


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


Expr = Union[Num, Str, Bool, Var, Call, BinOp, Neg]


@dataclass(eq=False)
class Assign:
    target: str
    expr: Expr
    line: int
    col: int


@dataclass(eq=False)
class CallStmt:
    call: Call
    line: int
    col: int


@dataclass(eq=False)
class If:
    cond: Expr
    then: list["Stmt"]
    orelse: list["Stmt"] | None
    line: int
    col: int
    # line of the ``}`` closing the then-block (carries ``else`` when present)
    then_end: int = 0
    # line of the final ``}``; equals then_end when there is no else-branch
    end_line: int = 0
    elif_form: bool = False


@dataclass(eq=False)
class For:
    var: str
    iterable: Expr
    body: list["Stmt"]
    line: int
    col: int
    end_line: int = 0


Stmt = Union[Assign, CallStmt, If, For]


def structural_lines(stmt: Stmt) -> tuple[int, ...]:
    """Lines holding a compound statement's own syntax (header, else, braces)."""
    if isinstance(stmt, If):
        return tuple(sorted({stmt.line, stmt.then_end, stmt.end_line}))
    if isinstance(stmt, For):
        return tuple(sorted({stmt.line, stmt.end_line}))
    return (stmt.line,)


def last_line(stmt: Stmt) -> int:
    if isinstance(stmt, (If, For)):
        return stmt.end_line
    return stmt.line


@dataclass
class Script:
    source: str
    statements: list[Stmt]
    lines: list[str] = field(default_factory=list)

    def walk(self) -> Iterator[tuple[Stmt, tuple[Stmt, ...]]]:
        """Yield ``(stmt, enclosing compound statements)`` in source order."""

        def rec(stmts: list[Stmt], parents: tuple[Stmt, ...]):
            for s in stmts:
                yield s, parents
                if isinstance(s, If):
                    yield from rec(s.then, parents + (s,))
                    if s.orelse is not None:
                        yield from rec(s.orelse, parents + (s,))
                elif isinstance(s, For):
                    yield from rec(s.body, parents + (s,))

        yield from rec(self.statements, ())

    def statement_count(self) -> int:
        return sum(1 for _ in self.walk())


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: str | None = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            got = self.tok.text or self.tok.kind
            if self.tok.kind == "newline":
                got = "end of line"
            raise ScriptSyntaxError(f"expected {want!r}, got {got!r}", self.tok.line)
        return self.advance()

    def skip_newlines(self) -> None:
        while self.at("newline"):
            self.advance()

    def program(self) -> list[Stmt]:
        stmts: list[Stmt] = []
        self.skip_newlines()
        while not self.at("eof"):
            stmts.append(self.statement())
            if not (self.at("newline") or self.at("eof")):
                raise ScriptSyntaxError(
                    f"expected end of line after statement, got {self.tok.text!r}",
                    self.tok.line,
                )
            self.skip_newlines()
        return stmts

    def block(self) -> tuple[list[Stmt], int]:
        self.expect("op", "{")
        stmts: list[Stmt] = []
        self.skip_newlines()
        while not self.at("op", "}"):
            if self.at("eof"):
                raise ScriptSyntaxError("unterminated block", self.tok.line)
            stmts.append(self.statement())
            if self.at("op", "}"):
                break
            self.expect("newline")
            self.skip_newlines()
        close = self.advance()
        return stmts, close.line

    def statement(self) -> Stmt:
        t = self.tok
        if t.kind == "kw" and t.text == "if":
            return self.if_stmt()
        if t.kind == "kw" and t.text == "for":
            return self.for_stmt()
        if t.kind == "ident":
            if self.toks[self.i + 1].kind == "op" and self.toks[self.i + 1].text == "<-":
                self.advance()
                self.advance()
                return Assign(t.text, self.expr(), t.line, t.col)
            expr = self.primary()
            if not isinstance(expr, Call):
                raise ScriptSyntaxError("expected assignment or function call", t.line)
            return CallStmt(expr, t.line, t.col)
        raise ScriptSyntaxError(f"unexpected {t.text or t.kind!r}", t.line)

    def if_stmt(self) -> If:
        head = self.expect("kw", "if")
        self.expect("op", "(")
        cond = self.expr()
        self.expect("op", ")")
        then, then_end = self.block()
        node = If(cond, then, None, head.line, head.col, then_end, then_end)
        if self.at("kw", "else"):
            self.advance()
            if self.at("kw", "if"):
                nested = self.if_stmt()
                node.orelse = [nested]
                node.elif_form = True
                node.end_line = nested.end_line
            else:
                node.orelse, node.end_line = self.block()
        return node

    def for_stmt(self) -> For:
        head = self.expect("kw", "for")
        self.expect("op", "(")
        var = self.expect("ident").text
        self.expect("kw", "in")
        iterable = self.expr()
        self.expect("op", ")")
        body, end = self.block()
        return For(var, iterable, body, head.line, head.col, end)

    def expr(self) -> Expr:
        left = self.additive()
        while self.tok.kind == "op" and self.tok.text in COMPARISONS:
            op = self.advance().text
            left = BinOp(op, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.at("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        t = self.advance()
        if t.kind == "num":
            return Num(float(t.text), t.text)
        if t.kind == "str":
            return Str(_unescape(t.text[1:-1], t.line))
        if t.kind == "kw" and t.text in ("TRUE", "FALSE"):
            return Bool(t.text == "TRUE")
        if t.kind == "op" and t.text == "(":
            inner = self.expr()
            self.expect("op", ")")
            return inner
        if t.kind == "ident":
            namespace = None
            name = t.text
            if self.at("op", "::"):
                self.advance()
                namespace, name = name, self.expect("ident").text
                if not self.at("op", "("):
                    raise ScriptSyntaxError("namespaced name must be called", t.line)
            if self.at("op", "("):
                self.advance()
                args: list[Expr] = []
                if not self.at("op", ")"):
                    args.append(self.expr())
                    while self.at("op", ","):
                        self.advance()
                        args.append(self.expr())
                self.expect("op", ")")
                return Call(name, tuple(args), namespace)
            return Var(name)
        got = "end of line" if t.kind == "newline" else (t.text or t.kind)
        raise ScriptSyntaxError(f"unexpected {got!r} in expression", t.line)


def parse_script(source: str) -> Script:
    """Parse minilang source text into a :class:`Script`."""
    parser = _Parser(tokenize(source))
    stmts = parser.program()
    return Script(source=source, statements=stmts, lines=source.split("\n"))
