"""Canonical pretty-printer for minilang ASTs.

Output rules: one statement per line, single spaces around ``<-`` and binary
operators, two spaces of indentation per block level, no trailing
whitespace, exactly one trailing newline.  Comments and blank lines are not
preserved.  Parentheses are emitted only where precedence or left
associativity requires them, so printing is a fixed point after one pass.
"""

from __future__ import annotations

from .syntax import (
    COMPARISONS,
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
    Stmt,
    Str,
    Var,
)

INDENT = "  "

_PREC = {op: 1 for op in COMPARISONS}
_PREC.update({"+": 2, "-": 2, "*": 3, "/": 3})
_UNARY_PREC = 4


def _quote(s: str) -> str:
    body = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{body}"'


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _UNARY_PREC
    return 5


def render_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return e.text
    if isinstance(e, Str):
        return _quote(e.value)
    if isinstance(e, Bool):
        return "TRUE" if e.value else "FALSE"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.qualname}({', '.join(render_expr(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = render_expr(e.operand)
        if _prec(e.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = render_expr(e.left)
        right = render_expr(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


def render_header(stmt: Stmt) -> str:
    """Single-line text of a statement; compound statements render their header."""
    if isinstance(stmt, Assign):
        return f"{stmt.target} <- {render_expr(stmt.expr)}"
    if isinstance(stmt, CallStmt):
        return render_expr(stmt.call)
    if isinstance(stmt, If):
        return f"if ({render_expr(stmt.cond)})"
    if isinstance(stmt, For):
        return f"for ({stmt.var} in {render_expr(stmt.iterable)})"
    raise TypeError(f"not a statement: {stmt!r}")


def _render_block(stmts: list[Stmt], depth: int, out: list[str]) -> None:
    for s in stmts:
        _render_stmt(s, depth, out)


def _render_stmt(stmt: Stmt, depth: int, out: list[str], prefix: str = "") -> None:
    pad = INDENT * depth
    if isinstance(stmt, If):
        out.append(f"{pad}{prefix}{render_header(stmt)} {{")
        _render_block(stmt.then, depth + 1, out)
        if not stmt.orelse:
            # an empty else branch does nothing and is left out
            out.append(f"{pad}}}")
        elif stmt.elif_form:
            # the closing brace is shared with the nested if's header
            _render_stmt(stmt.orelse[0], depth, out, prefix="} else ")
        else:
            out.append(f"{pad}}} else {{")
            _render_block(stmt.orelse, depth + 1, out)
            out.append(f"{pad}}}")
    elif isinstance(stmt, For):
        out.append(f"{pad}{render_header(stmt)} {{")
        _render_block(stmt.body, depth + 1, out)
        out.append(f"{pad}}}")
    else:
        out.append(f"{pad}{render_header(stmt)}")


def render_statements(stmts: list[Stmt]) -> str:
    out: list[str] = []
    _render_block(stmts, 0, out)
    return "".join(line + "\n" for line in out)
