"""Canonical source formatter for curated scripts."""

from __future__ import annotations

from ..minilang.printer import render_statements
from ..minilang.syntax import parse_script


def format_script(text: str) -> str:
    """Reformat minilang source; raises ScriptSyntaxError if it does not parse."""
    return render_statements(parse_script(text).statements)
