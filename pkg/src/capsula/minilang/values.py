"""Runtime values and their canonical text form.

Numbers are Python floats, text is ``str``, booleans are ``bool``.  Vectors
are tuple subclasses so they stay immutable and hashable.
"""

from __future__ import annotations

import math
from typing import Union

from .errors import NonFiniteOutput


class NumVector(tuple):
    __slots__ = ()

    def __repr__(self) -> str:
        return f"NumVector({list(self)!r})"


class TextVector(tuple):
    __slots__ = ()

    def __repr__(self) -> str:
        return f"TextVector({list(self)!r})"


Value = Union[float, str, bool, NumVector, TextVector]


def type_name(v: Value) -> str:
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, float):
        return "number"
    if isinstance(v, str):
        return "text"
    if isinstance(v, NumVector):
        return "numeric vector"
    if isinstance(v, TextVector):
        return "text vector"
    return type(v).__name__


def format_number(x: float) -> str:
    """Shortest round-trip decimal; integral values print without ``.0``."""
    if not math.isfinite(x):
        raise NonFiniteOutput(f"cannot output non-finite number {x!r}")
    if x == 0:
        return "0"
    text = repr(x)
    if text.endswith(".0"):
        text = text[:-2]
    return text


def canonical_value_text(v: Value) -> str:
    """Serialize a value for output: one element per line, newline-terminated."""
    if isinstance(v, bool):
        return "TRUE\n" if v else "FALSE\n"
    if isinstance(v, float):
        return format_number(v) + "\n"
    if isinstance(v, str):
        return v + "\n"
    if isinstance(v, NumVector):
        return "".join(format_number(x) + "\n" for x in v)
    if isinstance(v, TextVector):
        return "".join(s + "\n" for s in v)
    raise TypeError(f"not a minilang value: {v!r}")


def _lenient_number(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Inf" if x > 0 else "-Inf"
    return format_number(x)


def provenance_text(v: Value) -> str:
    """Like :func:`canonical_value_text` but tolerant of NaN/Inf, for recording."""
    if isinstance(v, float) and not isinstance(v, bool):
        return _lenient_number(v) + "\n"
    if isinstance(v, NumVector):
        return "".join(_lenient_number(x) + "\n" for x in v)
    return canonical_value_text(v)
