"""A small R-like analysis language with a provenance-recording interpreter."""

from .errors import (
    FileNotFound,
    MinilangError,
    NonFiniteOutput,
    SandboxViolation,
    ScriptSyntaxError,
    TypeMismatch,
    UndefinedVariable,
    UnknownFunction,
    UnknownLibrary,
)
from .interp import INTERPRETER, Sandbox, TraceResult, execute_script, run_source, sha256_hex
from .printer import render_statements
from .rng import RngState, next_random
from .stdlib import LIBRARIES
from .syntax import Script, parse_script
from .values import NumVector, TextVector, canonical_value_text

__all__ = [
    "FileNotFound",
    "INTERPRETER",
    "LIBRARIES",
    "MinilangError",
    "NonFiniteOutput",
    "NumVector",
    "RngState",
    "Sandbox",
    "SandboxViolation",
    "Script",
    "ScriptSyntaxError",
    "TextVector",
    "TraceResult",
    "TypeMismatch",
    "UndefinedVariable",
    "UnknownFunction",
    "UnknownLibrary",
    "canonical_value_text",
    "execute_script",
    "next_random",
    "parse_script",
    "render_statements",
    "run_source",
    "sha256_hex",
]
