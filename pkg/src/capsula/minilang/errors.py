"""Exceptions raised while parsing or running minilang scripts."""

from __future__ import annotations


class MinilangError(Exception):
    """Base class; ``line`` is the 1-based source line that failed, if known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


class ScriptSyntaxError(MinilangError):
    pass


class UndefinedVariable(MinilangError):
    pass


class FileNotFound(MinilangError):
    pass


class UnknownLibrary(MinilangError):
    pass


class UnknownFunction(MinilangError):
    pass


class TypeMismatch(MinilangError):
    pass


class NonFiniteOutput(MinilangError):
    pass


class SandboxViolation(MinilangError):
    """A script tried to touch a path outside its sandbox root."""
