"""Builtin functions and the stub libraries shipped with the interpreter.

Pure functions take evaluated arguments and return a value.  Writer
functions take ``(*data, path)`` and return the bytes to store at ``path``;
the interpreter records the file in provenance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import TypeMismatch
from .values import NumVector, TextVector, Value, canonical_value_text, format_number, type_name

LIBRARY_VERSION = "1.0"


@dataclass(frozen=True)
class Function:
    impl: Callable[[Sequence[Value]], object]
    writes: bool = False


@dataclass(frozen=True)
class Library:
    name: str
    version: str
    functions: dict[str, Function] = field(default_factory=dict)


def _arity(name: str, args: Sequence[Value], lo: int, hi: int | None = None) -> None:
    hi = lo if hi is None else hi
    if not lo <= len(args) <= hi:
        want = str(lo) if lo == hi else f"{lo}-{hi}"
        raise TypeMismatch(f"{name}() takes {want} arguments, got {len(args)}")


def as_number(name: str, v: Value) -> float:
    if isinstance(v, float) and not isinstance(v, bool):
        return v
    if isinstance(v, NumVector) and len(v) == 1:
        return v[0]
    raise TypeMismatch(f"{name}() expects a number, got {type_name(v)}")


def as_numbers(name: str, v: Value) -> tuple[float, ...]:
    if isinstance(v, NumVector):
        return tuple(v)
    if isinstance(v, float) and not isinstance(v, bool):
        return (v,)
    raise TypeMismatch(f"{name}() expects numbers, got {type_name(v)}")


def as_text(name: str, v: Value) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, TextVector) and len(v) == 1:
        return v[0]
    raise TypeMismatch(f"{name}() expects text, got {type_name(v)}")


def as_count(name: str, v: Value) -> int:
    x = as_number(name, v)
    if not math.isfinite(x) or x < 0 or x != int(x):
        raise TypeMismatch(f"{name}() expects a non-negative whole number, got {x!r}")
    return int(x)


def _c(args: Sequence[Value]) -> Value:
    if not args:
        return NumVector()
    if all(isinstance(a, (str, TextVector)) for a in args):
        out: list[str] = []
        for a in args:
            out.extend([a] if isinstance(a, str) else a)
        return TextVector(out)
    nums: list[float] = []
    for a in args:
        nums.extend(as_numbers("c", a))
    return NumVector(nums)


def _seq(args: Sequence[Value]) -> Value:
    _arity("seq", args, 2, 3)
    start, stop = as_number("seq", args[0]), as_number("seq", args[1])
    if len(args) == 3:
        step = as_number("seq", args[2])
    else:
        step = 1.0 if stop >= start else -1.0
    if not all(math.isfinite(x) for x in (start, stop, step)) or step == 0:
        raise TypeMismatch("seq() needs finite bounds and a non-zero step")
    if (stop - start) * step < 0:
        raise TypeMismatch("seq() step points away from the end value")
    n = int(math.floor((stop - start) / step + 1e-10)) + 1
    if n > 10_000_000:
        raise TypeMismatch("seq() result too long")
    return NumVector(start + i * step for i in range(n))


def _sum(args: Sequence[Value]) -> Value:
    _arity("sum", args, 1)
    return math.fsum(as_numbers("sum", args[0]))


def _mean(args: Sequence[Value]) -> Value:
    _arity("mean", args, 1)
    xs = as_numbers("mean", args[0])
    if not xs:
        raise TypeMismatch("mean() of an empty vector")
    return math.fsum(xs) / len(xs)


def _length(args: Sequence[Value]) -> Value:
    _arity("length", args, 1)
    v = args[0]
    return float(len(v)) if isinstance(v, (NumVector, TextVector)) else 1.0


def _sqrt1(x: float) -> float:
    return math.sqrt(x) if x >= 0 else math.nan


def _sqrt(args: Sequence[Value]) -> Value:
    _arity("sqrt", args, 1)
    v = args[0]
    if isinstance(v, NumVector):
        return NumVector(_sqrt1(x) for x in v)
    return _sqrt1(as_number("sqrt", v))


def _extreme(name: str, pick: Callable) -> Callable[[Sequence[Value]], Value]:
    def impl(args: Sequence[Value]) -> Value:
        xs: list[float] = []
        for a in args:
            xs.extend(as_numbers(name, a))
        if not xs:
            raise TypeMismatch(f"{name}() of nothing")
        return pick(xs)

    return impl


def _sort(args: Sequence[Value]) -> Value:
    _arity("sort", args, 1)
    v = args[0]
    if isinstance(v, (str, TextVector)):
        return TextVector(sorted([v] if isinstance(v, str) else v))
    return NumVector(sorted(as_numbers("sort", v)))


def _head(args: Sequence[Value]) -> Value:
    _arity("head", args, 1, 2)
    n = as_count("head", args[1]) if len(args) == 2 else 6
    v = args[0]
    if isinstance(v, TextVector):
        return TextVector(v[:n])
    return NumVector(as_numbers("head", v)[:n])


def _write(args: Sequence[Value]) -> bytes:
    _arity("write", args, 2)
    return canonical_value_text(args[0]).encode("utf-8")


def _pairs(name: str, xs: Sequence[float], ys: Sequence[float]) -> list[tuple[float, float]]:
    if len(xs) != len(ys):
        raise TypeMismatch(f"{name}(): x and y lengths differ ({len(xs)} vs {len(ys)})")
    return list(zip(xs, ys))


def _render_pairs(header: str, pairs: list[tuple[float, float]]) -> bytes:
    lines = [header] + [f"{format_number(x)} {format_number(y)}" for x, y in pairs]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _plot(args: Sequence[Value]) -> bytes:
    _arity("plot", args, 2, 3)
    if len(args) == 2:
        ys = as_numbers("plot", args[0])
        xs = tuple(float(i) for i in range(1, len(ys) + 1))
    else:
        xs, ys = as_numbers("plot", args[0]), as_numbers("plot", args[1])
    return _render_pairs("plot", _pairs("plot", xs, ys))


def _biplot(args: Sequence[Value]) -> bytes:
    _arity("plotx::biplot", args, 3)
    xs, ys = as_numbers("biplot", args[0]), as_numbers("biplot", args[1])
    return _render_pairs("biplot", sorted(_pairs("biplot", xs, ys)))


def _zscore(args: Sequence[Value]) -> Value:
    _arity("statsx::zscore", args, 1)
    xs = as_numbers("zscore", args[0])
    if len(xs) < 2:
        raise TypeMismatch("zscore() needs at least two values")
    mu = math.fsum(xs) / len(xs)
    sd = math.sqrt(math.fsum((x - mu) ** 2 for x in xs) / (len(xs) - 1))
    if sd == 0:
        return NumVector(math.nan for _ in xs)
    return NumVector((x - mu) / sd for x in xs)


BUILTINS: dict[str, Function] = {
    "c": Function(_c),
    "seq": Function(_seq),
    "sum": Function(_sum),
    "mean": Function(_mean),
    "length": Function(_length),
    "sqrt": Function(_sqrt),
    "min": Function(_extreme("min", min)),
    "max": Function(_extreme("max", max)),
    "sort": Function(_sort),
    "head": Function(_head),
    "write": Function(_write, writes=True),
    "plot": Function(_plot, writes=True),
}

# handled by the interpreter because they touch files, the console or the RNG
SPECIAL_FORMS = frozenset({"read", "read_text", "print", "library", "set.seed", "runif"})

LIBRARIES: dict[str, Library] = {
    "statsx": Library("statsx", LIBRARY_VERSION, {"zscore": Function(_zscore)}),
    "plotx": Library("plotx", LIBRARY_VERSION, {"biplot": Function(_biplot, writes=True)}),
}
