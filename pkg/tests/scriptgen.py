"""Random minilang programs for property and acceptance tests.

``straight_line`` builds loop-free scripts whose data flow is a tree: every
value is consumed at most once and each constant appears at most once, so
no two operations can cancel.  With that shape the smallest statement
subset that reproduces the output is unique and coincides with the live
code, which makes a brute-force search a sound answer key.

``structured`` mixes in loops, conditionals, prints, plots, library calls
and seeded random draws; it is used for re-execution checks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

CONSTANTS = (1.3, 2.7, 3.1, 0.6, 4.9, 7.3, 5.9, 9.7, 1.7, 6.1, 8.3, 0.9)
NAMES = ("a", "b", "c", "d", "e", "f", "g", "h")


@dataclass
class Program:
    source: str
    inputs: dict[str, bytes] = field(default_factory=dict)
    target: str = "out.txt"

    @property
    def lines(self) -> list[str]:
        return self.source.splitlines()


def _data(rng: random.Random, n: int = 3) -> bytes:
    # values kept away from zero so division stays finite
    vals = [round(rng.uniform(1.0, 50.0), 3) for _ in range(n)]
    return "".join(f"{v}\n" for v in vals).encode()


def straight_line(rng: random.Random, max_statements: int = 12) -> Program:
    """Loop-free script of at most ``max_statements`` ending in a single write."""
    n = rng.randint(2, max_statements)
    inputs: dict[str, bytes] = {}
    fresh: list[str] = []     # defined names whose current value is unconsumed
    lines: list[str] = []
    constants = rng.sample(CONSTANTS, len(CONSTANTS))
    for _ in range(n - 1):
        choice = rng.random()
        if not fresh or choice < 0.25:
            path = f"in{len(inputs) + 1}.txt"
            inputs[path] = _data(rng)
            name = rng.choice(NAMES)
            lines.append(f'{name} <- read("{path}")')
        else:
            lhs = fresh.pop(rng.randrange(len(fresh)))
            if fresh and rng.random() < 0.4:
                rhs = fresh.pop(rng.randrange(len(fresh)))
                op = rng.choice("+-*")
                expr = f"{lhs} {op} {rhs}"
            else:
                op = rng.choice("+-*/")
                expr = f"{lhs} {op} {constants.pop()}"
            # overwrite the operand half the time to exercise redefinition
            name = lhs if rng.random() < 0.5 else rng.choice(NAMES)
            lines.append(f"{name} <- {expr}")
        if name in fresh:
            fresh.remove(name)  # the old value is dead from here on
        fresh.append(name)
    if not fresh:
        path = f"in{len(inputs) + 1}.txt"
        inputs[path] = _data(rng)
        lines.append(f'w <- read("{path}")')
        fresh.append("w")
    lines.append(f'write({rng.choice(fresh)}, "out.txt")')
    return Program("\n".join(lines) + "\n", inputs)


class _Structured:
    def __init__(self, rng: random.Random) -> None:
        self.rng = rng
        self.vectors: list[str] = []
        self.scalars: list[str] = []
        self.inputs: dict[str, bytes] = {}
        self.writes = 0
        self.libs: set[str] = set()
        self.lines: list[str] = []
        self.depth = 0

    def emit(self, text: str) -> None:
        self.lines.append("  " * self.depth + text)

    def const(self) -> str:
        return str(self.rng.choice(CONSTANTS))

    def vec(self) -> str:
        return self.rng.choice(self.vectors)

    def scalar_expr(self) -> str:
        r = self.rng.random()
        if self.scalars and r < 0.4:
            return f"{self.rng.choice(self.scalars)} {self.rng.choice('+-*')} {self.const()}"
        fn = self.rng.choice(("sum", "mean", "max", "min", "length"))
        return f"{fn}({self.vec()})"

    def vector_expr(self) -> str:
        r = self.rng.random()
        if r < 0.3 and len(self.vectors) > 1:
            a, b = self.rng.sample(self.vectors, 2)
            return f"{a} {self.rng.choice('+-*')} {b}"
        if r < 0.45 and self.scalars:
            return f"{self.vec()} * {self.rng.choice(self.scalars)}"
        if r < 0.55:
            return f"sort({self.vec()})"
        if r < 0.65 and "statsx" in self.libs:
            return f"statsx::zscore({self.vec()})"
        return f"{self.vec()} {self.rng.choice('+-*/')} {self.const()}"

    def define(self, kind: str, expr: str) -> None:
        pool = self.vectors if kind == "v" else self.scalars
        if pool and self.rng.random() < 0.3:
            name = self.rng.choice(pool)
        else:
            name = f"{kind}{len(pool) + 1}"
            pool.append(name)
        self.emit(f"{name} <- {expr}")

    def read(self) -> None:
        path = f"d{len(self.inputs) + 1}.txt"
        self.inputs[path] = _data(self.rng)
        name = f"v{len(self.vectors) + 1}"
        self.vectors.append(name)
        self.emit(f'{name} <- read("{path}")')

    def output(self) -> None:
        self.writes += 1
        path = f"out{self.writes}.txt"
        r = self.rng.random()
        if r < 0.5:
            data = self.vec() if self.rng.random() < 0.7 or not self.scalars else self.rng.choice(self.scalars)
            self.emit(f'write({data}, "{path}")')
        elif r < 0.75 or "plotx" not in self.libs:
            self.emit(f'plot({self.vec()}, "{path}")')
        else:
            self.emit(f'plotx::biplot({self.vec()}, {self.vec()}, "{path}")')

    def simple(self) -> None:
        r = self.rng.random()
        if r < 0.35:
            self.define("v", self.vector_expr())
        elif r < 0.6:
            self.define("s", self.scalar_expr())
        elif r < 0.7:
            self.emit(f"print({self.rng.choice(self.vectors + self.scalars)})")
        elif r < 0.8:
            self.define("v", "runif(3)")
        elif r < 0.85:
            self.emit(f"set.seed({self.rng.randint(0, 999)})")
        else:
            self.output()

    def block(self, size: int) -> None:
        self.depth += 1
        for _ in range(size):
            if self.depth < 3 and self.rng.random() < 0.15:
                self.compound()
            else:
                self.simple()
        self.depth -= 1

    def compound(self) -> None:
        if self.rng.random() < 0.5:
            it = f"seq(1, {self.rng.randint(1, 4)})" if self.rng.random() < 0.5 else self.vec()
            var = f"i{self.depth}"
            acc = f"s{len(self.scalars) + 1}"
            self.scalars.append(acc)
            self.emit(f"{acc} <- 0")
            self.emit(f"for ({var} in {it}) {{")
            self.depth += 1
            self.emit(f"{acc} <- {acc} + {var}")
            self.depth -= 1
            self.scalars.append(var)
            self.block(self.rng.randint(0, 2))
            self.scalars.remove(var)
            self.emit("}")
        else:
            cond = f"{self.scalar_expr()} {self.rng.choice(('>', '<', '>=', '<='))} {self.rng.uniform(0, 60):.2f}"
            # names first bound inside a branch may be unbound afterwards
            saved = list(self.vectors), list(self.scalars)
            self.emit(f"if ({cond}) {{")
            self.block(self.rng.randint(1, 3))
            self.vectors, self.scalars = list(saved[0]), list(saved[1])
            if self.rng.random() < 0.5:
                self.emit("} else {")
                self.block(self.rng.randint(1, 2))
                self.vectors, self.scalars = list(saved[0]), list(saved[1])
            self.emit("}")


def structured(rng: random.Random, size: int = 14) -> Program:
    """Script with loops, branches and seeded draws.

    ``target`` names the last write, which always runs; writes inside
    branches may or may not happen.
    """
    g = _Structured(rng)
    for lib in ("statsx", "plotx"):
        if rng.random() < 0.5:
            g.libs.add(lib)
            g.emit(f"library({lib})")
    if rng.random() < 0.7:
        g.emit(f"set.seed({rng.randint(0, 999)})")
    g.read()
    for _ in range(size):
        r = rng.random()
        if r < 0.12:
            g.read()
        elif r < 0.35:
            g.compound()
        else:
            g.simple()
    g.output()
    return Program("\n".join(g.lines) + "\n", g.inputs, f"out{g.writes}.txt")
