"""Loop-nest IR: counted loops over complex buffers with affine subscripts.

Values are SSA names (``%v12``) bound by ``Const``/``Load``/``Add``/``Mul``/
``MakeComplex`` statements and by loop results.  A value defined inside a loop
body is visible only inside that body.  Loops may carry values between
iterations through ``iter_args``; each iteration ends by yielding the next
values, and the final ones are bound to ``results`` after the loop.

Buffers are 2-D complex arrays.  ``input`` and ``const`` buffers are read-only
and carry initial data; ``temp`` buffers are explicitly allocated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np


@dataclass(frozen=True)
class AffineExpr:
    """``const + sum(coeff * var)``; terms are sorted by variable name."""

    terms: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @staticmethod
    def of(const: int = 0, **coeffs: int) -> "AffineExpr":
        return AffineExpr(tuple(sorted((v, c) for v, c in coeffs.items() if c)), const)

    @staticmethod
    def var(name: str, coeff: int = 1) -> "AffineExpr":
        return AffineExpr(((name, coeff),) if coeff else ())

    def __add__(self, other: "AffineExpr | int") -> "AffineExpr":
        if isinstance(other, int):
            return AffineExpr(self.terms, self.const + other)
        acc = dict(self.terms)
        for v, c in other.terms:
            acc[v] = acc.get(v, 0) + c
        return AffineExpr(tuple(sorted((v, c) for v, c in acc.items() if c)),
                          self.const + other.const)

    def scale(self, k: int) -> "AffineExpr":
        if k == 0:
            return AffineExpr()
        return AffineExpr(tuple((v, c * k) for v, c in self.terms), self.const * k)

    @property
    def vars(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.terms)

    def coeff(self, var: str) -> int:
        for v, c in self.terms:
            if v == var:
                return c
        return 0

    def rename(self, mapping: dict[str, str]) -> "AffineExpr":
        acc: dict[str, int] = {}
        for v, c in self.terms:
            v = mapping.get(v, v)
            acc[v] = acc.get(v, 0) + c
        return AffineExpr(tuple(sorted((v, c) for v, c in acc.items() if c)), self.const)

    def evaluate(self, env: dict[str, int]) -> int:
        return self.const + sum(c * env[v] for v, c in self.terms)

    def bounds(self, ranges: dict[str, tuple[int, int]]) -> tuple[int, int]:
        """Min and max over the box ``lower <= var < upper`` (non-empty ranges)."""
        lo = hi = self.const
        for v, c in self.terms:
            a, b = ranges[v][0], ranges[v][1] - 1
            lo += min(c * a, c * b)
            hi += max(c * a, c * b)
        return lo, hi

    def __str__(self):
        parts = []
        for v, c in self.terms:
            parts.append(v if c == 1 else f"{c}*{v}")
        if self.const or not parts:
            parts.append(str(self.const))
        return " + ".join(parts).replace("+ -", "- ")


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class Alloc:
    buffer: str


@dataclass(frozen=True)
class Dealloc:
    buffer: str


@dataclass(frozen=True)
class Const:
    result: str
    value: complex


@dataclass(frozen=True)
class Add:
    result: str
    lhs: str
    rhs: str


@dataclass(frozen=True)
class Mul:
    result: str
    lhs: str
    rhs: str


@dataclass(frozen=True)
class MakeComplex:
    """``real(re) + i*real(im)``."""

    result: str
    re: str
    im: str


@dataclass(frozen=True)
class Load:
    result: str
    buffer: str
    row: AffineExpr
    col: AffineExpr


@dataclass(frozen=True)
class Store:
    buffer: str
    row: AffineExpr
    col: AffineExpr
    value: str


@dataclass(frozen=True)
class For:
    var: str
    lower: int
    upper: int
    body: tuple
    iter_args: tuple[tuple[str, str], ...] = ()  # (name in body, initial value)
    yields: tuple[str, ...] = ()
    results: tuple[str, ...] = ()

    @property
    def trip_count(self) -> int:
        return max(0, self.upper - self.lower)


Stmt = Union[Alloc, Dealloc, Const, Add, Mul, MakeComplex, Load, Store, For]
VALUE_OPS = (Const, Add, Mul, MakeComplex)


def operands(stmt) -> tuple[str, ...]:
    """SSA values read by a non-loop statement (loops: their iter-arg inits)."""
    if isinstance(stmt, (Add, Mul)):
        return (stmt.lhs, stmt.rhs)
    if isinstance(stmt, MakeComplex):
        return (stmt.re, stmt.im)
    if isinstance(stmt, Store):
        return (stmt.value,)
    if isinstance(stmt, For):
        return tuple(init for _, init in stmt.iter_args)
    return ()


def defines(stmt) -> tuple[str, ...]:
    if isinstance(stmt, For):
        return stmt.results
    result = getattr(stmt, "result", None)
    return (result,) if result is not None else ()


def walk(stmts) -> Iterator:
    """Pre-order traversal of statements, descending into loop bodies."""
    for s in stmts:
        yield s
        if isinstance(s, For):
            yield from walk(s.body)


def accesses(stmts, buffer: str | None = None) -> Iterator[Union[Load, Store]]:
    for s in walk(stmts):
        if isinstance(s, (Load, Store)) and (buffer is None or s.buffer == buffer):
            yield s


def stored_buffers(stmts) -> set[str]:
    return {s.buffer for s in walk(stmts) if isinstance(s, Store)}


def loaded_buffers(stmts) -> set[str]:
    return {s.buffer for s in walk(stmts) if isinstance(s, Load)}


def loop_ranges(stmts) -> dict[str, tuple[int, int]]:
    return {s.var: (s.lower, s.upper) for s in walk(stmts) if isinstance(s, For)}


def substitute(stmts, mapping: dict[str, str]) -> tuple:
    """Rename uses (not definitions) of SSA values throughout ``stmts``."""
    if not mapping:
        return tuple(stmts)

    def m(name):
        while name in mapping:
            name = mapping[name]
        return name

    out = []
    for s in stmts:
        if isinstance(s, (Add, Mul)):
            s = type(s)(s.result, m(s.lhs), m(s.rhs))
        elif isinstance(s, MakeComplex):
            s = MakeComplex(s.result, m(s.re), m(s.im))
        elif isinstance(s, Store):
            s = Store(s.buffer, s.row, s.col, m(s.value))
        elif isinstance(s, For):
            s = For(s.var, s.lower, s.upper, substitute(s.body, mapping),
                    tuple((a, m(i)) for a, i in s.iter_args),
                    tuple(m(y) for y in s.yields), s.results)
        out.append(s)
    return tuple(out)


# -- buffers and programs ---------------------------------------------------


@dataclass(eq=False)
class Buffer:
    name: str
    rows: int
    cols: int
    kind: str = "temp"  # "input" | "const" | "temp"
    init: np.ndarray | None = None
    origin: str = ""

    def __post_init__(self):
        if self.init is not None:
            init = np.array(self.init, dtype=np.complex128).reshape(self.rows, self.cols)
            init.setflags(write=False)
            self.init = init

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def __eq__(self, other):
        if not isinstance(other, Buffer):
            return NotImplemented
        same_init = (self.init is None) == (other.init is None) and (
            self.init is None or self.init.tobytes() == other.init.tobytes())
        return (self.name, self.rows, self.cols, self.kind, self.origin) == (
            other.name, other.rows, other.cols, other.kind, other.origin) and same_init

    __hash__ = None


@dataclass(frozen=True)
class LoopIr:
    buffers: dict = field(default_factory=dict)  # name -> Buffer, in declaration order
    body: tuple = ()
    output: str | None = None

    @property
    def inputs(self) -> dict[str, tuple[int, int]]:
        return {b.name: b.shape for b in self.buffers.values() if b.kind == "input"}

    def with_body(self, body, buffers=None) -> "LoopIr":
        return LoopIr(dict(self.buffers if buffers is None else buffers), tuple(body), self.output)


class NameGen:
    """Fresh SSA value and loop-variable names that do not clash with an IR."""

    def __init__(self, ir: LoopIr | None = None):
        self.next_value = 0
        self.next_var = 0
        if ir is not None:
            for s in walk(ir.body):
                names = list(defines(s))
                if isinstance(s, For):
                    names += [a for a, _ in s.iter_args]
                    self.next_var = max(self.next_var, _suffix(s.var, "i") + 1)
                for n in names:
                    self.next_value = max(self.next_value, _suffix(n, "%v") + 1)

    def value(self) -> str:
        name = f"%v{self.next_value}"
        self.next_value += 1
        return name

    def var(self) -> str:
        name = f"i{self.next_var}"
        self.next_var += 1
        return name


def _suffix(name: str, prefix: str) -> int:
    if name.startswith(prefix) and name[len(prefix):].isdigit():
        return int(name[len(prefix):])
    return -1


# -- verification ------------------------------------------------------------


def verify_loop_ir(ir: LoopIr) -> list[str]:
    """Well-formedness checks; returns diagnostics (empty means ok)."""
    diags: list[str] = []
    buffers = ir.buffers
    stored: set[str] = set()
    live: set[str] = set()
    freed: set[str] = set()
    seen_values: set[str] = set()
    seen_vars: set[str] = set()

    def check_index(s, ranges):
        buf = buffers.get(s.buffer)
        if buf is None:
            diags.append(f"access to undeclared buffer {s.buffer}")
            return
        for axis, expr, dim in (("row", s.row, buf.rows), ("col", s.col, buf.cols)):
            unknown = expr.vars - ranges.keys()
            if unknown:
                diags.append(f"{s.buffer} {axis} index '{expr}' uses non-enclosing "
                             f"variable(s) {sorted(unknown)}")
                continue
            if any(ranges[v][0] >= ranges[v][1] for v in expr.vars):
                continue  # never executed
            lo, hi = expr.bounds(ranges)
            if lo < 0 or hi >= dim:
                diags.append(f"{s.buffer} {axis} index '{expr}' spans [{lo}, {hi}], "
                             f"outside [0, {dim})")
        if buf.kind == "temp":
            if s.buffer not in live:
                state = "deallocated" if s.buffer in freed else "unallocated"
                diags.append(f"access to {state} buffer {s.buffer}")

    def define(name):
        if name in seen_values:
            diags.append(f"value {name} defined more than once")
        seen_values.add(name)

    def block(stmts, scope: set[str], ranges: dict, depth: int):
        scope = set(scope)
        for s in stmts:
            for v in operands(s):
                if v not in scope:
                    diags.append(f"use of undefined value {v}")
            if isinstance(s, (Alloc, Dealloc)):
                if depth:
                    diags.append(f"{type(s).__name__.lower()} of {s.buffer} inside a loop")
                buf = buffers.get(s.buffer)
                if buf is None or buf.kind != "temp":
                    diags.append(f"{type(s).__name__.lower()} of non-temp buffer {s.buffer}")
                elif isinstance(s, Alloc):
                    if s.buffer in live:
                        diags.append(f"buffer {s.buffer} allocated twice")
                    live.add(s.buffer)
                    freed.discard(s.buffer)
                else:
                    if s.buffer not in live:
                        diags.append(f"dealloc of buffer {s.buffer} that is not live")
                    live.discard(s.buffer)
                    freed.add(s.buffer)
                    if s.buffer == ir.output:
                        diags.append(f"output buffer {s.buffer} is deallocated")
            elif isinstance(s, Load):
                check_index(s, ranges)
                buf = buffers.get(s.buffer)
                if buf is not None and buf.kind == "temp" and s.buffer not in stored:
                    diags.append(f"load from {s.buffer} before any store to it")
            elif isinstance(s, Store):
                check_index(s, ranges)
                buf = buffers.get(s.buffer)
                if buf is not None and buf.kind != "temp":
                    diags.append(f"store to read-only {buf.kind} buffer {s.buffer}")
                stored.add(s.buffer)
            elif isinstance(s, For):
                if s.var in seen_vars:
                    diags.append(f"loop variable {s.var} reused")
                seen_vars.add(s.var)
                if s.lower > s.upper:
                    diags.append(f"loop {s.var} has lower bound above upper bound")
                if not (len(s.iter_args) == len(s.yields) == len(s.results)):
                    diags.append(f"loop {s.var}: iter_args/yields/results arity differ")
                inner = set(scope)
                for a, _ in s.iter_args:
                    define(a)
                    inner.add(a)
                body_scope = block(s.body, inner, {**ranges, s.var: (s.lower, s.upper)},
                                   depth + 1)
                for y in s.yields:
                    if y not in body_scope:
                        diags.append(f"loop {s.var} yields undefined value {y}")
            for name in defines(s):
                define(name)
                scope.add(name)
        return scope

    block(ir.body, set(), {}, 0)
    if ir.output is not None and ir.output not in buffers:
        diags.append(f"output buffer {ir.output} is not declared")
    return diags


# -- textual form ----------------------------------------------------------


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    return f"({z.real!r}{'+' if z.imag >= 0 or z.imag != z.imag else '-'}{abs(z.imag)!r}j)"


def format_stmt(s) -> str:
    if isinstance(s, Alloc):
        return f"alloc {s.buffer}"
    if isinstance(s, Dealloc):
        return f"dealloc {s.buffer}"
    if isinstance(s, Const):
        return f"{s.result} = const {_fmt_complex(s.value)}"
    if isinstance(s, Add):
        return f"{s.result} = add {s.lhs}, {s.rhs}"
    if isinstance(s, Mul):
        return f"{s.result} = mul {s.lhs}, {s.rhs}"
    if isinstance(s, MakeComplex):
        return f"{s.result} = complex {s.re}, {s.im}"
    if isinstance(s, Load):
        return f"{s.result} = load {s.buffer}[{s.row}, {s.col}]"
    if isinstance(s, Store):
        return f"store {s.value}, {s.buffer}[{s.row}, {s.col}]"
    raise TypeError(f"not a simple statement: {s!r}")


def _dump_block(stmts, depth: int, out: list[str]) -> None:
    pad = "  " * depth
    for s in stmts:
        if isinstance(s, For):
            head = f"for {s.var} = {s.lower} to {s.upper}"
            if s.iter_args:
                head = ", ".join(s.results) + " = " + head
                head += " iter(" + ", ".join(f"{a} = {i}" for a, i in s.iter_args) + ")"
            out.append(f"{pad}{head} {{")
            _dump_block(s.body, depth + 1, out)
            if s.yields:
                out.append(f"{pad}  yield " + ", ".join(s.yields))
            out.append(f"{pad}}}")
        else:
            out.append(pad + format_stmt(s))


def dump_loop_ir(ir: LoopIr) -> str:
    if not ir.buffers and not ir.body:
        return ""
    out = []
    for b in ir.buffers.values():
        line = f"buffer {b.name} : {b.rows}x{b.cols} {b.kind}"
        if b.origin:
            line += f" {b.origin}"
        out.append(line)
    _dump_block(ir.body, 0, out)
    if ir.output is not None:
        out.append(f"return {ir.output}")
    return "\n".join(out) + "\n"


def count_nests(ir: LoopIr) -> int:
    """Number of top-level loop nests."""
    return sum(1 for s in ir.body if isinstance(s, For))


def separates(row: AffineExpr, col: AffineExpr, required, ranges: dict) -> bool:
    """Whether distinct values of the ``required`` variables always address
    distinct cells.

    ``ranges`` lists every variable that varies (``required`` plus any inner
    loop variables); variables outside it are treated as fixed.  The test is
    sufficient, not necessary: each required variable must appear, and within
    each coordinate the varying terms must form a mixed-radix numbering, i.e.
    every coefficient exceeds the largest offset the smaller terms can reach.
    """
    for v in required:
        if not row.coeff(v) and not col.coeff(v):
            return False
    for expr in (row, col):
        span = 0
        for c, trip in sorted((abs(c), ranges[v][1] - ranges[v][0])
                              for v, c in expr.terms if v in ranges):
            if trip <= 1:
                continue
            if c <= span:
                return False
            span += c * (trip - 1)
    return True
