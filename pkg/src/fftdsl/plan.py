"""Serialized execution plans.

A plan is an optimized loop IR written to a self-contained byte stream, so a
program can be compiled once and executed later without the frontend or the
pass pipeline.  Layout (little-endian)::

    magic   b"FFTPLAN\\0"
    u32     format version
    section buffers     u32 length, payload
    section statements  u32 length, payload
    section metadata    u32 length, UTF-8 JSON

Strings are ``u16 length + UTF-8``.  Buffer initial data is raw ``<c16``.
Statements are encoded recursively with a one-byte opcode.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptStream, VersionMismatch
from .execution import Executable, ExecStats
from .loop_ir import (
    Add,
    AffineExpr,
    Alloc,
    Buffer,
    Const,
    Dealloc,
    For,
    Load,
    LoopIr,
    MakeComplex,
    Mul,
    Store,
)

MAGIC = b"FFTPLAN\0"
FORMAT_VERSION = 1

_KINDS = ("input", "const", "temp")
_OP = {Alloc: 1, Dealloc: 2, Const: 3, Add: 4, Mul: 5, MakeComplex: 6, Load: 7, Store: 8, For: 9}


@dataclass
class Plan:
    version: int
    ir: LoopIr
    meta: dict = field(default_factory=dict)

    @property
    def inputs(self) -> dict[str, tuple[int, int]]:
        return self.ir.inputs


# -- writing -----------------------------------------------------------------


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def pack(self, fmt, *values):
        self.parts.append(struct.pack("<" + fmt, *values))

    def string(self, s: str):
        data = s.encode("utf-8")
        self.pack("H", len(data))
        self.parts.append(data)

    def affine(self, e: AffineExpr):
        self.pack("H", len(e.terms))
        for var, coeff in e.terms:
            self.string(var)
            self.pack("q", coeff)
        self.pack("q", e.const)

    def names(self, names):
        self.pack("H", len(names))
        for n in names:
            self.string(n)

    def stmts(self, stmts):
        self.pack("I", len(stmts))
        for s in stmts:
            self.stmt(s)

    def stmt(self, s):
        self.pack("B", _OP[type(s)])
        if isinstance(s, (Alloc, Dealloc)):
            self.string(s.buffer)
        elif isinstance(s, Const):
            self.string(s.result)
            z = complex(s.value)
            self.pack("dd", z.real, z.imag)
        elif isinstance(s, (Add, Mul)):
            self.names((s.result, s.lhs, s.rhs))
        elif isinstance(s, MakeComplex):
            self.names((s.result, s.re, s.im))
        elif isinstance(s, Load):
            self.names((s.result, s.buffer))
            self.affine(s.row)
            self.affine(s.col)
        elif isinstance(s, Store):
            self.names((s.buffer, s.value))
            self.affine(s.row)
            self.affine(s.col)
        else:
            self.string(s.var)
            self.pack("qq", s.lower, s.upper)
            self.names([a for a, _ in s.iter_args])
            self.names([i for _, i in s.iter_args])
            self.names(s.yields)
            self.names(s.results)
            self.stmts(s.body)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


def _section(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload


def serialize_plan(ir: LoopIr, meta: dict | None = None) -> bytes:
    bw = _Writer()
    bw.pack("I", len(ir.buffers))
    for b in ir.buffers.values():
        bw.string(b.name)
        bw.pack("BII", _KINDS.index(b.kind), b.rows, b.cols)
        bw.string(b.origin)
        bw.pack("B", b.init is not None)
        if b.init is not None:
            bw.parts.append(np.ascontiguousarray(b.init, dtype="<c16").tobytes())
    bw.pack("B", ir.output is not None)
    if ir.output is not None:
        bw.string(ir.output)

    sw = _Writer()
    sw.stmts(ir.body)

    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    return (MAGIC + struct.pack("<I", FORMAT_VERSION) + _section(bw.getvalue())
            + _section(sw.getvalue()) + _section(meta_bytes))


# -- reading -----------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes, offset: int = 0, end: int | None = None):
        self.data = data
        self.pos = offset
        self.end = len(data) if end is None else end

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise CorruptStream(self.pos, f"needed {n} bytes, {self.end - self.pos} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        fmt = "<" + fmt
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return values[0] if len(values) == 1 else values

    def string(self) -> str:
        start = self.pos
        n = self.unpack("H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptStream(start, "invalid UTF-8 in string") from None

    def affine(self) -> AffineExpr:
        terms = []
        for _ in range(self.unpack("H")):
            var = self.string()
            terms.append((var, self.unpack("q")))
        return AffineExpr(tuple(sorted(terms)), self.unpack("q"))

    def names(self) -> tuple[str, ...]:
        return tuple(self.string() for _ in range(self.unpack("H")))

    def fixed_names(self, count: int, at: int) -> tuple[str, ...]:
        names = self.names()
        if len(names) != count:
            raise CorruptStream(at, f"expected {count} names, found {len(names)}")
        return names

    def stmts(self) -> tuple:
        return tuple(self.stmt() for _ in range(self.unpack("I")))

    def stmt(self):
        at = self.pos
        op = self.unpack("B")
        if op in (1, 2):
            return (Alloc if op == 1 else Dealloc)(self.string())
        if op == 3:
            result = self.string()
            re, im = self.unpack("dd")
            return Const(result, complex(re, im))
        if op in (4, 5):
            return (Add if op == 4 else Mul)(*self.fixed_names(3, at))
        if op == 6:
            return MakeComplex(*self.fixed_names(3, at))
        if op == 7:
            result, buffer = self.fixed_names(2, at)
            return Load(result, buffer, self.affine(), self.affine())
        if op == 8:
            buffer, value = self.fixed_names(2, at)
            return Store(buffer, self.affine(), self.affine(), value)
        if op == 9:
            var = self.string()
            lower, upper = self.unpack("qq")
            args, inits = self.names(), self.names()
            if len(args) != len(inits):
                raise CorruptStream(at, "iter_args and initial values differ in length")
            yields, results = self.names(), self.names()
            body = self.stmts()
            return For(var, lower, upper, body, tuple(zip(args, inits)), yields, results)
        raise CorruptStream(at, f"unknown opcode {op}")

    def section(self) -> "_Reader":
        n = self.unpack("I")
        start = self.pos
        self.take(n)
        return _Reader(self.data, start, start + n)

    def expect_end(self):
        if self.pos != self.end:
            raise CorruptStream(self.pos, f"{self.end - self.pos} unexpected trailing bytes")


def deserialize_plan(data: bytes) -> Plan:
    data = bytes(data)
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptStream(0, "not a plan (bad magic)")
    version = r.unpack("I")
    if version != FORMAT_VERSION:
        raise VersionMismatch(FORMAT_VERSION, version)

    br = r.section()
    buffers = {}
    for _ in range(br.unpack("I")):
        at = br.pos
        name = br.string()
        kind, rows, cols = br.unpack("BII")
        if kind >= len(_KINDS):
            raise CorruptStream(at, f"unknown buffer kind {kind}")
        origin = br.string()
        init = None
        if br.unpack("B"):
            raw = br.take(16 * rows * cols)
            init = np.frombuffer(raw, dtype="<c16").reshape(rows, cols)
        buffers[name] = Buffer(name, rows, cols, _KINDS[kind], init, origin)
    output = br.string() if br.unpack("B") else None
    br.expect_end()

    sr = r.section()
    body = sr.stmts()
    sr.expect_end()

    mr = r.section()
    try:
        meta = json.loads(mr.take(mr.end - mr.pos).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptStream(mr.pos, "metadata is not valid JSON") from None
    r.expect_end()
    return Plan(version, LoopIr(buffers, body, output), meta)


def is_plan(data: bytes) -> bool:
    return bytes(data[:len(MAGIC)]) == MAGIC


def run_plan(plan: Plan, inputs=None, *, vectorize: bool = True) -> tuple[np.ndarray, ExecStats]:
    """Execute a deserialized plan; same engine and results as ``interpret``."""
    return Executable(plan.ir, vectorize=vectorize).run(inputs)


def save_plan(path, ir: LoopIr, meta: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(serialize_plan(ir, meta))


def load_plan(path) -> Plan:
    with open(path, "rb") as f:
        return deserialize_plan(f.read())
