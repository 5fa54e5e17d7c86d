"""Lower a shape-annotated :class:`FftProgram` to loop nests.

Generator ops have constant arguments, so their matrices are materialized
here as ``const`` buffers.  Literal constants bound to a variable become
``input`` buffers that keep the literal as default data.  Everything else is
one loop nest writing one freshly allocated buffer:

* ``createCT``         2-deep elementwise pairing
* ``kroneckerproduct`` 4-deep, ``out[i*r + u, j*s + v] = a[i, j] * b[u, v]``
* ``matmul``           3-deep, zero-init store then load/multiply/add/store
"""

from __future__ import annotations

import numpy as np

from . import fft_ir as F
from .errors import UnloweredOp, VerificationError
from .loop_ir import (
    AffineExpr,
    Add,
    Alloc,
    Buffer,
    Const,
    Dealloc,
    For,
    Load,
    LoopIr,
    MakeComplex,
    Mul,
    NameGen,
    Store,
    verify_loop_ir,
    walk,
)

X = AffineExpr.var


def _buffer_name(op: F.FftOp) -> str:
    if op.kind == F.CONSTANT:
        return op.label if op.label else f"%c{op.id}"
    if op.kind in F.GENERATORS:
        return f"%c{op.id}"
    return f"%t{op.id}"


class _Lowerer:
    def __init__(self, program: F.FftProgram):
        self.program = program
        self.names = NameGen()
        self.buffers: dict[str, Buffer] = {}
        self.buf_of: dict[int, str] = {}

    def lower(self) -> LoopIr:
        nests: list[tuple[int, list]] = []
        for op in self.program.ops:
            if op.shape is None:
                raise UnloweredOp(f"%{op.id} has no inferred shape; run infer_shapes first")
            stmts = self.lower_op(op)
            if stmts:
                nests.append((op.id, stmts))
        output = self.buf_of.get(self.program.output) if self.program.output is not None else None
        body = self.schedule_lifetimes(nests, output)
        return LoopIr(self.buffers, tuple(body), output)

    def declare(self, op: F.FftOp, kind: str, init=None, origin="") -> str:
        name = _buffer_name(op)
        if name in self.buffers:
            # a variable declared twice with literals: keep names unique
            name = f"%c{op.id}"
            kind = "const" if kind == "input" else kind
        self.buffers[name] = Buffer(name, op.shape.rows, op.shape.cols, kind, init, origin)
        self.buf_of[op.id] = name
        return name

    def lower_op(self, op: F.FftOp) -> list:
        if op.kind == F.CONSTANT:
            kind = "input" if op.label else "const"
            self.declare(op, kind, np.array(op.value, dtype=float), "literal")
            return []
        if op.kind in F.GENERATORS:
            origin = f"{op.kind}({', '.join(map(str, op.attrs))})"
            self.declare(op, "const", F.evaluate_op(op, []), origin)
            return []
        a, b = (self.buf_of[i] for i in op.operands)
        sa, sb = (self.program.op(i).shape for i in op.operands)
        out = self.declare(op, "temp", origin=op.kind)
        if op.kind == F.CREATE_COMPLEX:
            return [Alloc(out), self.create_complex(out, a, b, sa)]
        if op.kind == F.KRONECKER:
            return [Alloc(out), self.kronecker(out, a, b, sa, sb)]
        if op.kind == F.MATMUL:
            return [Alloc(out), self.matmul(out, a, b, sa, sb)]
        raise UnloweredOp(f"no lowering rule for fft.{op.kind}")

    def create_complex(self, out, re, im, shape) -> For:
        v = self.names
        i, j = v.var(), v.var()
        x, y, z = v.value(), v.value(), v.value()
        inner = For(j, 0, shape.cols, (
            Load(x, re, X(i), X(j)),
            Load(y, im, X(i), X(j)),
            MakeComplex(z, x, y),
            Store(out, X(i), X(j), z),
        ))
        return For(i, 0, shape.rows, (inner,))

    def kronecker(self, out, a, b, sa, sb) -> For:
        v = self.names
        i, j, u, w = v.var(), v.var(), v.var(), v.var()
        x, y, z = v.value(), v.value(), v.value()
        row = X(i, sb.rows) + X(u)
        col = X(j, sb.cols) + X(w)
        body = (
            Load(x, a, X(i), X(j)),
            Load(y, b, X(u), X(w)),
            Mul(z, x, y),
            Store(out, row, col, z),
        )
        nest = For(w, 0, sb.cols, body)
        nest = For(u, 0, sb.rows, (nest,))
        nest = For(j, 0, sa.cols, (nest,))
        return For(i, 0, sa.rows, (nest,))

    def matmul(self, out, a, b, sa, sb) -> For:
        v = self.names
        i, j, k = v.var(), v.var(), v.var()
        zero, x, y, acc, prod, total = (v.value() for _ in range(6))
        reduce = For(k, 0, sa.cols, (
            Load(x, a, X(i), X(k)),
            Load(y, b, X(k), X(j)),
            Load(acc, out, X(i), X(j)),
            Mul(prod, x, y),
            Add(total, acc, prod),
            Store(out, X(i), X(j), total),
        ))
        cols = For(j, 0, sb.cols, (
            Const(zero, 0j),
            Store(out, X(i), X(j), zero),
            reduce,
        ))
        return For(i, 0, sa.rows, (cols,))

    def schedule_lifetimes(self, nests, output) -> list:
        """Place each temp's dealloc right after the nest that last reads it."""
        last_use: dict[str, int] = {}
        for pos, (op_id, stmts) in enumerate(nests):
            last_use.setdefault(self.buf_of[op_id], pos)
            for s in walk(stmts):
                if isinstance(s, Load):
                    last_use[s.buffer] = pos
        body = []
        for pos, (_, stmts) in enumerate(nests):
            body.extend(stmts)
            for name, last in last_use.items():
                if last == pos and name != output and self.buffers[name].kind == "temp":
                    body.append(Dealloc(name))
        return body


def lower_to_loops(program: F.FftProgram) -> LoopIr:
    if any(op.shape is None for op in program.ops):
        program = F.infer_shapes(program)
    return _Lowerer(program).lower()


def check_lowered(ir: LoopIr) -> LoopIr:
    diags = verify_loop_ir(ir)
    if diags:
        raise VerificationError(diags)
    return ir

