"""Loop-IR interpreter.

Two engines share one contract and identical access/flop counters:

* ``vectorize=False`` walks every iteration with Python complex arithmetic;
  it is the literal reading of the IR and the reference for the other engine.
* ``vectorize=True`` (default) executes a loop whose iterations touch disjoint
  buffer cells as one numpy axis, and a loop that only accumulates into one
  cell (or a loop-carried value) as a single contraction over that axis.  Any
  other loop runs iteration by iteration.  Reductions are summed by numpy, so
  results can differ from the scalar engine in the last bits.

Counters always follow the IR's sequential semantics: a statement nested in
loops with trip counts ``t1..tk`` counts ``t1*...*tk`` executions.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ExecutionError, InputMismatch, OutOfBoundsAccess, VerificationError
from .generators import as_tensor
from .loop_ir import (
    Add,
    Alloc,
    Const,
    Dealloc,
    For,
    Load,
    LoopIr,
    MakeComplex,
    Mul,
    Store,
    accesses,
    loop_ranges,
    operands,
    separates,
    stored_buffers,
    verify_loop_ir,
    walk,
)


@dataclass
class ExecStats:
    frontend_s: float = 0.0
    pipeline_s: float = 0.0
    execution_s: float = 0.0
    loads: int = 0
    stores: int = 0
    muls: int = 0
    adds: int = 0
    passes: dict = field(default_factory=dict)

    @property
    def flops(self) -> int:
        """Complex multiplications plus complex additions."""
        return self.muls + self.adds

    def as_dict(self) -> dict:
        d = asdict(self)
        d["flops"] = self.flops
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


# -- static schedule for the vectorized engine ---------------------------------

PARALLEL, SEQUENTIAL, SKIP, CELL_REDUCTION, CARRIED_REDUCTION = (
    "parallel", "sequential", "skip", "cell-reduction", "carried-reduction")


@dataclass(frozen=True)
class _CellReduction:
    """``t = load X[e]; ...; s = add t, d; store s, X[e]`` with ``e`` invariant."""

    load: Load
    add: Add
    store: Store
    delta: str


@dataclass(frozen=True)
class _CarriedReduction:
    """Every iter arg ``a`` is yielded as ``add a, d`` and used nowhere else."""

    adds: tuple
    deltas: tuple


def _use_counts(stmts) -> dict[str, int]:
    counts: dict[str, int] = {}
    for s in stmts:
        for v in operands(s):
            counts[v] = counts.get(v, 0) + 1
    return counts


def _flat(loop: For) -> bool:
    return not any(isinstance(s, (For, Alloc, Dealloc)) for s in loop.body)


def _match_cell_reduction(loop: For):
    if not _flat(loop):
        return None
    stores = [s for s in loop.body if isinstance(s, Store)]
    if len(stores) != 1:
        return None
    st = stores[0]
    if loop.var in st.row.vars or loop.var in st.col.vars:
        return None
    loads = [s for s in loop.body if isinstance(s, Load) and s.buffer == st.buffer]
    if len(loads) != 1 or (loads[0].row, loads[0].col) != (st.row, st.col):
        return None
    ld = loads[0]
    defs = {s.result: s for s in loop.body if hasattr(s, "result")}
    add = defs.get(st.value)
    if not isinstance(add, Add) or ld.result not in (add.lhs, add.rhs):
        return None
    delta = add.rhs if add.lhs == ld.result else add.lhs
    uses = _use_counts(loop.body)
    if delta == ld.result or uses.get(ld.result) != 1 or uses.get(add.result) != 1:
        return None
    return _CellReduction(ld, add, st, delta)


def _match_carried_reduction(loop: For):
    if not _flat(loop) or any(isinstance(s, Store) for s in loop.body):
        return None
    defs = {s.result: s for s in loop.body if hasattr(s, "result")}
    uses = _use_counts(loop.body)
    adds, deltas = [], []
    for (arg, _), y in zip(loop.iter_args, loop.yields):
        add = defs.get(y)
        if not isinstance(add, Add) or arg not in (add.lhs, add.rhs):
            return None
        delta = add.rhs if add.lhs == arg else add.lhs
        if delta == arg or uses.get(arg) != 1 or uses.get(y, 0) != 0:
            return None
        adds.append(add)
        deltas.append(delta)
    if len(set(loop.yields)) != len(loop.yields):
        return None
    return _CarriedReduction(tuple(adds), tuple(deltas))


def _parallel_ok(loop: For, outer: dict) -> bool:
    ranges = {**outer, loop.var: (loop.lower, loop.upper), **loop_ranges(loop.body)}
    required = list(outer) + [loop.var]
    for buf in stored_buffers(loop.body):
        cells = {(a.row, a.col) for a in accesses(loop.body, buf)}
        if len(cells) != 1:
            return False
        row, col = cells.pop()
        if not separates(row, col, required, ranges):
            return False
    return True


def _schedule(stmts, outer: dict, plan: dict) -> None:
    """Choose an execution mode for every loop, keyed by ``id(loop)``."""
    for s in stmts:
        if not isinstance(s, For):
            continue
        if s.trip_count == 0:
            plan[id(s)] = (SKIP, None)
            continue
        if s.iter_args:
            red = _match_carried_reduction(s)
            plan[id(s)] = (CARRIED_REDUCTION, red) if red else (SEQUENTIAL, None)
        elif _parallel_ok(s, outer):
            plan[id(s)] = (PARALLEL, None)
        else:
            red = _match_cell_reduction(s)
            plan[id(s)] = (CELL_REDUCTION, red) if red else (SEQUENTIAL, None)
        mode = plan[id(s)][0]
        inner = {**outer, s.var: (s.lower, s.upper)} if mode == PARALLEL else outer
        _schedule(s.body, inner, plan)


# -- vectorized engine ---------------------------------------------------------
#
# The vectorized engine compiles the IR once into a flat list of numpy kernels
# (the trace).  Loop bounds and subscripts are static, so every index array,
# bounds check and counter is computed at compile time; a run only replays the
# kernels over a fresh register file.  Arrays always carry one axis per loop
# nesting level (size 1 where unused), so operands broadcast without reshaping.


class _Sym:
    """Compile-time view of a runtime value: register slot and array shape.

    ``shape`` is None for scalars.  A deferred product has no slot until some
    consumer other than a reduction needs it.
    """

    __slots__ = ("slot", "shape", "product")

    def __init__(self, slot, shape, product=None):
        self.slot = slot
        self.shape = shape
        self.product = product


def _bcast(*shapes):
    arrays = [s for s in shapes if s is not None]
    return np.broadcast_shapes(*arrays) if arrays else None


def _depth(stmts) -> int:
    return max((1 + _depth(s.body) for s in stmts if isinstance(s, For)), default=0)


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
_BLAS_THRESHOLD = 1 << 15


def _check_bounds(idx, dim: int, buffer: str, axis: str) -> None:
    if isinstance(idx, np.ndarray):
        lo, hi = int(idx.min()), int(idx.max())
    else:
        lo = hi = idx
    if lo < 0 or hi >= dim:
        raise OutOfBoundsAccess(
            f"{axis} index range [{lo}, {hi}] outside buffer {buffer} of extent {dim}")


class _TraceCompiler:
    def __init__(self, ir: LoopIr, plan: dict):
        self.ir = ir
        self.plan = plan
        self.ndim_max = _depth(ir.body)
        self.trace: list = []
        self.template: list = []
        self.counts = {"loads": 0, "stores": 0, "muls": 0, "adds": 0}
        self.values: dict[str, _Sym] = {}
        self.live = {n for n, b in ir.buffers.items() if b.kind != "temp"}

    def compile(self):
        self.block(self.ir.body, 0, 1, {}, lazy=False)
        return self.trace, self.template, self.counts

    # helpers

    def slot(self, init=None) -> int:
        self.template.append(init)
        return len(self.template) - 1

    def axis_shape(self, axis: int, size: int) -> tuple:
        shape = [1] * self.ndim_max
        shape[axis] = size
        return tuple(shape)

    def index(self, expr, ivs):
        acc = expr.const
        for var, c in expr.terms:
            acc = acc + c * ivs[var]
        return acc

    def flat(self, s, ivs):
        name = s.buffer
        if name not in self.live:
            raise ExecutionError(f"buffer {name} used while not allocated")
        buf = self.ir.buffers[name]
        r = self.index(s.row, ivs)
        c = self.index(s.col, ivs)
        _check_bounds(r, buf.rows, name, "row")
        _check_bounds(c, buf.cols, name, "col")
        idx = r * buf.cols + c
        if isinstance(idx, np.ndarray):
            return idx, idx.shape
        return int(idx), None

    def get(self, name) -> _Sym:
        sym = self.values[name]
        if sym.product is not None and sym.slot is None:
            a, b = sym.product
            k = sym.slot = self.slot()

            def mul(regs, bufs, k=k, a=a.slot, b=b.slot):
                regs[k] = regs[a] * regs[b]
            self.trace.append(mul)
        return sym

    def emit_binary(self, result, lhs, rhs, add: bool):
        a, b = self.get(lhs), self.get(rhs)
        k = self.slot()
        if add:
            def f(regs, bufs, k=k, a=a.slot, b=b.slot):
                regs[k] = regs[a] + regs[b]
        else:
            def f(regs, bufs, k=k, a=a.slot, b=b.slot):
                regs[k] = regs[a] * regs[b]
        self.trace.append(f)
        self.values[result] = _Sym(k, _bcast(a.shape, b.shape))

    def emit_store(self, name, idx, ishape, value: _Sym, accumulate=False):
        v = value.slot
        if ishape is None:
            if value.shape is not None and math.prod(value.shape) != 1:
                raise ExecutionError(f"vector value stored to a single cell of {name}")
            scalar = value.shape is not None
        else:
            if _bcast(ishape, value.shape) != ishape:
                raise ExecutionError(f"store to {name}: value shape {value.shape} "
                                     f"does not fit index shape {ishape}")
            scalar = False
        if accumulate and scalar:
            def f(regs, bufs, b=name, i=idx, v=v):
                buf = bufs[b]
                buf[i] = buf[i] + regs[v].item()
        elif accumulate:
            def f(regs, bufs, b=name, i=idx, v=v):
                buf = bufs[b]
                buf[i] = buf[i] + regs[v]
        elif scalar:
            def f(regs, bufs, b=name, i=idx, v=v):
                bufs[b][i] = regs[v].item()
        else:
            def f(regs, bufs, b=name, i=idx, v=v):
                bufs[b][i] = regs[v]
        self.trace.append(f)

    def reduce(self, name, axis: int, trip: int) -> _Sym:
        sym = self.values[name]
        k = self.slot()
        if sym.product is not None and sym.slot is None:
            a, b = sym.product
            if a.shape[axis] != 1 or b.shape[axis] != 1:
                self.trace.append(self.contraction(k, a, b, axis, trip))
                out = list(_bcast(a.shape, b.shape))
                out[axis] = 1
                return _Sym(k, tuple(out))
            sym = self.get(name)
        full = list(sym.shape or (1,) * self.ndim_max)
        full[axis] = trip
        full = tuple(full)

        def f(regs, bufs, k=k, x=sym.slot, full=full, axis=axis):
            regs[k] = np.broadcast_to(regs[x], full).sum(axis=axis, keepdims=True)
        self.trace.append(f)
        out = list(full)
        out[axis] = 1
        return _Sym(k, tuple(out))

    def contraction(self, k, a: _Sym, b: _Sym, axis: int, trip: int):
        """Kernel for ``sum over axis of a*b`` without materializing ``a*b``."""
        def spec(shape):
            axes = [i for i in range(len(shape)) if shape[i] != 1]
            return "".join(_LETTERS[i] for i in axes), tuple(shape[i] for i in axes)

        sa, ra = spec(a.shape)
        sb, rb = spec(b.shape)
        out = list(_bcast(a.shape, b.shape))
        out[axis] = 1
        so = "".join(_LETTERS[i] for i in range(len(out)) if out[i] != 1)
        subscripts = f"{sa},{sb}->{so}"
        optimize = False
        if math.prod(out) * trip > _BLAS_THRESHOLD:
            optimize = np.einsum_path(subscripts, np.empty(ra, np.complex128),
                                      np.empty(rb, np.complex128), optimize="greedy")[0]
        out = tuple(out)

        def f(regs, bufs, k=k, a=a.slot, b=b.slot, s=subscripts, ra=ra, rb=rb, out=out,
              opt=optimize):
            regs[k] = np.einsum(s, regs[a].reshape(ra), regs[b].reshape(rb),
                                optimize=opt).reshape(out)
        return f

    # statements

    def block(self, stmts, ndim: int, mult: int, ivs: dict, lazy: bool):
        counts, values, trace = self.counts, self.values, self.trace
        for s in stmts:
            kind = type(s)
            if kind is Load:
                idx, shape = self.flat(s, ivs)
                k = self.slot()

                def f(regs, bufs, k=k, b=s.buffer, i=idx):
                    regs[k] = bufs[b][i]
                trace.append(f)
                values[s.result] = _Sym(k, shape)
                counts["loads"] += mult
            elif kind is Mul:
                a, b = values[s.lhs], values[s.rhs]
                counts["muls"] += mult
                if lazy and a.shape is not None and b.shape is not None:
                    a, b = self.get(s.lhs), self.get(s.rhs)
                    values[s.result] = _Sym(None, _bcast(a.shape, b.shape), (a, b))
                else:
                    self.emit_binary(s.result, s.lhs, s.rhs, add=False)
            elif kind is Add:
                counts["adds"] += mult
                self.emit_binary(s.result, s.lhs, s.rhs, add=True)
            elif kind is Store:
                idx, shape = self.flat(s, ivs)
                self.emit_store(s.buffer, idx, shape, self.get(s.value))
                counts["stores"] += mult
            elif kind is Const:
                values[s.result] = _Sym(self.slot(complex(s.value)), None)
            elif kind is MakeComplex:
                re, im = self.get(s.re), self.get(s.im)
                k = self.slot()
                shape = _bcast(re.shape, im.shape)
                if shape is None:
                    def f(regs, bufs, k=k, a=re.slot, b=im.slot):
                        regs[k] = complex(regs[a].real, regs[b].real)
                else:
                    def f(regs, bufs, k=k, a=re.slot, b=im.slot, shape=shape):
                        out = np.empty(shape, np.complex128)
                        out.real = np.real(regs[a])
                        out.imag = np.real(regs[b])
                        regs[k] = out
                trace.append(f)
                values[s.result] = _Sym(k, shape)
            elif kind is For:
                self.loop(s, ndim, mult, ivs)
            elif kind is Alloc:
                if s.buffer in self.live:
                    raise ExecutionError(f"buffer {s.buffer} allocated twice")
                self.live.add(s.buffer)
                size = self.ir.buffers[s.buffer].rows * self.ir.buffers[s.buffer].cols

                def f(regs, bufs, b=s.buffer, size=size):
                    bufs[b] = np.zeros(size, np.complex128)
                trace.append(f)
            elif kind is Dealloc:
                self.live.discard(s.buffer)

                def f(regs, bufs, b=s.buffer):
                    bufs.pop(b, None)
                trace.append(f)
            else:
                raise ExecutionError(f"unknown statement {s!r}")

    def loop(self, s: For, ndim, mult, ivs):
        mode, info = self.plan[id(s)]
        values = self.values
        if mode == SKIP:
            for (_, init), res in zip(s.iter_args, s.results):
                values[res] = self.get(init)
            return
        if mode == SEQUENTIAL:
            carried = [self.get(init) for _, init in s.iter_args]
            for x in range(s.lower, s.upper):
                for (arg, _), sym in zip(s.iter_args, carried):
                    values[arg] = sym
                self.block(s.body, ndim, mult, {**ivs, s.var: x}, lazy=False)
                carried = [self.get(y) for y in s.yields]
            for res, sym in zip(s.results, carried):
                values[res] = sym
            return

        trip = s.trip_count
        axis = np.arange(s.lower, s.upper).reshape(self.axis_shape(ndim, trip))
        inner_ivs = {**ivs, s.var: axis}
        inner = mult * trip
        if mode == PARALLEL:
            self.block(s.body, ndim + 1, inner, inner_ivs, lazy=False)
            return
        if mode == CELL_REDUCTION:
            skip = (info.load, info.add, info.store)
            self.block([t for t in s.body if t not in skip], ndim + 1, inner, inner_ivs,
                       lazy=True)
            total = self.reduce(info.delta, ndim, trip)
            idx, shape = self.flat(info.store, ivs)
            self.emit_store(info.store.buffer, idx, shape, total, accumulate=True)
            for key in ("loads", "adds", "stores"):
                self.counts[key] += inner
            return
        self.block([t for t in s.body if t not in info.adds], ndim + 1, inner, inner_ivs,
                   lazy=True)
        for (_, init), res, delta in zip(s.iter_args, s.results, info.deltas):
            total = self.reduce(delta, ndim, trip)
            start = self.get(init)
            k = self.slot()

            def f(regs, bufs, k=k, a=start.slot, b=total.slot):
                regs[k] = regs[a] + regs[b]
            self.trace.append(f)
            values[res] = _Sym(k, _bcast(start.shape, total.shape))
            self.counts["adds"] += inner


# -- scalar reference engine ---------------------------------------------------


class _ScalarMachine:
    def __init__(self, ir: LoopIr, buffers: dict, stats: ExecStats):
        self.ir = ir
        self.buffers = buffers
        self.stats = stats
        self.values: dict = {}

    def cell(self, s, env):
        try:
            buf = self.buffers[s.buffer]
        except KeyError:
            raise ExecutionError(f"buffer {s.buffer} used while not allocated") from None
        decl = self.ir.buffers[s.buffer]
        r = s.row.evaluate(env)
        c = s.col.evaluate(env)
        _check_bounds(r, decl.rows, s.buffer, "row")
        _check_bounds(c, decl.cols, s.buffer, "col")
        return buf, r * decl.cols + c

    def block(self, stmts, env):
        values, stats = self.values, self.stats
        for s in stmts:
            kind = type(s)
            if kind is Load:
                buf, i = self.cell(s, env)
                values[s.result] = complex(buf[i])
                stats.loads += 1
            elif kind is Store:
                buf, i = self.cell(s, env)
                buf[i] = values[s.value]
                stats.stores += 1
            elif kind is Mul:
                values[s.result] = values[s.lhs] * values[s.rhs]
                stats.muls += 1
            elif kind is Add:
                values[s.result] = values[s.lhs] + values[s.rhs]
                stats.adds += 1
            elif kind is Const:
                values[s.result] = complex(s.value)
            elif kind is MakeComplex:
                values[s.result] = complex(values[s.re].real, values[s.im].real)
            elif kind is For:
                carried = [values[init] for _, init in s.iter_args]
                for x in range(s.lower, s.upper):
                    for (arg, _), v in zip(s.iter_args, carried):
                        values[arg] = v
                    self.block(s.body, {**env, s.var: x})
                    carried = [values[y] for y in s.yields]
                for res, v in zip(s.results, carried):
                    values[res] = v
            elif kind is Alloc:
                if s.buffer in self.buffers:
                    raise ExecutionError(f"buffer {s.buffer} allocated twice")
                decl = self.ir.buffers[s.buffer]
                self.buffers[s.buffer] = np.zeros(decl.rows * decl.cols, np.complex128)
            elif kind is Dealloc:
                self.buffers.pop(s.buffer, None)
            else:
                raise ExecutionError(f"unknown statement {s!r}")


# -- public API -------------------------------------------------------------


class Executable:
    """A verified loop IR prepared for repeated execution.

    With ``vectorize=True`` preparation compiles the trace once; :meth:`run`
    then only binds inputs and replays it.  ``verify=False`` skips the static
    IR checks; out-of-range subscripts are still caught at run time.
    """

    def __init__(self, ir: LoopIr, vectorize: bool = True, *, verify: bool = True):
        diags = verify_loop_ir(ir) if verify else []
        if diags:
            raise VerificationError(diags)
        if ir.output is None:
            raise ExecutionError("IR has no output buffer")
        self.ir = ir
        self.vectorize = vectorize
        self.plan: dict = {}
        self._static = {name: b.init.reshape(-1) for name, b in ir.buffers.items()
                        if b.kind != "temp"}
        if vectorize:
            _schedule(ir.body, {}, self.plan)
            self._trace, self._template, self._counts = _TraceCompiler(ir, self.plan).compile()

    def bind_inputs(self, inputs) -> dict[str, np.ndarray]:
        expected = self.ir.inputs
        bound = {}
        for name, values in (inputs or {}).items():
            if name not in expected:
                raise InputMismatch(name, f"one of {sorted(expected)}", "unknown input name")
            try:
                arr = as_tensor(values)
            except (TypeError, ValueError) as exc:
                raise InputMismatch(name, expected[name], f"unusable value ({exc})") from None
            if arr.shape != expected[name]:
                raise InputMismatch(name, expected[name], arr.shape)
            arr = np.array(arr, dtype=np.complex128, order="C")
            arr.setflags(write=False)
            bound[name] = arr
        return bound

    def run(self, inputs=None) -> tuple[np.ndarray, ExecStats]:
        bound = self.bind_inputs(inputs)
        buffers = dict(self._static)
        for name, arr in bound.items():
            buffers[name] = arr.reshape(-1)
        stats = ExecStats()
        t0 = time.perf_counter()
        if self.vectorize:
            regs = list(self._template)
            for kernel in self._trace:
                kernel(regs, buffers)
            for key, value in self._counts.items():
                setattr(stats, key, value)
        else:
            _ScalarMachine(self.ir, buffers, stats).block(self.ir.body, {})
        stats.execution_s = time.perf_counter() - t0
        out = buffers.get(self.ir.output)
        if out is None:
            raise ExecutionError(f"output buffer {self.ir.output} was never allocated")
        buf = self.ir.buffers[self.ir.output]
        out = out.reshape(buf.rows, buf.cols)
        if buf.kind != "temp":
            out = np.array(out)
        return out, stats

    def loop_modes(self) -> list[tuple[str, str]]:
        """(loop variable, mode) pairs in program order; for inspection."""
        return [(s.var, self.plan.get(id(s), (SEQUENTIAL,))[0])
                for s in walk(self.ir.body) if isinstance(s, For)]


def interpret(ir: LoopIr, inputs=None, *, vectorize: bool = True):
    """Execute ``ir``; returns ``(output tensor, ExecStats)``."""
    return Executable(ir, vectorize=vectorize).run(inputs)
