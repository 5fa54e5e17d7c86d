"""Loop-nest optimization passes and the O0/O2/O3 pipeline.

    O0  lower
    O2  lower, loop-fusion, licm
    O3  lower, loop-fusion, licm, scalar-replacement

Every pass is a pure ``LoopIr -> LoopIr`` function and the result is
re-verified after each pass.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

from . import fft_ir as F
from .errors import VerificationError
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
    NameGen,
    Store,
    accesses,
    defines,
    loaded_buffers,
    operands,
    separates,
    stored_buffers,
    substitute,
    verify_loop_ir,
)
from .lowering import lower_to_loops


class PassLevel(enum.Enum):
    O0 = "O0"
    O2 = "O2"
    O3 = "O3"

    @property
    def passes(self) -> tuple[str, ...]:
        return PASS_SETS[self]

    @classmethod
    def parse(cls, text: "str | PassLevel") -> "PassLevel":
        if isinstance(text, PassLevel):
            return text
        try:
            return cls(text.upper() if text[:1] in "oO" else f"O{text}")
        except ValueError:
            raise ValueError(f"unknown optimization level {text!r}; use O0, O2 or O3") from None


PASS_SETS = {
    PassLevel.O0: ("lower",),
    PassLevel.O2: ("lower", "loop-fusion", "licm"),
    PassLevel.O3: ("lower", "loop-fusion", "licm", "scalar-replacement"),
}


# -- loop fusion -----------------------------------------------------------


def _perfect_nest(loop: For):
    """(loop vars, bounds, innermost body) of a perfect nest, else None."""
    vars_, bounds = [], []
    while True:
        if loop.iter_args:
            return None
        vars_.append(loop.var)
        bounds.append((loop.lower, loop.upper))
        if len(loop.body) == 1 and isinstance(loop.body[0], For):
            loop = loop.body[0]
            continue
        if any(isinstance(s, For) for s in loop.body):
            return None
        return vars_, bounds, loop.body


def _rebuild_nest(vars_, bounds, body) -> For:
    for var, (lo, hi) in reversed(list(zip(vars_, bounds))):
        body = (For(var, lo, hi, tuple(body)),)
    return body[0]


def _try_fuse(producer: For, consumer: For, ir: LoopIr, later) -> tuple[For, str | None] | None:
    p = _perfect_nest(producer)
    c = _perfect_nest(consumer)
    if p is None or c is None:
        return None
    p_vars, p_bounds, p_body = p
    c_vars, c_bounds, c_body = c
    if p_bounds != c_bounds:
        return None
    p_stores = [s for s in p_body if isinstance(s, Store)]
    if len(p_stores) != 1:
        return None
    store = p_stores[0]
    inter = store.buffer
    ranges = dict(zip(p_vars, p_bounds))
    if any(hi <= lo for lo, hi in p_bounds):
        return None
    if not separates(store.row, store.col, p_vars, ranges):
        return None
    rename = dict(zip(c_vars, p_vars))
    c_body = tuple(_rename_vars(s, rename) for s in c_body)
    c_loads = [s for s in c_body if isinstance(s, Load) and s.buffer == inter]
    if not c_loads:
        return None
    if any((s.row, s.col) != (store.row, store.col) for s in c_loads):
        return None
    c_writes = stored_buffers(c_body)
    if inter in c_writes or c_writes & (loaded_buffers(p_body) | {inter}):
        return None
    forward = {s.result: store.value for s in c_loads}
    fused_c = substitute(tuple(s for s in c_body if s not in c_loads), forward)
    dead = (ir.buffers[inter].kind == "temp" and inter != ir.output
            and inter not in loaded_buffers(later))
    fused_p = tuple(s for s in p_body if not (dead and s is store))
    fused = _rebuild_nest(p_vars, p_bounds, fused_p + fused_c)
    return fused, (inter if dead else None)


def _rename_vars(s, mapping):
    if isinstance(s, Load):
        return Load(s.result, s.buffer, s.row.rename(mapping), s.col.rename(mapping))
    if isinstance(s, Store):
        return Store(s.buffer, s.row.rename(mapping), s.col.rename(mapping), s.value)
    return s


def pass_loop_fusion(ir: LoopIr) -> LoopIr:
    """Merge adjacent producer/consumer perfect nests with identical bounds.

    The producer must write each cell of the intermediate buffer exactly once
    and the consumer must read it only at the very cell the producer wrote in
    the same iteration.  Alloc/dealloc markers between the two nests are moved
    out of the way.  A temp buffer that is no longer read afterwards is
    removed.
    """
    body = list(ir.body)
    buffers = dict(ir.buffers)
    changed = True
    while changed:
        changed = False
        for i, s in enumerate(body):
            if not isinstance(s, For):
                continue
            j = i + 1
            while j < len(body) and isinstance(body[j], (Alloc, Dealloc)):
                j += 1
            if j >= len(body) or not isinstance(body[j], For):
                continue
            between = body[i + 1:j]
            consumer = body[j]
            freed = {m.buffer for m in between if isinstance(m, Dealloc)}
            touched = {a.buffer for a in accesses((consumer,))}
            if freed & touched:
                continue
            result = _try_fuse(s, consumer, LoopIr(buffers, tuple(body), ir.output),
                               body[j + 1:])
            if result is None:
                continue
            fused, dead = result
            allocs = [m for m in between if isinstance(m, Alloc)]
            deallocs = [m for m in between if isinstance(m, Dealloc)]
            new_body = body[:i] + allocs + [fused] + deallocs + body[j + 1:]
            if dead is not None:
                new_body = [m for m in new_body
                            if not (isinstance(m, (Alloc, Dealloc)) and m.buffer == dead)]
                buffers.pop(dead, None)
            body = new_body
            changed = True
            break
    return LoopIr(buffers, tuple(body), ir.output)


# -- loop-invariant code motion ------------------------------------------------


def _hoist(loop: For) -> tuple[list, For]:
    """Split ``loop``'s top-level body into hoistable statements and the rest."""
    if loop.trip_count < 1:
        return [], loop
    written = stored_buffers(loop.body)
    inside = {a for a, _ in loop.iter_args}
    for s in loop.body:
        inside.update(defines(s))
    hoisted, kept = [], []
    for s in loop.body:
        ok = False
        if isinstance(s, Const):
            ok = True
        elif isinstance(s, (Add, Mul, MakeComplex)):
            ok = not (set(operands(s)) & inside)
        elif isinstance(s, Load):
            ok = (loop.var not in s.row.vars and loop.var not in s.col.vars
                  and s.buffer not in written)
        if ok:
            hoisted.append(s)
            inside.difference_update(defines(s))
        else:
            kept.append(s)
    if not hoisted:
        return [], loop
    return hoisted, replace(loop, body=tuple(kept))


def _licm_block(stmts) -> tuple[tuple, bool]:
    out, changed = [], False
    for s in stmts:
        if isinstance(s, For):
            body, inner_changed = _licm_block(s.body)
            s = replace(s, body=body)
            hoisted, s = _hoist(s)
            out.extend(hoisted)
            changed = changed or inner_changed or bool(hoisted)
        out.append(s)
    return tuple(out), changed


def pass_licm(ir: LoopIr) -> LoopIr:
    """Hoist loads and pure value ops that do not depend on a loop's variable
    out of that loop, one level per sweep, until nothing moves."""
    body, changed = _licm_block(ir.body)
    while changed:
        body, changed = _licm_block(body)
    return ir.with_body(body)


# -- scalar replacement ------------------------------------------------------


def _accumulate(loop: For, names: NameGen):
    """Turn a load/update/store of one invariant cell into a loop-carried value.

    Returns ``(before, new_loop, after)`` or None when the pattern is absent.
    """
    if loop.trip_count < 1:
        return None
    for st in loop.body:
        if not isinstance(st, Store):
            continue
        if loop.var in st.row.vars or loop.var in st.col.vars:
            continue
        buf, cell = st.buffer, (st.row, st.col)
        touching = list(accesses(loop.body, buf))
        loads = [a for a in touching if isinstance(a, Load)]
        if len(touching) != 2 or len(loads) != 1:
            continue
        ld = loads[0]
        if (ld.row, ld.col) != cell or ld not in loop.body:
            continue
        if loop.body.index(ld) > loop.body.index(st):
            continue
        init, acc, res = names.value(), names.value(), names.value()
        body = tuple(s for s in loop.body if s is not ld and s is not st)
        body = substitute(body, {ld.result: acc})
        carried = acc if st.value == ld.result else st.value
        yields = tuple(loop.yields) + (carried,)
        yields = tuple(acc if y == ld.result else y for y in yields)
        new_loop = For(loop.var, loop.lower, loop.upper, body,
                       loop.iter_args + ((acc, init),), yields, loop.results + (res,))
        return [Load(init, buf, *cell)], new_loop, [Store(buf, cell[0], cell[1], res)]
    return None


def _forward_and_dse(stmts) -> tuple[tuple, dict]:
    """Store-to-load forwarding and dead-store elimination in one block."""
    known: dict[tuple, str] = {}
    mapping: dict[str, str] = {}
    out = []
    for s in stmts:
        if isinstance(s, Store):
            known = {k: v for k, v in known.items() if k[0] != s.buffer}
            known[(s.buffer, s.row, s.col)] = mapping.get(s.value, s.value)
        elif isinstance(s, Load) and (s.buffer, s.row, s.col) in known:
            mapping[s.result] = known[(s.buffer, s.row, s.col)]
            continue
        elif isinstance(s, For):
            clobbered = stored_buffers(s.body)
            known = {k: v for k, v in known.items() if k[0] not in clobbered}
        elif isinstance(s, Dealloc):
            known = {k: v for k, v in known.items() if k[0] != s.buffer}
        out.append(s)
    out = list(substitute(out, mapping))

    # a store is dead if the same cell is stored again before any read of the buffer
    dead = set()
    for i, s in enumerate(out):
        if not isinstance(s, Store):
            continue
        for t in out[i + 1:]:
            if isinstance(t, Store) and (t.buffer, t.row, t.col) == (s.buffer, s.row, s.col):
                dead.add(i)
                break
            if isinstance(t, Load) and t.buffer == s.buffer:
                break
            if isinstance(t, For) and any(True for _ in accesses(t.body, s.buffer)):
                break
            if isinstance(t, (Store, Dealloc)) and t.buffer == s.buffer:
                break
    return tuple(s for i, s in enumerate(out) if i not in dead), mapping


def _scalar_replace_block(stmts, names: NameGen) -> tuple[tuple, dict]:
    out = []
    for s in stmts:
        if isinstance(s, For):
            body, inner_map = _scalar_replace_block(s.body, names)
            yields = tuple(inner_map.get(y, y) for y in s.yields)
            s = replace(s, body=body, yields=yields)
            pre, post = [], []
            while (rewritten := _accumulate(s, names)) is not None:
                before, s, after = rewritten
                pre.extend(before)
                post = after + post
            out.extend(pre)
            out.append(s)
            out.extend(post)
        else:
            out.append(s)
    return _forward_and_dse(out)


def pass_scalar_replacement(ir: LoopIr) -> LoopIr:
    """Forward stored values to later loads of the same cell, drop overwritten
    stores, and keep loop-invariant accumulation cells in a loop-carried scalar
    with a single store after the loop."""
    body, _ = _scalar_replace_block(ir.body, NameGen(ir))
    return ir.with_body(body)


# -- pipeline ----------------------------------------------------------------


PASSES = {
    "loop-fusion": pass_loop_fusion,
    "licm": pass_licm,
    "scalar-replacement": pass_scalar_replacement,
}


@dataclass
class PipelineResult:
    ir: LoopIr
    level: PassLevel
    timings: list[tuple[str, float]] = field(default_factory=list)

    @property
    def passes(self) -> list[str]:
        return [name for name, _ in self.timings]


def _checked(ir: LoopIr, after: str) -> LoopIr:
    diags = verify_loop_ir(ir)
    if diags:
        raise VerificationError([f"after {after}: {d}" for d in diags])
    return ir


def run_pipeline(program: F.FftProgram, level="O3") -> PipelineResult:
    level = PassLevel.parse(level)
    timings = []
    t0 = time.perf_counter()
    ir = _checked(lower_to_loops(program), "lower")
    timings.append(("lower", time.perf_counter() - t0))
    for name in level.passes[1:]:
        t0 = time.perf_counter()
        ir = _checked(PASSES[name](ir), name)
        timings.append((name, time.perf_counter() - t0))
    return PipelineResult(ir, level, timings)


def optimize(ir: LoopIr, level="O3") -> LoopIr:
    """Apply the passes of ``level`` to an already lowered IR."""
    for name in PassLevel.parse(level).passes[1:]:
        ir = _checked(PASSES[name](ir), name)
    return ir

