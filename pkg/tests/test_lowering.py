from __future__ import annotations

import numpy as np
import pytest

from fftdsl import fft_ir as F
from fftdsl.frontend import parse
from fftdsl.loop_ir import (
    AffineExpr,
    Alloc,
    Buffer,
    Const,
    Dealloc,
    For,
    Load,
    LoopIr,
    Store,
    count_nests,
    dump_loop_ir,
    separates,
    verify_loop_ir,
    walk,
)
from fftdsl.lowering import lower_to_loops

X = AffineExpr.var


def lower(source):
    return lower_to_loops(F.infer_shapes(F.build_ir(parse(source))))


def nest_bounds(loop):
    bounds = []
    while isinstance(loop, For):
        bounds.append(loop.trip_count)
        inner = [s for s in loop.body if isinstance(s, For)]
        loop = inner[0] if inner else None
    return bounds


class TestAffineExpr:
    def test_add_and_scale(self):
        e = X("i", 2) + X("j") + 3
        assert str(e) == "2*i + j + 3"
        assert e.scale(2).evaluate({"i": 1, "j": 1}) == 12

    def test_bounds(self):
        e = X("i", 4) + X("j") + (-1)
        assert e.bounds({"i": (0, 3), "j": (0, 4)}) == (-1, 10)

    def test_zero_terms_dropped(self):
        assert (X("i") + X("i", -1)).terms == ()


class TestSeparates:
    def test_mixed_radix_injective(self):
        assert separates(X("i", 2) + X("u"), X("j"), ["i", "u"], {"i": (0, 2), "u": (0, 2)})

    def test_overlapping_coefficients(self):
        assert not separates(X("i") + X("u"), AffineExpr(), ["i", "u"],
                             {"i": (0, 2), "u": (0, 2)})

    def test_missing_variable(self):
        assert not separates(X("i"), AffineExpr(), ["i", "k"], {"i": (0, 4), "k": (0, 4)})


class TestLowering:
    def test_matmul_nest(self):
        ir = lower("var x <4,1> = [1,2,3,4]; var y = DFT(4) · x;")
        (loop,) = [s for s in ir.body if isinstance(s, For)]
        assert nest_bounds(loop) == [4, 1, 4]
        allocs = [s for s in ir.body if isinstance(s, Alloc)]
        assert len(allocs) == 1 and ir.buffers[allocs[0].buffer].shape == (4, 1)

    def test_identity_folds_to_constant(self):
        ir = lower("var i = I(2);")
        assert ir.body == ()
        np.testing.assert_array_equal(ir.buffers[ir.output].init, np.eye(2))
        assert ir.buffers[ir.output].kind == "const"

    def test_dft4_nest_count(self, dft4_source):
        # 1 createComplex + 2 kronecker + 4 matmul (the program has four `·`)
        ir = lower(dft4_source)
        assert count_nests(ir) == 7
        kinds = [ir.buffers[s.buffer].origin for s in ir.body if isinstance(s, Alloc)]
        assert kinds.count("kroneckerproduct") == 2
        assert kinds.count("matmul") == 4
        assert kinds.count("createCT") == 1
        consts = sorted(b.origin for b in ir.buffers.values() if b.kind == "const")
        assert consts == ["Permute(4, 2)", "dft(2)", "dft(2)", "identity(2)", "identity(2)",
                          "twiddle(4, 2)"]

    def test_literals_become_inputs(self, dft4_source):
        ir = lower(dft4_source)
        assert ir.inputs == {"InputReal": (4, 1), "InputImg": (4, 1)}

    def test_kron_subscripts(self):
        ir = lower("var k = DFT(2) ⊗ I(3);")
        store = next(s for s in walk(ir.body) if isinstance(s, Store))
        assert str(store.row).startswith("3*") and str(store.col).startswith("3*")

    def test_temps_freed_except_output(self, dft4_source):
        ir = lower(dft4_source)
        temps = {n for n, b in ir.buffers.items() if b.kind == "temp"}
        freed = {s.buffer for s in ir.body if isinstance(s, Dealloc)}
        assert freed == temps - {ir.output}

    def test_lowered_ir_verifies(self, dft4_source):
        assert verify_loop_ir(lower(dft4_source)) == []

    def test_golden(self, dft4_source, golden):
        assert dump_loop_ir(lower(dft4_source)) == golden("dft4.O0.loop-ir.txt")


class TestDumpLoopIr:
    def test_empty(self):
        assert dump_loop_ir(LoopIr()) == ""

    def test_init_loop(self):
        ir = LoopIr({"%t0": Buffer("%t0", 2, 1)},
                    (Alloc("%t0"), Const("%v0", 0j),
                     For("i0", 0, 2, (Store("%t0", X("i0"), AffineExpr(), "%v0"),))),
                    "%t0")
        text = dump_loop_ir(ir)
        assert "for i0 = 0 to 2 {\n  store %v0, %t0[i0, 0]\n}" in text


class TestVerifyLoopIr:
    def _ir(self, body, kind="temp"):
        return LoopIr({"A": Buffer("A", 2, 2, kind, np.zeros((2, 2)) if kind != "temp" else None),
                       "%t": Buffer("%t", 2, 2)}, body, "%t")

    def test_out_of_bounds(self):
        body = (Alloc("%t"), For("i0", 0, 3, (Load("%v0", "A", X("i0"), AffineExpr()),
                                              Store("%t", X("i0", 0), AffineExpr(), "%v0"))))
        diags = verify_loop_ir(self._ir(body, "input"))
        assert any("outside" in d for d in diags)

    def test_store_to_input(self):
        body = (Const("%v0", 0j), Store("A", AffineExpr(), AffineExpr(), "%v0"))
        assert verify_loop_ir(self._ir(body, "input"))

    def test_undefined_value(self):
        body = (Alloc("%t"), Store("%t", AffineExpr(), AffineExpr(), "%v9"))
        assert verify_loop_ir(self._ir(body))

    def test_unbound_subscript_variable(self):
        body = (Alloc("%t"), Const("%v0", 0j), Store("%t", X("k"), AffineExpr(), "%v0"))
        assert verify_loop_ir(self._ir(body))

    @pytest.mark.parametrize("order", ["ok", "before-alloc"])
    def test_temp_lifetime(self, order):
        store = Store("%t", AffineExpr(), AffineExpr(), "%v0")
        body = ((Alloc("%t"), Const("%v0", 0j), store) if order == "ok"
                else (Const("%v0", 0j), store, Alloc("%t")))
        assert bool(verify_loop_ir(self._ir(body))) == (order != "ok")
