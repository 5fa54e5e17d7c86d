from __future__ import annotations

import numpy as np
import pytest

from fftdsl import fft_ir as F
from fftdsl.driver import GenSpec, gen_cooley_tukey
from fftdsl.execution import interpret
from fftdsl.frontend import parse
from fftdsl.loop_ir import (
    Add,
    AffineExpr,
    Alloc,
    Buffer,
    Dealloc,
    For,
    Load,
    LoopIr,
    Mul,
    Store,
    count_nests,
    dump_loop_ir,
    verify_loop_ir,
    walk,
)
from fftdsl.lowering import lower_to_loops
from fftdsl.passes import (
    PASS_SETS,
    PassLevel,
    optimize,
    pass_licm,
    pass_loop_fusion,
    pass_scalar_replacement,
    run_pipeline,
)

X = AffineExpr.var
ZERO = AffineExpr()


def program(source):
    return F.infer_shapes(F.build_ir(parse(source)))


def lowered(source):
    return lower_to_loops(program(source))


def nest(vars_bounds, body):
    for var, hi in reversed(vars_bounds):
        body = (For(var, 0, hi, tuple(body)),)
    return body[0]


def elementwise_pair(consumer_row=None, consumer_bounds=(4, 1)):
    """A squares A into %t1; B doubles %t1 into %t2."""
    a = Buffer("A", 4, 1, "input", np.arange(1, 5).reshape(4, 1))
    t1, t2 = Buffer("%t1", 4, 1), Buffer("%t2", 4, 1)
    producer = nest([("i0", 4), ("i1", 1)], [
        Load("%v0", "A", X("i0"), X("i1")),
        Mul("%v1", "%v0", "%v0"),
        Store("%t1", X("i0"), X("i1"), "%v1"),
    ])
    row = consumer_row if consumer_row is not None else X("i2")
    consumer = nest([("i2", consumer_bounds[0]), ("i3", consumer_bounds[1])], [
        Load("%v2", "%t1", row, X("i3")),
        Add("%v3", "%v2", "%v2"),
        Store("%t2", X("i2"), X("i3"), "%v3"),
    ])
    body = (Alloc("%t1"), producer, Alloc("%t2"), consumer, Dealloc("%t1"))
    return LoopIr({"A": a, "%t1": t1, "%t2": t2}, body, "%t2")


class TestFusion:
    def test_elementwise_pair_fuses(self):
        ir = elementwise_pair()
        fused = pass_loop_fusion(ir)
        assert count_nests(ir) == 2 and count_nests(fused) == 1
        assert "%t1" not in fused.buffers
        assert verify_loop_ir(fused) == []
        before, _ = interpret(ir)
        after, _ = interpret(fused)
        np.testing.assert_array_equal(before, after)
        np.testing.assert_array_equal(after.ravel(), 2 * np.arange(1, 5) ** 2)

    def test_fused_counts_drop(self):
        ir = elementwise_pair()
        _, before = interpret(ir)
        _, after = interpret(pass_loop_fusion(ir))
        assert (after.loads, after.stores) == (before.loads - 4, before.stores - 4)

    def test_shifted_read_blocks_fusion(self):
        ir = elementwise_pair(consumer_row=X("i2") + 1, consumer_bounds=(3, 1))
        assert pass_loop_fusion(ir) == ir

    def test_mismatched_bounds_unchanged(self):
        ir = lowered("var x <4,1> = [1,2,3,4]; var y = DFT(4) · x; var z = I(2) ⊗ y;")
        assert pass_loop_fusion(ir).body == ir.body

    def test_matmul_chain_unchanged(self, dft4_source):
        ir = lowered(dft4_source)
        assert pass_loop_fusion(ir).body == ir.body

    def test_fusion_is_bitwise_neutral(self, dft4_source):
        ir = lowered(dft4_source)
        np.testing.assert_array_equal(interpret(ir)[0], interpret(pass_loop_fusion(ir))[0])


class TestLicm:
    def _loop_over_k(self, row, col):
        a = Buffer("A", 4, 4, "input", np.arange(16).reshape(4, 4))
        out = Buffer("%t", 4, 4)
        inner = For("k", 0, 4, (Load("%v0", "A", row, col), Mul("%v1", "%v0", "%v0"),
                                Store("%t", X("i"), X("j"), "%v1")))
        body = (Alloc("%t"), nest([("i", 4), ("j", 4)], [inner]))
        return LoopIr({"A": a, "%t": out}, body, "%t")

    def test_invariant_load_hoisted(self):
        ir = pass_licm(self._loop_over_k(X("i"), X("j")))
        k_loop = next(s for s in walk(ir.body) if isinstance(s, For) and s.var == "k")
        assert not any(isinstance(s, Load) for s in k_loop.body)
        assert not any(isinstance(s, Mul) for s in k_loop.body)

    def test_variant_load_kept(self):
        ir = pass_licm(self._loop_over_k(X("i"), X("k")))
        k_loop = next(s for s in walk(ir.body) if isinstance(s, For) and s.var == "k")
        assert any(isinstance(s, Load) for s in k_loop.body)

    def test_remaining_invariant_loads_read_written_buffers(self, dft4_source):
        # after LICM, a load left in a loop body either depends on the loop
        # variable or reads a buffer the loop itself writes
        ir = pass_licm(lowered(dft4_source))
        for s in walk(ir.body):
            if not isinstance(s, For):
                continue
            written = {t.buffer for t in walk(s.body) if isinstance(t, Store)}
            for t in s.body:
                if isinstance(t, Load):
                    assert s.var in t.row.vars | t.col.vars or t.buffer in written

    def test_reaches_fixpoint(self, dft4_source):
        once = pass_licm(lowered(dft4_source))
        assert pass_licm(once) == once

    def test_o2_output_matches_o0(self, dft4_source):
        p = program(dft4_source)
        o0 = interpret(run_pipeline(p, "O0").ir)[0]
        o2 = interpret(run_pipeline(p, "O2").ir)[0]
        np.testing.assert_allclose(o2, o0, atol=1e-12)


class TestScalarReplacement:
    SOURCE = "var x <4,1> = [1,2,3,4]; var y = DFT(4) · x;"

    def test_matmul_accumulator(self):
        ir = optimize(lowered(self.SOURCE), "O3")
        carried = [s for s in walk(ir.body) if isinstance(s, For) and s.iter_args]
        assert len(carried) == 1
        assert not any(isinstance(s, Store) for s in carried[0].body)

    def test_one_store_per_output_cell(self):
        _, o0 = interpret(lowered(self.SOURCE))
        _, o3 = interpret(optimize(lowered(self.SOURCE), "O3"))
        # O0: 4 zero-initializing stores + 4*4 accumulation stores
        assert o0.stores == 20
        assert o3.stores == 4

    def test_no_redundant_access_unchanged(self):
        ir = lowered("var k = DFT(2) ⊗ I(2);")
        assert pass_scalar_replacement(ir) == ir

    def test_store_forwarding_and_dead_store(self):
        a = Buffer("A", 1, 1, "input", [[3]])
        t = Buffer("%t", 1, 1)
        body = (Alloc("%t"), Load("%v0", "A", ZERO, ZERO),
                Store("%t", ZERO, ZERO, "%v0"),
                Load("%v1", "%t", ZERO, ZERO),
                Add("%v2", "%v1", "%v1"),
                Store("%t", ZERO, ZERO, "%v2"))
        ir = LoopIr({"A": a, "%t": t}, body, "%t")
        out = pass_scalar_replacement(ir)
        stores = [s for s in out.body if isinstance(s, Store)]
        assert len(stores) == 1
        assert not any(isinstance(s, Load) and s.buffer == "%t" for s in out.body)
        np.testing.assert_array_equal(interpret(out)[0], [[6]])

    def test_o3_output_matches_o0(self, dft4_source):
        p = program(dft4_source)
        o0 = interpret(run_pipeline(p, "O0").ir)[0]
        o3 = interpret(run_pipeline(p, "O3").ir)[0]
        np.testing.assert_allclose(o3, o0, atol=1e-12)

    def test_o3_golden(self, dft4_source, golden):
        assert dump_loop_ir(run_pipeline(program(dft4_source), "O3").ir) == \
            golden("dft4.O3.loop-ir.txt")


class TestPipeline:
    def test_o0_is_lower_only(self):
        assert PassLevel.O0.passes == ("lower",)

    def test_levels_monotone(self):
        assert set(PASS_SETS[PassLevel.O0]) <= set(PASS_SETS[PassLevel.O2]) \
            <= set(PASS_SETS[PassLevel.O3])

    def test_o3_minus_o2(self):
        assert set(PassLevel.O3.passes) - set(PassLevel.O2.passes) == {"scalar-replacement"}

    @pytest.mark.parametrize("text", ["O2", "o2", "2", PassLevel.O2])
    def test_parse(self, text):
        assert PassLevel.parse(text) is PassLevel.O2

    def test_parse_rejects(self):
        with pytest.raises(ValueError):
            PassLevel.parse("O1")

    def test_timings_recorded(self, dft4_source):
        result = run_pipeline(program(dft4_source), "O3")
        assert [name for name, _ in result.timings] == list(PassLevel.O3.passes)
        assert all(t >= 0 for _, t in result.timings)

    @pytest.mark.parametrize("n, radix", [(8, 2), (16, 4), (12, None), (18, (3, 2, 3)),
                                          (27, 3)])
    def test_levels_agree(self, n, radix):
        p = program(gen_cooley_tukey(GenSpec(n, radix)))
        outs = {lv: interpret(run_pipeline(p, lv).ir) for lv in PassLevel}
        ref = outs[PassLevel.O0][0]
        for lv, (out, stats) in outs.items():
            np.testing.assert_allclose(out, ref, atol=1e-12)
        o0, o3 = outs[PassLevel.O0][1], outs[PassLevel.O3][1]
        assert o3.loads + o3.stores < o0.loads + o0.stores
        assert (o3.muls, o3.adds) == (o0.muls, o0.adds)
