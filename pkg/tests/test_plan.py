from __future__ import annotations

import struct

import numpy as np
import pytest

from fftdsl import fft_ir as F
from fftdsl.driver import GenSpec, gen_cooley_tukey
from fftdsl.errors import CorruptStream, InputMismatch, VersionMismatch
from fftdsl.execution import interpret
from fftdsl.frontend import parse
from fftdsl.passes import run_pipeline
from fftdsl.plan import (
    FORMAT_VERSION,
    MAGIC,
    deserialize_plan,
    is_plan,
    load_plan,
    run_plan,
    save_plan,
    serialize_plan,
)

DFT4_OUTPUT = np.array([[10 + 10j], [-4 + 0j], [-2 - 2j], [0 - 4j]])


def compiled(source, level="O3"):
    return run_pipeline(F.infer_shapes(F.build_ir(parse(source))), level).ir


@pytest.fixture(scope="module")
def dft4_ir(dft4_source):
    return compiled(dft4_source)


def test_round_trip_structure(dft4_ir):
    plan = deserialize_plan(serialize_plan(dft4_ir, {"opt": "O3"}))
    assert plan.version == FORMAT_VERSION
    assert plan.ir == dft4_ir
    assert plan.meta == {"opt": "O3"}
    assert plan.inputs == dft4_ir.inputs


def test_serialization_is_deterministic(dft4_ir):
    assert serialize_plan(dft4_ir) == serialize_plan(deserialize_plan(serialize_plan(dft4_ir)).ir)


def test_header_layout(dft4_ir):
    data = serialize_plan(dft4_ir)
    assert data.startswith(MAGIC) and is_plan(data)
    assert struct.unpack_from("<I", data, len(MAGIC))[0] == FORMAT_VERSION


def test_run_plan_output(dft4_ir):
    out, _ = run_plan(deserialize_plan(serialize_plan(dft4_ir)))
    np.testing.assert_allclose(out, DFT4_OUTPUT, atol=1e-12)


@pytest.mark.parametrize("level", ["O0", "O2", "O3"])
def test_run_plan_matches_interpret_bitwise(level):
    ir = compiled(gen_cooley_tukey(GenSpec(16)), level)
    rng = np.random.default_rng(7)
    inputs = {"InputReal": rng.uniform(-1, 1, (16, 1)), "InputImg": rng.uniform(-1, 1, (16, 1))}
    a, sa = interpret(ir, inputs)
    b, sb = run_plan(deserialize_plan(serialize_plan(ir)), inputs)
    assert a.tobytes() == b.tobytes()
    assert (sa.loads, sa.stores, sa.muls, sa.adds) == (sb.loads, sb.stores, sb.muls, sb.adds)


def test_repeated_runs_identical(dft4_ir):
    plan = deserialize_plan(serialize_plan(dft4_ir))
    first = run_plan(plan)[0].tobytes()
    from fftdsl.execution import Executable
    exe = Executable(plan.ir)
    assert all(exe.run()[0].tobytes() == first for _ in range(1000))


def test_every_truncation_is_detected(dft4_ir):
    data = serialize_plan(dft4_ir)
    for cut in range(len(data)):
        with pytest.raises(CorruptStream):
            deserialize_plan(data[:cut])


def test_truncation_offset_is_within_stream(dft4_ir):
    data = serialize_plan(dft4_ir)
    with pytest.raises(CorruptStream) as exc:
        deserialize_plan(data[: len(data) // 2])
    assert 0 <= exc.value.offset <= len(data) // 2


def test_trailing_bytes(dft4_ir):
    with pytest.raises(CorruptStream):
        deserialize_plan(serialize_plan(dft4_ir) + b"\0")


def test_bad_magic(dft4_ir):
    data = bytearray(serialize_plan(dft4_ir))
    data[0] ^= 0xFF
    with pytest.raises(CorruptStream) as exc:
        deserialize_plan(bytes(data))
    assert exc.value.offset == 0


def test_version_mismatch(dft4_ir):
    data = bytearray(serialize_plan(dft4_ir))
    struct.pack_into("<I", data, len(MAGIC), FORMAT_VERSION + 1)
    with pytest.raises(VersionMismatch):
        deserialize_plan(bytes(data))


def test_unknown_opcode(dft4_ir):
    empty = dft4_ir.with_body(())
    data = bytearray(serialize_plan(empty))
    # statements section of an empty body is a single u32 count of zero
    buffers_len = struct.unpack_from("<I", data, 12)[0]
    stmt_at = 12 + 4 + buffers_len
    patched = data[:stmt_at] + struct.pack("<I", 5) + struct.pack("<I", 1) + b"\x63" \
        + data[stmt_at + 8:]
    with pytest.raises(CorruptStream, match="opcode"):
        deserialize_plan(bytes(patched))


def test_wrong_input_name(dft4_ir):
    plan = deserialize_plan(serialize_plan(dft4_ir))
    with pytest.raises(InputMismatch):
        run_plan(plan, {"Nope": [[1]]})


def test_save_and_load(tmp_path, dft4_ir):
    path = tmp_path / "dft4.plan"
    save_plan(path, dft4_ir, {"k": 1})
    plan = load_plan(path)
    assert plan.ir == dft4_ir and plan.meta == {"k": 1}
