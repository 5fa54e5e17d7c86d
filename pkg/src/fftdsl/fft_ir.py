"""Typed single-assignment IR over the FFT operator algebra.

Each DSL construct maps to exactly one op::

    createComplex(A, B)  -> fft.createCT
    A · B                -> fft.matmul
    A ⊗ B                -> fft.kroneckerproduct
    twiddle(n, m)        -> fft.twiddle
    I(n)                 -> fft.identity
    DFT(n)               -> fft.dft
    Permute(n, k)        -> fft.Permute

Tensor literals become ``fft.constant`` ops.  Op ids are positions in the op
list, so operands always refer to earlier ops.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import frontend as ast
from . import generators as gen
from .errors import (
    InvalidCall,
    NonConstantGeneratorArg,
    ShapeMismatch,
    UndefinedVariable,
    UnsupportedOperation,
    VerificationError,
)

CONSTANT = "constant"
CREATE_COMPLEX = "createCT"
MATMUL = "matmul"
KRONECKER = "kroneckerproduct"
DFT = "dft"
IDENTITY = "identity"
TWIDDLE = "twiddle"
PERMUTE = "Permute"

GENERATORS = (DFT, IDENTITY, TWIDDLE, PERMUTE)
# number of integer attributes per generator
_GEN_ARITY = {DFT: 1, IDENTITY: 1, TWIDDLE: 2, PERMUTE: 2}
_BUILTIN_TO_OP = {"DFT": DFT, "I": IDENTITY, "twiddle": TWIDDLE, "Permute": PERMUTE}


@dataclass(frozen=True)
class TensorShape:
    rows: int
    cols: int
    kind: str = "complex"  # "real" | "complex"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"tensor dimensions must be positive, got {self.rows}x{self.cols}")
        if self.kind not in ("real", "complex"):
            raise ValueError(f"unknown element kind {self.kind!r}")

    def __str__(self):
        return f"{self.rows}x{self.cols}x{self.kind}"

    @property
    def dims(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True)
class FftOp:
    id: int
    kind: str
    operands: tuple[int, ...] = ()
    attrs: tuple[int, ...] = ()
    value: tuple[tuple[float, ...], ...] | None = None  # constants only
    label: str | None = None  # DSL variable a constant is bound to
    shape: TensorShape | None = None


@dataclass(frozen=True)
class FftProgram:
    ops: tuple[FftOp, ...]
    names: dict = field(default_factory=dict)  # DSL variable -> op id
    output: int | None = None

    @property
    def inputs(self) -> dict[str, int]:
        """Literal-initialized variables; these can be overridden at run time."""
        return {op.label: op.id for op in self.ops if op.kind == CONSTANT and op.label}

    def op(self, op_id: int) -> FftOp:
        return self.ops[op_id]


class _Builder:
    def __init__(self):
        self.ops: list[FftOp] = []
        self.names: dict[str, int] = {}

    def emit(self, kind, operands=(), attrs=(), value=None, label=None) -> int:
        op_id = len(self.ops)
        self.ops.append(FftOp(op_id, kind, tuple(operands), tuple(attrs), value, label))
        return op_id

    def expr(self, node, label=None) -> int:
        if isinstance(node, ast.VariableRef):
            if node.name not in self.names:
                raise UndefinedVariable(node.name)
            return self.names[node.name]
        if isinstance(node, ast.TensorLiteral):
            return self.emit(CONSTANT, value=node.rows, label=label)
        if isinstance(node, ast.Number):
            return self.emit(CONSTANT, value=((float(node.value),),), label=label)
        if isinstance(node, ast.BinaryOp):
            if node.op == ast.DOT:
                kind = MATMUL
            elif node.op == ast.KRON:
                kind = KRONECKER
            else:
                raise UnsupportedOperation(
                    f"operator {node.op!r} has no FFT-algebra counterpart")
            lhs = self.expr(node.lhs)
            rhs = self.expr(node.rhs)
            return self.emit(kind, (lhs, rhs))
        if isinstance(node, ast.Call):
            if node.name == "createComplex":
                if len(node.args) != 2:
                    raise InvalidCall(f"createComplex takes 2 arguments, got {len(node.args)}")
                re = self.expr(node.args[0])
                im = self.expr(node.args[1])
                return self.emit(CREATE_COMPLEX, (re, im))
            kind = _BUILTIN_TO_OP.get(node.name)
            if kind is None:
                raise InvalidCall(f"unknown builtin {node.name!r}")
            if len(node.args) != _GEN_ARITY[kind]:
                raise InvalidCall(
                    f"{node.name} takes {_GEN_ARITY[kind]} argument(s), got {len(node.args)}")
            attrs = []
            for arg in node.args:
                if not isinstance(arg, ast.Number) or not isinstance(arg.value, int):
                    raise NonConstantGeneratorArg(
                        node.name, "arguments must be integer literals")
                attrs.append(arg.value)
            return self.emit(kind, attrs=attrs)
        raise TypeError(f"not an AST expression: {node!r}")


def build_ir(decls: list[ast.VarDecl]) -> FftProgram:
    b = _Builder()
    output = None
    for decl in decls:
        output = b.expr(decl.init, label=decl.name)
        b.names[decl.name] = output
    return FftProgram(tuple(b.ops), dict(b.names), output)


# -- verification ------------------------------------------------------------


def verify(program: FftProgram) -> list[str]:
    """Structural checks; returns diagnostics (empty list means ok)."""
    diags = []
    for pos, op in enumerate(program.ops):
        where = f"%{op.id}"
        if op.id != pos:
            diags.append(f"{where}: op id does not match its position {pos}")
        for operand in op.operands:
            if not 0 <= operand < pos:
                diags.append(f"{where}: operand %{operand} is not defined before use")
        if op.kind == CONSTANT:
            if not op.value or not op.value[0]:
                diags.append(f"{where}: empty constant")
            elif len({len(r) for r in op.value}) != 1:
                diags.append(f"{where}: constant is not rectangular")
        elif op.kind in GENERATORS:
            if len(op.attrs) != _GEN_ARITY[op.kind]:
                diags.append(f"{where}: fft.{op.kind} expects {_GEN_ARITY[op.kind]} attribute(s)")
                continue
            if any(a < 1 for a in op.attrs):
                diags.append(f"{where}: sizes must be positive, got {op.attrs}")
                continue
            if op.kind in (TWIDDLE, PERMUTE):
                n, d = op.attrs
                if n % d:
                    diags.append(f"{where}: {d} does not divide {n}")
        elif op.kind in (MATMUL, KRONECKER, CREATE_COMPLEX):
            if len(op.operands) != 2:
                diags.append(f"{where}: fft.{op.kind} expects 2 operands")
        else:
            diags.append(f"{where}: unknown op kind {op.kind!r}")
    n = len(program.ops)
    if program.output is None:
        if n:
            diags.append("program has no output")
    elif not 0 <= program.output < n:
        diags.append(f"output %{program.output} is not a defined op")
    for name, op_id in program.names.items():
        if not 0 <= op_id < n:
            diags.append(f"variable {name!r} refers to undefined op %{op_id}")
    return diags


def check(program: FftProgram) -> FftProgram:
    diags = verify(program)
    if diags:
        raise VerificationError(diags)
    return program


# -- shape inference -------------------------------------------------------


def _op_shape(op: FftOp, shapes: dict[int, TensorShape]) -> TensorShape:
    if op.kind == CONSTANT:
        return TensorShape(len(op.value), len(op.value[0]), "real")
    if op.kind in GENERATORS:
        n = op.attrs[0]
        return TensorShape(n, n, "complex")
    a, b = (shapes[i] for i in op.operands)
    if op.kind == CREATE_COMPLEX:
        if a.kind != "real":
            raise ShapeMismatch(op.id, TensorShape(*a.dims, "real"), a, "real part")
        if b.kind != "real":
            raise ShapeMismatch(op.id, TensorShape(*b.dims, "real"), b, "imaginary part")
        if a.dims != b.dims:
            raise ShapeMismatch(op.id, a, b, "createComplex operands differ")
        return TensorShape(a.rows, a.cols, "complex")
    if op.kind == MATMUL:
        if a.cols != b.rows:
            raise ShapeMismatch(op.id, f"{a.cols}xN", f"{b.rows}x{b.cols}",
                                "matmul inner dimensions")
        return TensorShape(a.rows, b.cols, "complex")
    if op.kind == KRONECKER:
        return TensorShape(a.rows * b.rows, a.cols * b.cols, "complex")
    raise ValueError(f"no shape rule for {op.kind!r}")


def infer_shapes(program: FftProgram) -> FftProgram:
    check(program)
    shapes: dict[int, TensorShape] = {}
    ops = []
    for op in program.ops:
        shapes[op.id] = _op_shape(op, shapes)
        ops.append(replace(op, shape=shapes[op.id]))
    return replace(program, ops=tuple(ops))


# -- textual form ----------------------------------------------------------


def _fmt_value(rows) -> str:
    def num(v):
        return str(int(v)) if float(v).is_integer() else repr(float(v))
    return "[" + ", ".join("[" + ", ".join(num(v) for v in r) + "]" for r in rows) + "]"


def format_op(op: FftOp) -> str:
    name = f"fft.{op.kind}"
    if op.kind == CONSTANT:
        label = f" @{op.label}" if op.label else ""
        text = f"%{op.id} = {name}{label} {_fmt_value(op.value)}"
    elif op.kind in GENERATORS:
        text = f"%{op.id} = {name}({', '.join(str(a) for a in op.attrs)})"
    else:
        text = f"%{op.id} = {name} " + ", ".join(f"%{i}" for i in op.operands)
    if op.shape is not None:
        text += f" : {op.shape}"
    return text


def dump_ir(program: FftProgram) -> str:
    if not program.ops:
        return ""
    lines = [format_op(op) for op in program.ops]
    if program.output is not None:
        lines.append(f"fft.return %{program.output}")
    return "\n".join(lines) + "\n"


# -- reference evaluation ---------------------------------------------------


def evaluate_op(op: FftOp, operands: list[np.ndarray]) -> np.ndarray:
    """Dense value of one op, given its operand values."""
    if op.kind == CONSTANT:
        return gen.as_tensor(np.array(op.value, dtype=float))
    if op.kind == DFT:
        return gen.dft_matrix(*op.attrs)
    if op.kind == IDENTITY:
        return gen.identity_matrix(*op.attrs)
    if op.kind == TWIDDLE:
        return gen.twiddle_matrix(*op.attrs)
    if op.kind == PERMUTE:
        return gen.stride_permutation_matrix(*op.attrs)
    a, b = operands
    if op.kind == CREATE_COMPLEX:
        return gen.create_complex(a, b)
    if op.kind == MATMUL:
        return gen.matmul(a, b)
    if op.kind == KRONECKER:
        return gen.kronecker(a, b)
    raise ValueError(f"cannot evaluate {op.kind!r}")


def evaluate(program: FftProgram, inputs: dict | None = None) -> dict[int, np.ndarray]:
    """Evaluate every op with the generator algebra; returns values by op id."""
    check(program)
    overrides = {}
    for name, values in (inputs or {}).items():
        if name not in program.inputs:
            raise KeyError(f"{name!r} is not a literal-initialized variable")
        overrides[program.inputs[name]] = gen.as_tensor(values)
    values: dict[int, np.ndarray] = {}
    for op in program.ops:
        if op.id in overrides:
            values[op.id] = overrides[op.id]
        else:
            values[op.id] = evaluate_op(op, [values[i] for i in op.operands])
    return values
