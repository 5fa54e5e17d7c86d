"""Exception hierarchy shared by every compiler stage."""

from __future__ import annotations


class FFTDSLError(Exception):
    """Base class for all errors raised by the compiler and runtime."""


# -- frontend -----------------------------------------------------------------


class FrontendError(FFTDSLError):
    pass


class UnknownCharacter(FrontendError):
    def __init__(self, position, char: str):
        self.position = position
        self.char = char
        super().__init__(f"{position}: unknown character {char!r}")


class DSLSyntaxError(FrontendError):
    def __init__(self, position, expected: str, found: str):
        self.position = position
        self.expected = expected
        self.found = found
        super().__init__(f"{position}: expected {expected}, found {found}")


class UndeclaredShapeMismatch(FrontendError):
    def __init__(self, name: str, declared, literal):
        self.name = name
        self.declared = declared
        self.literal = literal
        super().__init__(
            f"variable {name!r} declared <{declared[0]}, {declared[1]}> "
            f"but its literal is {literal[0]}x{literal[1]}"
        )


# -- FFT IR ------------------------------------------------------------------


class IRError(FFTDSLError):
    pass


class UndefinedVariable(IRError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"undefined variable {name!r}")


class NonConstantGeneratorArg(IRError):
    def __init__(self, builtin: str, detail: str):
        self.builtin = builtin
        super().__init__(f"{builtin}: {detail}")


class InvalidCall(IRError):
    pass


class UnsupportedOperation(IRError):
    pass


class ShapeMismatch(IRError):
    def __init__(self, op_id, expected, found, detail: str = ""):
        self.op_id = op_id
        self.expected = expected
        self.found = found
        where = f"%{op_id}: " if op_id is not None else ""
        msg = f"{where}shape mismatch, expected {expected}, found {found}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DivisibilityError(IRError):
    def __init__(self, n: int, d: int):
        self.n = n
        self.d = d
        super().__init__(f"{d} does not divide {n}")


class VerificationError(IRError):
    """Raised when a verifier reports diagnostics on an IR that must be valid."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class UnloweredOp(IRError):
    pass


# -- execution ---------------------------------------------------------------


class ExecutionError(FFTDSLError):
    pass


class InputMismatch(ExecutionError):
    def __init__(self, name: str, expected, found):
        self.name = name
        self.expected = expected
        self.found = found
        super().__init__(f"input {name!r}: expected {expected}, found {found}")


class OutOfBoundsAccess(ExecutionError):
    pass


class VersionMismatch(ExecutionError):
    def __init__(self, expected: int, found: int):
        self.expected = expected
        self.found = found
        super().__init__(f"plan format version {found}, runtime supports {expected}")


class CorruptStream(ExecutionError):
    def __init__(self, offset: int, detail: str = ""):
        self.offset = offset
        msg = f"corrupt plan stream at byte {offset}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


# -- driver ------------------------------------------------------------------


class BadFactorization(FFTDSLError):
    pass
