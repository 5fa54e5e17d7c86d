"""Lexer, recursive-descent parser and AST dumper for the FFT DSL.

A program is a sequence of ``var`` declarations::

    var InputReal <4, 1> = [[1], [2], [3], [4]];
    var InputImg  <4, 1> = [[1], [2], [3], [4]];
    var InputComplex = createComplex(InputReal, InputImg);
    var result = (DFT(2) ⊗ I(2)) · twiddle(4,2) ·
                 (I(2) ⊗ DFT(2)) · Permute(4,2) · InputComplex;

Grammar (``⊗`` and ``·`` bind tightest and associate to the right)::

    program   -> decl* EOF
    decl      -> 'var' IDENT shape? '=' expr ';'
    shape     -> '<' NUMBER ',' NUMBER '>'
    expr      -> mul (('+' | '-') mul)*
    mul       -> fft (('*' | '/') fft)*
    fft       -> primary (('⊗' | '·') fft)?
    primary   -> IDENT | NUMBER | '(' expr ')' | literal | BUILTIN '(' args ')'
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Union

from .errors import DSLSyntaxError, UndeclaredShapeMismatch, UnknownCharacter

KRON = "⊗"
DOT = "·"

BUILTINS = ("DFT", "I", "twiddle", "Permute", "createComplex")
KEYWORDS = ("var",)
PUNCT = "()[]<>,;="

# ASCII spellings accepted for the two structured-matrix operators.
OP_ALIASES = {"kron": KRON, ".": DOT, "⋅": DOT, KRON: KRON, DOT: DOT}


class Position(NamedTuple):
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class Token:
    kind: str  # identifier | number | keyword | punct | op | builtin | eof
    lexeme: str
    position: Position

    @property
    def op(self) -> str:
        """Canonical operator symbol for ``op`` tokens."""
        return OP_ALIASES.get(self.lexeme, self.lexeme)

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        return f"{self.kind} {self.lexeme!r}"


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[⊗·⋅.+\-*/])
  | (?P<punct>[()\[\]<>,;=])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[Token]:
    """Split ``source`` into tokens, ending with a single ``eof`` token."""
    tokens: list[Token] = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        where = Position(line, pos - line_start + 1)
        if m is None:
            raise UnknownCharacter(where, source[pos])
        kind = m.lastgroup
        text = m.group()
        if kind == "word":
            if text in KEYWORDS:
                kind = "keyword"
            elif text in BUILTINS:
                kind = "builtin"
            elif text == "kron":
                kind = "op"
            else:
                kind = "identifier"
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, where))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", Position(line, pos - line_start + 1)))
    return tokens


# -- AST ------------------------------------------------------------------------
#
# Source positions are carried for diagnostics but excluded from equality, so
# two parses compare structurally.


@dataclass(frozen=True)
class Number:
    value: Union[int, float]
    position: Position | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TensorLiteral:
    rows: tuple[tuple[float, ...], ...]
    position: Position | None = field(default=None, compare=False, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.rows), len(self.rows[0]) if self.rows else 0)


@dataclass(frozen=True)
class VariableRef:
    name: str
    position: Position | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    position: Position | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinaryOp:
    op: str
    lhs: object
    rhs: object
    position: Position | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class VarDecl:
    name: str
    shape: tuple[int, int] | None
    init: object
    position: Position | None = field(default=None, compare=False, repr=False)


Expr = Union[Number, TensorLiteral, VariableRef, Call, BinaryOp]


class Parser:
    def __init__(self, tokens: list[Token]):
        if not tokens or tokens[-1].kind != "eof":
            tokens = list(tokens) + [Token("eof", "", Position(0, 0))]
        self.tokens = tokens
        self.cursor = 0

    # -- token helpers

    def peek(self) -> Token:
        return self.tokens[self.cursor]

    def advance(self) -> Token:
        tok = self.tokens[self.cursor]
        if tok.kind != "eof":
            self.cursor += 1
        return tok

    def at(self, kind: str, lexeme: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (lexeme is None or tok.lexeme == lexeme)

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.op in ops

    def expect(self, kind: str, lexeme: str | None = None) -> Token:
        if not self.at(kind, lexeme):
            wanted = repr(lexeme) if lexeme is not None else kind
            tok = self.peek()
            raise DSLSyntaxError(tok.position, wanted, tok.describe())
        return self.advance()

    def error(self, expected: str) -> DSLSyntaxError:
        tok = self.peek()
        return DSLSyntaxError(tok.position, expected, tok.describe())

    # -- grammar

    def parse_program(self) -> list[VarDecl]:
        decls = []
        while not self.at("eof"):
            decls.append(self.parse_decl())
        return decls

    def parse_decl(self) -> VarDecl:
        start = self.expect("keyword", "var").position
        name = self.expect("identifier").lexeme
        shape = None
        if self.at("punct", "<"):
            self.advance()
            rows = self.parse_dim()
            self.expect("punct", ",")
            cols = self.parse_dim()
            self.expect("punct", ">")
            shape = (rows, cols)
        self.expect("punct", "=")
        init = self.parse_expr()
        self.expect("punct", ";")
        if shape is not None and isinstance(init, TensorLiteral) and init.shape != shape:
            if len(init.rows) == 1 and shape == (init.shape[1], 1):
                # a flat literal may fill a declared column vector
                init = TensorLiteral(tuple((v,) for v in init.rows[0]), init.position)
            else:
                raise UndeclaredShapeMismatch(name, shape, init.shape)
        return VarDecl(name, shape, init, start)

    def parse_dim(self) -> int:
        tok = self.peek()
        if tok.kind != "number" or not tok.lexeme.isdigit() or int(tok.lexeme) < 1:
            raise self.error("positive integer dimension")
        self.advance()
        return int(tok.lexeme)

    def parse_expr(self) -> Expr:
        lhs = self.parse_mul()
        while self.at_op("+", "-"):
            tok = self.advance()
            lhs = BinaryOp(tok.op, lhs, self.parse_mul(), tok.position)
        return lhs

    def parse_mul(self) -> Expr:
        lhs = self.parse_fft()
        while self.at_op("*", "/"):
            tok = self.advance()
            lhs = BinaryOp(tok.op, lhs, self.parse_fft(), tok.position)
        return lhs

    def parse_fft(self) -> Expr:
        lhs = self.parse_primary()
        if self.at_op(KRON, DOT):
            tok = self.advance()
            return BinaryOp(tok.op, lhs, self.parse_fft(), tok.position)
        return lhs

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "identifier":
            self.advance()
            return VariableRef(tok.lexeme, tok.position)
        if tok.kind == "number":
            self.advance()
            return Number(_number(tok.lexeme), tok.position)
        if tok.kind == "builtin":
            self.advance()
            self.expect("punct", "(")
            args = []
            if not self.at("punct", ")"):
                args.append(self.parse_expr())
                while self.at("punct", ","):
                    self.advance()
                    args.append(self.parse_expr())
            self.expect("punct", ")")
            return Call(tok.lexeme, tuple(args), tok.position)
        if tok.kind == "punct" and tok.lexeme == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect("punct", ")")
            return inner
        if tok.kind == "punct" and tok.lexeme == "[":
            return self.parse_literal()
        raise self.error("expression")

    def parse_literal(self) -> TensorLiteral:
        start = self.peek().position
        nested = self.parse_list()
        if all(isinstance(x, float) for x in nested):
            rows = (tuple(nested),)  # a flat list is a single row
        elif all(isinstance(x, tuple) for x in nested):
            rows = tuple(nested)
            if any(not all(isinstance(v, float) for v in r) for r in rows):
                raise DSLSyntaxError(start, "rank-2 tensor literal", "deeper nesting")
        else:
            raise DSLSyntaxError(start, "uniformly nested tensor literal", "mixed nesting")
        if not rows or not rows[0]:
            raise DSLSyntaxError(start, "non-empty tensor literal", "[]")
        if len({len(r) for r in rows}) != 1:
            raise DSLSyntaxError(start, "rectangular tensor literal", "ragged rows")
        return TensorLiteral(rows, start)

    def parse_list(self) -> tuple:
        self.expect("punct", "[")
        items = []
        if not self.at("punct", "]"):
            items.append(self.parse_element())
            while self.at("punct", ","):
                self.advance()
                items.append(self.parse_element())
        self.expect("punct", "]")
        return tuple(items)

    def parse_element(self):
        if self.at("punct", "["):
            return self.parse_list()
        sign = 1.0
        if self.at_op("-", "+"):
            sign = -1.0 if self.advance().lexeme == "-" else 1.0
        tok = self.expect("number")
        return sign * float(tok.lexeme)


def _number(lexeme: str) -> Union[int, float]:
    return int(lexeme) if lexeme.isdigit() else float(lexeme)


def parse_program(tokens: list[Token]) -> list[VarDecl]:
    return Parser(tokens).parse_program()


def parse(source: str) -> list[VarDecl]:
    """Tokenize and parse DSL source text."""
    return parse_program(tokenize(source))


def parse_expression(source: str) -> Expr:
    """Parse a single expression (no trailing ``;``)."""
    parser = Parser(tokenize(source))
    expr = parser.parse_expr()
    parser.expect("eof")
    return expr


# -- AST dump ---------------------------------------------------------------------
#
# One node per line, two-space indentation per level.  Leaves (numbers,
# literals, variable references) are written inline after their parent's "=".


def _fmt_number(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def _fmt_literal(lit: TensorLiteral) -> str:
    r, c = lit.shape
    body = ", ".join("[" + ", ".join(_fmt_number(v) for v in row) + "]" for row in lit.rows)
    return f"Literal<{r}x{c}>[{body}]"


def _leaf(node) -> str | None:
    if isinstance(node, Number):
        return f"Number {node.value!r}"
    if isinstance(node, TensorLiteral):
        return _fmt_literal(node)
    if isinstance(node, VariableRef):
        return f"Var {node.name}"
    return None


def _dump_expr(node, depth: int, out: list[str]) -> None:
    pad = "  " * depth
    leaf = _leaf(node)
    if leaf is not None:
        out.append(pad + leaf)
    elif isinstance(node, Call):
        out.append(f"{pad}Call {node.name}")
        for arg in node.args:
            _dump_expr(arg, depth + 1, out)
    elif isinstance(node, BinaryOp):
        out.append(f"{pad}BinaryOp {node.op}")
        _dump_expr(node.lhs, depth + 1, out)
        _dump_expr(node.rhs, depth + 1, out)
    else:
        raise TypeError(f"not an AST expression: {node!r}")


def dump_ast(nodes: list[VarDecl]) -> str:
    out: list[str] = []
    for decl in nodes:
        head = f"VarDecl {decl.name}"
        if decl.shape is not None:
            head += f" <{decl.shape[0]}x{decl.shape[1]}>"
        leaf = _leaf(decl.init)
        if leaf is not None:
            out.append(f"{head} = {leaf}")
        else:
            out.append(f"{head} =")
            _dump_expr(decl.init, 1, out)
    return "\n".join(out) + ("\n" if out else "")


_DECL_RE = re.compile(r"VarDecl (\w+)(?: <(\d+)x(\d+)>)? =(?: (.*))?$")
_LIT_RE = re.compile(r"Literal<(\d+)x(\d+)>\[(.*)\]$")


def _read_leaf(text: str):
    if text.startswith("Number "):
        return Number(_number(text[7:]) if text[7:].isdigit() else float(text[7:]))
    if text.startswith("Var "):
        return VariableRef(text[4:])
    m = _LIT_RE.match(text)
    if m:
        rows = tuple(
            tuple(float(v) for v in row.split(","))
            for row in re.findall(r"\[([^\[\]]*)\]", m.group(3))
        )
        return TensorLiteral(rows)
    raise ValueError(f"unrecognized AST dump leaf: {text!r}")


def load_ast(text: str) -> list[VarDecl]:
    """Rebuild an AST from :func:`dump_ast` output."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    pos = 0

    def node(depth: int):
        nonlocal pos
        line = lines[pos]
        indent = (len(line) - len(line.lstrip(" "))) // 2
        if indent != depth:
            raise ValueError(f"bad indentation in AST dump line {pos + 1}")
        body = line.strip()
        pos += 1
        if body.startswith("Call "):
            args = []
            while pos < len(lines) and _depth(lines[pos]) > depth:
                args.append(node(depth + 1))
            return Call(body[5:], tuple(args))
        if body.startswith("BinaryOp "):
            lhs = node(depth + 1)
            rhs = node(depth + 1)
            return BinaryOp(body[9:], lhs, rhs)
        return _read_leaf(body)

    decls = []
    while pos < len(lines):
        m = _DECL_RE.match(lines[pos])
        if not m:
            raise ValueError(f"expected VarDecl in AST dump line {pos + 1}")
        pos += 1
        shape = (int(m.group(2)), int(m.group(3))) if m.group(2) else None
        init = _read_leaf(m.group(4)) if m.group(4) else node(1)
        decls.append(VarDecl(m.group(1), shape, init))
    return decls


def _depth(line: str) -> int:
    return (len(line) - len(line.lstrip(" "))) // 2
