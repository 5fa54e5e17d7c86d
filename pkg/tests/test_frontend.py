from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fftdsl.errors import DSLSyntaxError, UndeclaredShapeMismatch, UnknownCharacter
from fftdsl.frontend import (
    DOT,
    KRON,
    BinaryOp,
    Call,
    Number,
    TensorLiteral,
    VarDecl,
    VariableRef,
    dump_ast,
    load_ast,
    parse,
    parse_expression,
    tokenize,
)


def kinds(source):
    return [(t.kind, t.lexeme) for t in tokenize(source)]


class TestTokenize:
    def test_builtin_call(self):
        toks = tokenize("DFT(2)")
        assert [t.kind for t in toks] == ["builtin", "punct", "number", "punct", "eof"]
        assert [t.lexeme for t in toks[:-1]] == ["DFT", "(", "2", ")"]

    def test_kron_operator(self):
        toks = tokenize("A ⊗ B")
        assert [(t.kind, t.op if t.kind == "op" else t.lexeme) for t in toks[:-1]] == [
            ("identifier", "A"), ("op", KRON), ("identifier", "B")]

    def test_empty_source(self):
        toks = tokenize("")
        assert len(toks) == 1 and toks[0].kind == "eof"

    @pytest.mark.parametrize("alias, canonical", [("kron", KRON), (".", DOT), ("⋅", DOT),
                                                 ("·", DOT)])
    def test_ascii_aliases(self, alias, canonical):
        op = tokenize(f"A {alias} B")[1]
        assert op.kind == "op" and op.op == canonical

    def test_lexemes_are_source_substrings(self, dft4_source):
        for t in tokenize(dft4_source)[:-1]:
            assert t.lexeme and t.lexeme in dft4_source

    def test_lexemes_reproduce_source_without_whitespace(self, dft4_source):
        joined = "".join(t.lexeme for t in tokenize(dft4_source))
        assert joined == "".join(dft4_source.split())

    def test_comments_are_skipped(self):
        assert kinds("# header\nA # trailing\n") == [("identifier", "A"), ("eof", "")]

    def test_unknown_character_position(self):
        with pytest.raises(UnknownCharacter) as exc:
            tokenize("var x = $;")
        assert exc.value.position.line == 1 and exc.value.position.column == 9

    def test_positions_track_lines(self):
        toks = tokenize("A\n  B")
        assert (toks[1].position.line, toks[1].position.column) == (2, 3)


class TestParse:
    def test_dft4_program_shape(self, dft4_source):
        decls = parse(dft4_source)
        assert [d.name for d in decls] == ["InputReal", "InputImg", "InputComplex", "result"]
        node, depth = decls[-1].init, 0
        while isinstance(node, BinaryOp) and node.op == DOT:
            depth += 1
            node = node.rhs
        assert depth == 4
        assert node == VariableRef("InputComplex")

    def test_dft4_documented_ast(self, dft4_source):
        def call(name, *args):
            return Call(name, tuple(Number(a) for a in args))

        expected = BinaryOp(DOT, BinaryOp(KRON, call("DFT", 2), call("I", 2)),
                   BinaryOp(DOT, call("twiddle", 4, 2),
                   BinaryOp(DOT, BinaryOp(KRON, call("I", 2), call("DFT", 2)),
                   BinaryOp(DOT, call("Permute", 4, 2), VariableRef("InputComplex")))))
        assert parse(dft4_source)[-1].init == expected

    def test_single_declaration(self):
        (decl,) = parse("var x <2,1> = [[1],[2]];")
        assert decl == VarDecl("x", (2, 1), TensorLiteral(((1.0,), (2.0,))))

    def test_right_associative_chain(self):
        a, b, c = (VariableRef(n) for n in "ABC")
        assert parse_expression("A · B · C") == BinaryOp(DOT, a, BinaryOp(DOT, b, c))

    def test_mixed_operators_share_precedence(self):
        a, b, c = (VariableRef(n) for n in "ABC")
        assert parse_expression("A ⊗ B · C") == BinaryOp(KRON, a, BinaryOp(DOT, b, c))

    def test_parentheses_override(self):
        a, b, c = (VariableRef(n) for n in "ABC")
        assert parse_expression("(A · B) · C") == BinaryOp(DOT, BinaryOp(DOT, a, b), c)

    def test_arithmetic_binds_looser_than_fft_operators(self):
        a, b, c = (VariableRef(n) for n in "ABC")
        assert parse_expression("A + B · C") == BinaryOp("+", a, BinaryOp(DOT, b, c))
        assert parse_expression("A * B - C") == BinaryOp("-", BinaryOp("*", a, b), c)

    def test_shape_mismatch_with_literal(self):
        with pytest.raises(UndeclaredShapeMismatch):
            parse("var x <3,1> = [[1],[2]];")

    @pytest.mark.parametrize("source", [
        "var x = ;",
        "var x = DFT(2)",
        "var = DFT(2);",
        "var x = [[1, 2], [3]];",
        "var x = (A · B;",
        "x = A;",
    ])
    def test_syntax_errors(self, source):
        with pytest.raises(DSLSyntaxError):
            parse(source)

    def test_syntax_error_reports_position(self):
        with pytest.raises(DSLSyntaxError) as exc:
            parse("var x = DFT(2)\nvar y = I(2);")
        assert exc.value.position.line == 2

    def test_flat_literal_is_one_row(self):
        (decl,) = parse("var r = [1, 2, 3];")
        assert decl.init.shape == (1, 3)


class TestDump:
    def test_single_literal(self):
        assert dump_ast([VarDecl("x", None, TensorLiteral(((1.0,),)))]) == \
            "VarDecl x = Literal<1x1>[[1]]\n"

    def test_empty_program(self):
        assert dump_ast([]) == ""

    def test_dft4_golden(self, dft4_source, golden):
        assert dump_ast(parse(dft4_source)) == golden("dft4.ast.txt")

    def test_round_trip(self, dft4_source):
        decls = parse(dft4_source)
        assert load_ast(dump_ast(decls)) == decls


# -- property: right-associativity over random expressions ------------------

_names = st.sampled_from(["A", "B", "x1", "InputComplex", "DFT(2)", "I(4)", "twiddle(8, 2)",
                          "Permute(4, 2)"])
_ops = st.sampled_from(["·", "⊗", ".", "kron"])


@st.composite
def chains(draw):
    atoms = draw(st.lists(_names, min_size=3, max_size=6))
    ops = [draw(_ops) for _ in atoms[1:]]
    return atoms, ops


def _join(atoms, ops):
    out = atoms[0]
    for op, a in zip(ops, atoms[1:]):
        out += f" {op} {a}"
    return out


def _right_nested(atoms, ops):
    if len(atoms) == 1:
        return atoms[0]
    return f"{atoms[0]} {ops[0]} ({_right_nested(atoms[1:], ops[1:])})"


@settings(max_examples=300, deadline=None)
@given(chains())
def test_chains_parse_right_nested(chain):
    atoms, ops = chain
    assert parse_expression(_join(atoms, ops)) == parse_expression(_right_nested(atoms, ops))


@settings(max_examples=200, deadline=None)
@given(chains())
def test_dump_load_round_trip(chain):
    atoms, ops = chain
    decls = parse(f"var r = {_join(atoms, ops)};")
    assert load_ast(dump_ast(decls)) == decls


def test_flat_literal_fills_declared_column():
    (decl,) = parse("var x <3,1> = [1, 2, 3];")
    assert decl.init.shape == (3, 1)
