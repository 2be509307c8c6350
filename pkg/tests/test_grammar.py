import pytest

from hbgparse.grammar import (GrammarError, RuleTemplate, expand_templates, format_grammar,
                              mnemonic_of, parse_grammar, syn_type)
from helpers import FIXTURES, fixture_grammar

NP_TEMPLATE = """
#syn
NP DET N
#sem
x
#features
num = s p n
#rules
np : NP{num=$n}[NP,x] -> DET N{num=$n} ; h1=2 h2=1
det : DET[DET,x] -> the
ns : N{num=s}[N,x] -> dog
np2 : N{num=p}[N,x] -> dogs
nn : N{num=n}[N,x] -> sheep
"""


def test_anbn_grammar_shape():
    g = fixture_grammar("anbn")
    assert len(g.productions) == 4
    assert sorted(g.nonterminals) == ["A", "B", "S"]
    assert g.terminals == {"a", "b"}
    assert g.start == "S"


def test_default_heads():
    g = fixture_grammar("anbn")
    asb = next(p for p in g.productions if p.rule_id == "s_asb")
    assert (asb.h1, asb.h2) == (0, None)
    lex = next(p for p in g.productions if p.rule_id == "a")
    assert lex.lexical and lex.h1 == 0


def test_empty_grammar_rejected():
    with pytest.raises(GrammarError, match="at least one production"):
        parse_grammar("#syn\nS\n#sem\nx\n#rules\n")


def test_template_expands_to_three_productions_sharing_rule_id():
    g = parse_grammar(NP_TEMPLATE)
    nps = [p for p in g.productions if p.rule_id == "np"]
    assert len(nps) == 3
    assert {p.lhs.label for p in nps} == {"NP{num=s}", "NP{num=p}", "NP{num=n}"}
    # the shared variable ties lhs and rhs
    for p in nps:
        assert p.lhs.label.split("{")[1] == p.rhs[1].split("{")[1]


def test_expand_zero_variables_is_identity():
    t = RuleTemplate("r", "S", None, ("a", "b"), 0, None)
    assert expand_templates([t], {}) == [(t, "S", ("a", "b"))]


def test_expand_two_independent_variables():
    t = RuleTemplate("r", "X{f=$a,g=$b}", None, ("w",), 0, None)
    out = expand_templates([t], {"f": ("1", "2"), "g": ("u", "v", "w")})
    assert len(out) == 6
    assert len({lhs for _, lhs, _ in out}) == 6


def test_expand_unbounded_variable():
    t = RuleTemplate("r", "X{f=$a}", None, ("w",), 0, None)
    with pytest.raises(GrammarError, match="unbounded"):
        expand_templates([t], {})


def test_expansion_idempotent_on_ground_productions():
    g = parse_grammar(NP_TEMPLATE)
    again = parse_grammar(format_grammar(g))
    assert again.productions == g.productions


@pytest.mark.parametrize("name", ["anbn", "pp", "with_a_list"])
def test_round_trip(name):
    g = fixture_grammar(name)
    assert parse_grammar(format_grammar(g)) == g


def test_identity_mnemonics():
    g = fixture_grammar("anbn")
    for label, nt in g.nonterminals.items():
        assert mnemonic_of(nt, g).representative.label == label


def test_mnemonic_block_and_representative():
    g = parse_grammar(NP_TEMPLATE + "#mnemonics\nNP* : NP{num=s} NP{num=p} NP{num=n}\n")
    ids = {mnemonic_of(lab, g).id for lab in ("NP{num=s}", "NP{num=p}", "NP{num=n}")}
    assert ids == {"NP*"}
    # all members are equally specified: the smallest label represents the class
    assert g.mnemonics["NP*"].representative.label == "NP{num=n}"


def test_mnemonic_pattern_picks_least_specified():
    text = """
#syn
VB
#sem
x
#features
pos = v
vtype = be have
tense = past pres
#rules
r1 : VB{pos=v,vtype=be,tense=past}[VB,x] -> was
r2 : VB{pos=v,vtype=be}[VB,x] -> be
r3 : VB{pos=v,vtype=have,tense=past}[VB,x] -> had
#mnemonics
VB0PASTSG* : VB{pos=v,vtype=be}
"""
    g = parse_grammar(text)
    m = g.mnemonics["VB0PASTSG*"]
    assert m.members == {"VB{pos=v,tense=past,vtype=be}", "VB{pos=v,vtype=be}"}
    assert m.representative.label == "VB{pos=v,vtype=be}"
    assert mnemonic_of("VB{pos=v,tense=past,vtype=have}", g).id == "VB{pos=v,tense=past,vtype=have}"


def test_partition_property():
    g = parse_grammar(NP_TEMPLATE + "#mnemonics\nNP* : NP{num=s} NP{num=p}\n")
    members = [lab for m in g.mnemonics.values() for lab in m.members]
    assert len(members) == len(set(members)) == len(g.nonterminals)
    for m in g.mnemonics.values():
        assert m.representative.label in m.members


def test_unknown_nonterminal():
    with pytest.raises(KeyError):
        mnemonic_of("Q", fixture_grammar("anbn"))


@pytest.mark.parametrize("text, message", [
    ("#syn\nS\n#sem\nx\n#rules\nr : S[T,x] -> a\n", "undeclared syn"),
    ("#syn\nS\n#sem\nx\n#rules\nr : S[S,y] -> a\n", "undeclared sem"),
    ("#syn\nS\n#sem\nx\n#rules\nr : S[S,x] -> a ; h1=2\n", "invalid head index"),
    ("#syn\nS\n#sem\nx\n#rules\nr : S[S,x] a\n", "syntax error"),
    ("#syn\nS T\n#sem\nx\n#rules\nr : S[S,x] -> a\nq : S[T,x] -> b\n", "conflicting categories"),
    ("#syn\nS\n#sem\nx\n#terminals\na\n#rules\nr : S[S,x] -> a c\n", "undeclared symbol"),
    ("#bogus\n", "unknown section"),
])
def test_errors(text, message):
    with pytest.raises(GrammarError, match=message):
        parse_grammar(text)


def test_error_reports_line():
    with pytest.raises(GrammarError) as info:
        parse_grammar("#syn\nS\n#sem\nx\n#rules\nr : S[S,x] a\n")
    assert info.value.line == 6


def test_syntactic_types():
    g = fixture_grammar("with_a_list")
    assert syn_type(g, "N") == "NP"
    assert g.nonterminals["N1"].category.syn_type == "NP"
    assert g.nonterminals["NBAR4"].category.syn_type == "NP"


def test_grammar_file_is_readable_from_disk():
    assert (FIXTURES / "anbn.grammar").exists()


def test_unit_cycle_detection():
    g = parse_grammar("#syn\nS X\n#sem\nx\n#rules\nr1 : S[S,x] -> X\nr2 : X[X,x] -> S\nr3 : X -> a\n")
    assert g.has_unit_cycles
    assert not fixture_grammar("pp").has_unit_cycles
