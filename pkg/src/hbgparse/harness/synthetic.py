"""Synthetic PP-attachment corpora whose correct parse depends on head words.

Sentences have the shape ``subject verb object prep noun``.  The
prepositional phrase attaches to the verb or to the object with a
probability set by the classes of the verb and the subject; the class of the
noun inside the phrase leans towards the chosen attachment.  A P-CFG sees
none of this, a model conditioned on the verb sees part of it, and a model
that can pool verb and subject classes sees all of it.
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from importlib import resources

from ..chart import make_tree, parse_all, restrict, tree_to_reftree
from ..grammar import parse_grammar
from ..treebank import LabelMap


def _words(prefix, n):
    return [f"{prefix}{i}" for i in range(1, n + 1)]


@dataclass
class SyntheticSpec:
    subjects: dict = field(default_factory=lambda: {"X": _words("sx", 5), "Y": _words("sy", 5)})
    verbs: dict = field(default_factory=lambda: {"A": _words("va", 5), "B": _words("vb", 5)})
    objects: list = field(default_factory=lambda: _words("ob", 8))
    preps: list = field(default_factory=lambda: ["with", "on", "near"])
    pp_nouns: dict = field(default_factory=lambda: {"I": _words("pi", 5), "M": _words("pm", 5)})
    # p(subject class X), then p(verb class A | subject class)
    p_subject: dict = field(default_factory=lambda: {"X": 0.5, "Y": 0.5})
    p_verb: dict = field(default_factory=lambda: {"X": {"A": 0.7, "B": 0.3}, "Y": {"A": 0.3, "B": 0.7}})
    # p(the phrase attaches to the verb | verb class, subject class)
    p_verb_attach: dict = field(default_factory=lambda: {
        "A": {"X": 0.9, "Y": 0.2}, "B": {"X": 0.05, "Y": 0.45}})
    # p(noun class inside the phrase | attachment site)
    p_pp_noun: dict = field(default_factory=lambda: {"verb": {"I": 0.75, "M": 0.25},
                                                       "noun": {"I": 0.25, "M": 0.75}})

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def base_grammar_text():
    return resources.files("hbgparse.data").joinpath("pp_attach.grammar").read_text(encoding="utf-8")


def synthetic_grammar(spec=None):
    """The analysis grammar: the phrase-structure rules plus one lexical rule per word."""
    spec = spec or SyntheticSpec()
    lines = [base_grammar_text().rstrip()]
    lex = {
        "V": sorted(w for ws in spec.verbs.values() for w in ws),
        "N": sorted({w for ws in spec.subjects.values() for w in ws} | set(spec.objects)
                    | {w for ws in spec.pp_nouns.values() for w in ws}),
        "P": sorted(spec.preps),
    }
    for pos, words in lex.items():
        rid = f"lex_{pos.lower()}"
        for i, w in enumerate(words):
            cat = f"[{pos},x]" if i == 0 else ""
            lines.append(f"{rid} : {pos}{cat} -> {w}")
    return parse_grammar("\n".join(lines) + "\n")


def _pick(rng, dist):
    keys = sorted(dist)
    return rng.choices(keys, weights=[dist[k] for k in keys])[0]


def _productions(grammar):
    out = {}
    for p in grammar.productions:
        key = p.rule_id if not p.lexical else (p.rule_id, p.rhs[0])
        out[key] = p
    return out


def sample_tree(rng, spec, prods):
    """One sentence as a grammar tree, plus its generating choices."""
    sc = _pick(rng, spec.p_subject)
    vc = _pick(rng, spec.p_verb[sc])
    subj = rng.choice(spec.subjects[sc])
    verb = rng.choice(spec.verbs[vc])
    obj = rng.choice(spec.objects)
    prep = rng.choice(spec.preps)
    site = "verb" if rng.random() < spec.p_verb_attach[vc][sc] else "noun"
    pnoun = rng.choice(spec.pp_nouns[_pick(rng, spec.p_pp_noun[site])])

    def lex(pos, word, i):
        return make_tree(prods[(f"lex_{pos}", word)], (word,), i, i + 1)

    def np_simple(word, i):
        np1 = make_tree(prods["np1"], (lex("n", word, i),), i, i + 1)
        return make_tree(prods["np_u"], (np1,), i, i + 1)

    pp = make_tree(prods["pp"], (lex("p", prep, 3), np_simple(pnoun, 4)), 3, 5)
    v = lex("v", verb, 1)
    if site == "verb":
        vp = make_tree(prods["vp_pp"], (v, np_simple(obj, 2), pp), 1, 5)
    else:
        np1 = make_tree(prods["np1"], (lex("n", obj, 2),), 2, 3)
        obj_np = make_tree(prods["np_pp"], (np1, pp), 2, 5)
        vp = make_tree(prods["vp_np"], (v, obj_np), 1, 5)
    tree = make_tree(prods["s"], (np_simple(subj, 0), vp), 0, 5)
    return tree, {"subject": sc, "verb": vc, "site": site}


def gen_synthetic(spec=None, seed=0, n=500, grammar=None, labelmap=None, check=True):
    """``n`` ``(tokens, RefTree)`` pairs drawn deterministically from ``seed``."""
    spec = spec or SyntheticSpec()
    grammar = grammar or synthetic_grammar(spec)
    labelmap = labelmap or LabelMap(identity=True)
    prods = _productions(grammar)
    rng = random.Random(seed)
    corpus = []
    for _ in range(n):
        tree, _ = sample_tree(rng, spec, prods)
        ref = tree_to_reftree(tree, labelmap)
        tokens = tree.words()
        if check and restrict(parse_all(tokens, grammar), ref, labelmap).empty:
            raise ValueError(f"the analysis grammar cannot reproduce the sample {' '.join(tokens)!r}")
        corpus.append((tokens, ref))
    return corpus
