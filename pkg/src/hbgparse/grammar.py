"""Annotated context-free grammars: categories, mnemonics, head designations.

A grammar file is line oriented; see ``docs/grammar_format.md`` for the full
EBNF.  A short example::

    // a^n b^n
    #syn
    S
    A
    B
    #sem
    none
    #rules
    r1 : S[S,none] -> A S B ; h1=1
    r2 : S -> A B
    r3 : A[A,none] -> a
    r4 : B[B,none] -> b

Non-terminals are the symbols that appear on the left of some rule; every
other right-hand-side symbol is a terminal (or, when a ``#terminals`` section
is present, must be declared there).  Feature-bearing labels such as
``NP{num=$n}`` are rule templates, expanded over the declared feature values.
"""
from __future__ import annotations

import itertools
import re
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

MAX_CATEGORIES = 64
UNKNOWN_WORD = "<unk>"

SECTIONS = ("syn", "sem", "features", "mnemonics", "rules", "start", "terminals")


class GrammarError(ValueError):
    """Malformed or inconsistent grammar input."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class Category:
    syn: str
    sem: str
    # coarse syntactic type used to decide functional parents; defaults to syn
    syn_type: str = ""

    def __post_init__(self):
        if not self.syn_type:
            object.__setattr__(self, "syn_type", self.syn)


@dataclass(frozen=True)
class NonTerminal:
    label: str
    category: Category
    features: tuple = ()
    mnemonic: str = ""

    @property
    def base(self):
        return self.label.split("{", 1)[0]

    @property
    def syn(self):
        return self.category.syn

    @property
    def sem(self):
        return self.category.sem


@dataclass(frozen=True)
class Mnemonic:
    id: str
    representative: NonTerminal
    members: frozenset


@dataclass(frozen=True)
class Production:
    """One ground production.  ``h1``/``h2`` are 0-based rhs positions."""

    lhs: NonTerminal
    rhs: tuple
    rule_id: str
    h1: int
    h2: int | None
    index: int = 0
    lexical: bool = False

    @property
    def arity(self):
        return len(self.rhs)

    def __str__(self):
        return f"{self.rule_id}: {self.lhs.label} -> {' '.join(self.rhs)}"


@dataclass(frozen=True)
class RuleTemplate:
    """A rule line before feature-variable expansion."""

    rule_id: str
    lhs: str
    category: Category | None
    rhs: tuple
    h1: int | None
    h2: int | None
    line: int = 0


# -- label syntax ---------------------------------------------------------

_LABEL_RE = re.compile(r"^([^\s{}\[\],]+)(?:\{([^{}]*)\})?$")


def parse_label(text, line=None):
    """Split ``Base{f=v,g=$x}`` into ``(base, ((f, v), (g, '$x')))``."""
    m = _LABEL_RE.match(text)
    if not m:
        raise GrammarError(f"malformed symbol {text!r}", line)
    base, feats = m.group(1), m.group(2)
    if feats is None:
        return base, None
    pairs = []
    for item in filter(None, (s.strip() for s in feats.split(","))):
        if "=" not in item:
            raise GrammarError(f"feature without value in {text!r}", line)
        k, v = (s.strip() for s in item.split("=", 1))
        pairs.append((k, v))
    return base, tuple(sorted(pairs))


def make_label(base, features):
    if not features:
        return base
    return base + "{" + ",".join(f"{k}={v}" for k, v in sorted(features)) + "}"


# -- the grammar ----------------------------------------------------------

@dataclass(frozen=True)
class Grammar:
    syn: tuple
    syn_types: tuple  # (syn, type) pairs
    sem: tuple
    features: tuple  # (name, values) pairs
    nonterminals: dict
    terminals: frozenset
    mnemonics: dict
    productions: tuple
    start: str
    declared_terminals: bool = False

    def __eq__(self, other):
        if not isinstance(other, Grammar):
            return NotImplemented
        return (self.syn, self.syn_types, self.sem, self.features, self.nonterminals,
                self.terminals, self.mnemonics, self.productions, self.start) == (
            other.syn, other.syn_types, other.sem, other.features, other.nonterminals,
            other.terminals, other.mnemonics, other.productions, other.start)

    __hash__ = None

    def is_nonterminal(self, symbol):
        return symbol in self.nonterminals

    @cached_property
    def by_lhs(self):
        out = defaultdict(list)
        for p in self.productions:
            out[p.lhs.label].append(p)
        return dict(out)

    @cached_property
    def rule_ids(self):
        return tuple(sorted({p.rule_id for p in self.productions}))

    @cached_property
    def rules_by_category(self):
        """(syn, sem) -> sorted rule ids expanding non-terminals of that category."""
        out = defaultdict(set)
        for p in self.productions:
            out[(p.lhs.syn, p.lhs.sem)].add(p.rule_id)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    @cached_property
    def categories(self):
        return tuple(sorted({nt.category for nt in self.nonterminals.values()},
                            key=lambda c: (c.syn, c.sem)))

    @cached_property
    def max_arity(self):
        return max(p.arity for p in self.productions)

    @cached_property
    def start_labels(self):
        return tuple(sorted(self.mnemonics[self.start].members))

    @cached_property
    def has_unit_cycles(self):
        graph = defaultdict(set)
        for p in self.productions:
            if p.arity == 1 and p.rhs[0] in self.nonterminals:
                graph[p.lhs.label].add(p.rhs[0])
        state = {}

        def visit(n):
            state[n] = 1
            for m in graph[n]:
                if state.get(m) == 1 or (m not in state and visit(m)):
                    return True
            state[n] = 2
            return False

        return any(n not in state and visit(n) for n in list(graph))

    def terminal_for(self, word):
        """Grammar terminal used to match ``word``, or None if unparseable."""
        if word in self.terminals:
            return word
        if UNKNOWN_WORD in self.terminals:
            return UNKNOWN_WORD
        return None


def mnemonic_of(nt, grammar):
    """Return the mnemonic containing ``nt`` (a NonTerminal or a label)."""
    label = nt.label if isinstance(nt, NonTerminal) else nt
    try:
        return grammar.mnemonics[grammar.nonterminals[label].mnemonic]
    except KeyError:
        raise KeyError(f"unknown non-terminal {label!r}") from None


def syn_type(grammar, syn):
    return dict(grammar.syn_types).get(syn, syn)


# -- template expansion -----------------------------------------------------

def _variables(templates_syms):
    for base, feats in templates_syms:
        for k, v in feats or ():
            if v.startswith("$"):
                yield v, k


def expand_templates(templates, features):
    """Expand rule templates into ground ``(template, lhs, rhs)`` triples.

    ``features`` maps feature name -> tuple of allowed values.  A variable
    (``$x``) ranges over the values of the feature it is attached to; sharing
    a variable between positions ties those positions together.  The number
    of expansions is the product of the distinct variables' ranges.
    """
    out = []
    for t in templates:
        syms = [parse_label(t.lhs, t.line)] + [parse_label(s, t.line) for s in t.rhs]
        ranges = {}
        for var, feat in _variables(syms):
            if feat not in features or not features[feat]:
                raise GrammarError(f"unbounded variable {var} on feature {feat!r}", t.line)
            vals = tuple(features[feat])
            if var in ranges and ranges[var] != vals:
                raise GrammarError(f"variable {var} bound to features with different ranges", t.line)
            ranges[var] = vals
        for base, feats in syms:
            for k, v in feats or ():
                if v.startswith("$"):
                    continue
                if k not in features:
                    raise GrammarError(f"undeclared feature {k!r}", t.line)
                if v not in features[k]:
                    raise GrammarError(f"value {v!r} outside the range of feature {k!r}", t.line)
        names = sorted(ranges)
        for combo in itertools.product(*(ranges[n] for n in names)):
            env = dict(zip(names, combo))

            def ground(sym):
                base, feats = sym
                if feats is None:
                    return base
                return make_label(base, tuple((k, env.get(v, v)) for k, v in feats))

            out.append((t, ground(syms[0]), tuple(ground(s) for s in syms[1:])))
    return out


# -- file parsing -------------------------------------------------------------

_RULE_RE = re.compile(r"^(?P<id>[^\s:]+)\s*:\s*(?P<lhs>\S+?)(?:\[(?P<cat>[^\]]*)\])?\s*->\s*(?P<rhs>[^;]*)(?:;(?P<heads>.*))?$")


def _parse_heads(text, n, line):
    h1 = h2 = None
    for item in (text or "").split():
        if "=" not in item:
            raise GrammarError(f"bad head designation {item!r}", line)
        k, v = item.split("=", 1)
        if k not in ("h1", "h2"):
            raise GrammarError(f"unknown head key {k!r}", line)
        if v == "none":
            if k == "h1":
                raise GrammarError("h1 cannot be none", line)
            continue
        try:
            idx = int(v)
        except ValueError:
            raise GrammarError(f"invalid head index {v!r}", line) from None
        if not 1 <= idx <= n:
            raise GrammarError(f"invalid head index {idx} for a {n}-symbol right-hand side", line)
        if k == "h1":
            h1 = idx - 1
        else:
            h2 = idx - 1
    return h1, h2


def parse_grammar(text):
    sections = defaultdict(list)
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            name = line[1:].strip()
            if name not in SECTIONS:
                raise GrammarError(f"unknown section #{name}", lineno, 1)
            current = name
            continue
        if current is None:
            raise GrammarError("content before the first section header", lineno, 1)
        sections[current].append((lineno, line))

    syn, syn_types = [], {}
    for lineno, line in sections["syn"]:
        for part in [line] if ":" in line else line.split():
            name, _, typ = (s.strip() for s in part.partition(":"))
            if name in syn_types:
                raise GrammarError(f"duplicate syn symbol {name!r}", lineno)
            syn.append(name)
            syn_types[name] = typ or name
    sem = []
    for lineno, line in sections["sem"]:
        for name in line.split():
            if name in sem:
                raise GrammarError(f"duplicate sem symbol {name!r}", lineno)
            sem.append(name)
    if len(syn) > MAX_CATEGORIES or len(sem) > MAX_CATEGORIES:
        raise GrammarError(f"at most {MAX_CATEGORIES} syn and sem symbols may be declared")

    features = {}
    for lineno, line in sections["features"]:
        name, eq, vals = line.partition("=")
        if not eq or not vals.split():
            raise GrammarError("feature declaration needs 'name = v1 v2 ...'", lineno, 1)
        features[name.strip()] = tuple(vals.split())

    templates = []
    for lineno, line in sections["rules"]:
        m = _RULE_RE.match(line)
        if not m:
            col = line.find("->") + 1 or 1
            raise GrammarError("syntax error in rule (expected 'id : LHS[syn,sem] -> RHS ... ; h1=k h2=k')", lineno, col)
        rhs = tuple(m.group("rhs").split())
        if not rhs:
            raise GrammarError("empty right-hand side", lineno, line.find("->") + 3)
        cat = None
        if m.group("cat") is not None:
            parts = [s.strip() for s in m.group("cat").split(",")]
            if len(parts) != 2:
                raise GrammarError("category must be [syn,sem]", lineno, line.find("[") + 1)
            s, e = parts
            if s not in syn_types:
                raise GrammarError(f"undeclared syn symbol {s!r}", lineno, line.find("[") + 2)
            if e not in sem:
                raise GrammarError(f"undeclared sem symbol {e!r}", lineno, line.find(",") + 2)
            cat = Category(s, e, syn_types[s])
        h1, h2 = _parse_heads(m.group("heads"), len(rhs), lineno)
        templates.append(RuleTemplate(m.group("id"), m.group("lhs"), cat, rhs, h1, h2, lineno))

    if not templates:
        raise GrammarError("grammar must contain at least one production")

    expanded = expand_templates(templates, features)

    # categories: explicit on a template, otherwise inherited from the base label
    nts = {}
    base_cat = {}
    for t, lhs, _ in expanded:
        if t.category is not None:
            base_cat.setdefault(parse_label(t.lhs)[0], t.category)
    for t, lhs, _ in expanded:
        base, feats = parse_label(lhs, t.line)
        cat = t.category or base_cat.get(base)
        if cat is None:
            raise GrammarError(f"no category given for non-terminal {lhs!r}", t.line)
        if lhs in nts and nts[lhs].category != cat:
            raise GrammarError(f"non-terminal {lhs!r} declared with conflicting categories", t.line)
        nts[lhs] = NonTerminal(lhs, cat, feats or ())

    declared_terms = None
    if sections["terminals"]:
        declared_terms = set()
        for _, line in sections["terminals"]:
            declared_terms.update(line.split())
    terminals = set()
    for t, lhs, rhs in expanded:
        for sym in rhs:
            if sym in nts:
                continue
            if "{" in sym or (declared_terms is not None and sym not in declared_terms):
                raise GrammarError(f"undeclared symbol {sym!r}", t.line)
            terminals.add(sym)
    overlap = (declared_terms or set()) & set(nts)
    if overlap:
        raise GrammarError(f"symbols declared both terminal and non-terminal: {sorted(overlap)}")

    mnemonics = _build_mnemonics(sections["mnemonics"], nts)
    for mid, mn in mnemonics.items():
        for lab in mn.members:
            nt = nts[lab]
            nts[lab] = NonTerminal(nt.label, nt.category, nt.features, mid)
    mnemonics = {mid: Mnemonic(mid, nts[mn.representative.label], mn.members)
                 for mid, mn in mnemonics.items()}

    productions = []
    seen = set()
    for t, lhs, rhs in expanded:
        nt_positions = [i for i, s in enumerate(rhs) if s in nts]
        h1 = t.h1 if t.h1 is not None else (nt_positions[0] if nt_positions else 0)
        key = (lhs, rhs, t.rule_id, h1, t.h2)
        if key in seen:
            continue
        seen.add(key)
        productions.append(Production(nts[lhs], rhs, t.rule_id, h1, t.h2,
                                      len(productions), not nt_positions))

    if sections["start"]:
        start = sections["start"][0][1].split()[0]
        if start in nts and start not in mnemonics:
            start = nts[start].mnemonic
        if start not in mnemonics:
            raise GrammarError(f"undeclared start symbol {start!r}", sections["start"][0][0])
    else:
        start = nts[expanded[0][1]].mnemonic

    return Grammar(
        syn=tuple(syn), syn_types=tuple(syn_types.items()), sem=tuple(sem),
        features=tuple(features.items()), nonterminals=dict(sorted(nts.items())),
        terminals=frozenset(terminals), mnemonics=dict(sorted(mnemonics.items())),
        productions=tuple(productions), start=start,
        declared_terminals=declared_terms is not None)


def _matches(nt, base, pattern):
    if base != "*" and nt.base != base:
        return False
    feats = dict(nt.features)
    return all(feats.get(k) == v for k, v in pattern)


def _build_mnemonics(lines, nts):
    owner = {}
    order = []
    for lineno, line in lines:
        mid, colon, rest = line.partition(":")
        mid = mid.strip()
        if not colon or not rest.split():
            raise GrammarError("mnemonic line needs 'ID : member ...'", lineno, 1)
        if mid in order:
            raise GrammarError(f"duplicate mnemonic {mid!r}", lineno)
        order.append(mid)
        for item in rest.split():
            base, pattern = parse_label(item, lineno)
            # a member with features names every non-terminal that unifies with it
            if pattern is not None:
                matched = [lab for lab, nt in nts.items() if _matches(nt, base, pattern)]
            else:
                matched = [item] if item in nts else []
            if not matched:
                raise GrammarError(f"mnemonic member {item!r} matches no non-terminal", lineno)
            for lab in matched:
                if owner.get(lab, mid) != mid:
                    raise GrammarError(f"non-terminal {lab!r} belongs to mnemonics {owner[lab]!r} and {mid!r}", lineno)
                owner[lab] = mid
    members = defaultdict(list)
    for lab in nts:
        mid = owner.get(lab, lab)
        if lab not in owner and lab in order:
            raise GrammarError(f"mnemonic id {lab!r} clashes with an unlisted non-terminal label")
        members[mid].append(lab)
    out = {}
    for mid, labs in members.items():
        rep = min(labs, key=lambda lab: (len(nts[lab].features), lab))
        out[mid] = Mnemonic(mid, nts[rep], frozenset(labs))
    return out


def load_grammar(path):
    return parse_grammar(Path(path).read_text(encoding="utf-8"))


def format_grammar(grammar):
    """Serialize ``grammar`` as ground productions (templates already expanded)."""
    lines = ["#syn"]
    for s, t in grammar.syn_types:
        lines.append(s if s == t else f"{s} : {t}")
    lines += ["#sem", " ".join(grammar.sem)]
    if grammar.features:
        lines.append("#features")
        lines += [f"{k} = {' '.join(v)}" for k, v in grammar.features]
    multi = [m for m in grammar.mnemonics.values() if len(m.members) > 1 or m.id != m.representative.label]
    if multi:
        lines.append("#mnemonics")
        for m in multi:
            rest = sorted(m.members - {m.representative.label})
            lines.append(f"{m.id} : {' '.join([m.representative.label] + rest)}")
    lines += ["#start", grammar.start]
    if grammar.declared_terminals:
        lines += ["#terminals", " ".join(sorted(grammar.terminals))]
    lines.append("#rules")
    for p in grammar.productions:
        c = p.lhs.category
        h2 = "none" if p.h2 is None else p.h2 + 1
        lines.append(f"{p.rule_id} : {p.lhs.label}[{c.syn},{c.sem}] -> {' '.join(p.rhs)} ; h1={p.h1 + 1} h2={h2}")
    return "\n".join(lines) + "\n"
