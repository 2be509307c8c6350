"""Packed parse forests: construction, counting, enumeration and Viterbi search.

A forest maps items ``(start, end, label, tag)`` to alternatives
``(production, children)``; a child is either another item or an ``int``
token position.  Productions stay n-ary: the split points of a production
over a span are enumerated directly, so no intermediate symbols appear.

Unit-production chains may not repeat a non-terminal.  For grammars whose
unit productions form a cycle this is enforced by splitting an item into
variants tagged with the set of labels on its chain; for acyclic grammars the
tag is always None.

Scoring models implement ``constituent_logprob(history, constituent)`` and
declare ``uses_history``.  Context-free models (``uses_history = False``)
also provide ``production_logprob(production)`` and are searched with a
plain CKY-style dynamic program; history-based models are searched with
state ``(item, history)`` and a table over head pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import chain, islice
from typing import NamedTuple, Protocol

from .history import (NOT_INHERITED, Constituent, TOP_HISTORY, child_history, inherited_heads,
                      make_history, walk)
from .treebank import LabelMap, Leaf, RefTree, bracket_set, format_reftree

TIE_EPS = 1e-12


class Item(NamedTuple):
    start: int
    end: int
    label: str
    tag: object = None


@dataclass(frozen=True, repr=False)
class Tree:
    production: object
    children: tuple
    start: int
    end: int
    h1: str
    h2: str | None

    @property
    def label(self):
        return self.production.lhs.label

    @property
    def mnemonic(self):
        return self.production.lhs.mnemonic

    def words(self):
        out = []
        for c in self.children:
            if isinstance(c, str):
                out.append(c)
            else:
                out.extend(c.words())
        return tuple(out)

    def nodes(self):
        yield self
        for c in self.children:
            if not isinstance(c, str):
                yield from c.nodes()

    def __str__(self):
        return format_tree(self)

    def __repr__(self):
        return f"Tree({format_tree(self)})"


def _head(child):
    if isinstance(child, str):
        return child, None
    return child.h1, child.h2


def make_tree(production, children, start, end):
    """Build a node, propagating H1/H2 from the designated children.

    H1 is the primary head of the h1 child.  H2 is the primary head of the h2
    child, except when h2 and h1 designate the same child, in which case that
    child's own H2 is passed up.
    """
    h1, inner_h2 = _head(children[production.h1])
    if production.h2 is None:
        h2 = None
    elif production.h2 == production.h1:
        h2 = inner_h2
    else:
        h2 = _head(children[production.h2])[0]
    return Tree(production, tuple(children), start, end, h1, h2)


class ScoringModel(Protocol):
    uses_history: bool
    parent_mode: str

    def constituent_logprob(self, history, constituent, inherited=NOT_INHERITED) -> float: ...


@dataclass
class Forest:
    tokens: tuple
    grammar: object
    nodes: dict
    roots: list

    @property
    def empty(self):
        return not self.roots

    def __len__(self):
        return len(self.nodes)


# -- construction -------------------------------------------------------------

def parse_all(tokens, grammar):
    """Build the packed forest of every parse of ``tokens`` rooted in the start mnemonic."""
    tokens = tuple(tokens)
    n = len(tokens)
    terms = [grammar.terminal_for(w) for w in tokens]
    nts = grammar.nonterminals
    cyclic = grammar.has_unit_cycles
    nonunit, unit_by_child = [], {}
    for p in grammar.productions:
        if p.arity == 1 and p.rhs[0] in nts:
            unit_by_child.setdefault(p.rhs[0], []).append(p)
        else:
            nonunit.append(p)

    nodes = {}
    # ends[s][label] -> sorted end positions of complete items starting at s
    ends = [dict() for _ in range(n + 1)]

    def tilings(rhs, d, s, j):
        sym = rhs[d]
        last = d == len(rhs) - 1
        if sym not in nts:
            if s < j and terms[s] == sym:
                if last:
                    if s + 1 == j:
                        yield (s,)
                else:
                    for rest in tilings(rhs, d + 1, s + 1, j):
                        yield (s,) + rest
            return
        for m in ends[s].get(sym, ()):
            if m > j or (last and m != j) or (not last and m >= j):
                continue
            child = Item(s, m, sym)
            if last:
                yield (child,)
            else:
                for rest in tilings(rhs, d + 1, m, j):
                    yield (child,) + rest

    for length in range(1, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            base = {}
            for p in nonunit:
                if p.arity > length:
                    continue
                first = p.rhs[0]
                if first in nts:
                    if first not in ends[i]:
                        continue
                elif terms[i] != first:
                    continue
                for kids in tilings(p.rhs, 0, i, j):
                    base.setdefault(p.lhs.label, []).append((p, kids))
            labels = _unit_closure(i, j, base, unit_by_child, nodes, cyclic)
            for label in labels:
                ends[i].setdefault(label, []).append(j)

    roots = [Item(0, n, lab) for lab in grammar.start_labels if Item(0, n, lab) in nodes] if n else []
    return Forest(tokens, grammar, nodes, roots)


def _unit_closure(i, j, base, unit_by_child, nodes, cyclic):
    if not cyclic:
        alts = {lab: list(v) for lab, v in base.items()}
        work = sorted(alts)
        seen = set(work)
        while work:
            y = work.pop(0)
            for p in unit_by_child.get(y, ()):
                x = p.lhs.label
                alts.setdefault(x, []).append((p, (Item(i, j, y),)))
                if x not in seen:
                    seen.add(x)
                    work.append(x)
        for lab, v in alts.items():
            v.sort(key=lambda a: (a[0].index, a[1]))
            nodes[Item(i, j, lab)] = v
        return sorted(alts)

    variants = {}
    for lab, v in base.items():
        variants[(lab, frozenset([lab]))] = list(v)
    work = sorted(variants, key=lambda k: (k[0], sorted(k[1])))
    while work:
        y, chain_y = work.pop(0)
        for p in unit_by_child.get(y, ()):
            x = p.lhs.label
            if x in chain_y:
                continue
            key = (x, chain_y | {x})
            if key not in variants:
                variants[key] = []
                work.append(key)
            variants[key].append((p, (Item(i, j, y, chain_y),)))
    merged = {}
    for (lab, ch) in sorted(variants, key=lambda k: (k[0], len(k[1]), sorted(k[1]))):
        alts = variants[(lab, ch)]
        nodes[Item(i, j, lab, ch)] = alts
        merged.setdefault(lab, []).extend(alts)
    for lab, v in merged.items():
        nodes[Item(i, j, lab)] = v
    return sorted(merged)


# -- counting and enumeration -----------------------------------------------------

def count_parses(forest):
    memo = {}

    def count(item):
        if item in memo:
            return memo[item]
        total = 0
        for _, kids in forest.nodes[item]:
            prod = 1
            for k in kids:
                if not isinstance(k, int):
                    prod *= count(k)
                    if not prod:
                        break
            total += prod
        memo[item] = total
        return total

    return sum(count(r) for r in forest.roots)


def enumerate_parses(forest, limit):
    """Up to ``limit`` distinct parses, in a deterministic order."""
    if limit <= 0 or forest.empty:
        return []
    tokens = forest.tokens

    def gen(item):
        for prod, kids in forest.nodes[item]:
            for built in gen_seq(kids, 0):
                yield make_tree(prod, built, item.start, item.end)

    def gen_seq(kids, d):
        if d == len(kids):
            yield ()
            return
        k = kids[d]
        heads = [tokens[k]] if isinstance(k, int) else gen(k)
        for first in heads:
            for rest in gen_seq(kids, d + 1):
                yield (first,) + rest

    return list(islice(chain.from_iterable(gen(r) for r in forest.roots), limit))


# -- scoring -------------------------------------------------------------------------

def _check(score):
    if not math.isfinite(score):
        raise ValueError(f"model returned a non-finite score ({score})")
    return score


def _better(score, enc, best):
    if best is None:
        return True
    bs, be = best[0], best[1]
    if score > bs + TIE_EPS * (1 + abs(bs)):
        return True
    if score < bs - TIE_EPS * (1 + abs(bs)):
        return False
    return enc < be


def tree_logprob(model, tree):
    """Sum of constituent log-probabilities over the leftmost derivation of ``tree``."""
    if not getattr(model, "uses_history", True):
        return sum(_check(model.production_logprob(n.production)) for n in tree.nodes())
    mode = getattr(model, "parent_mode", "immediate")
    total = 0.0
    for cur in walk(tree):
        t = cur.tree
        c = Constituent.of(t.production, t.h1, t.h2)
        inh = inherited_heads(cur.parent.tree.production, cur.index) if cur.parent else NOT_INHERITED
        total += _check(model.constituent_logprob(make_history(cur, mode), c, inh))
    return total


def viterbi(forest, model):
    """Most probable parse as ``(Tree, logprob)``, or None for an empty forest."""
    if forest.empty:
        return None
    if getattr(model, "uses_history", True):
        return _viterbi_history(forest, model)
    return _viterbi_cf(forest, model)


def _viterbi_cf(forest, model):
    memo = {}
    tokens = forest.tokens

    def best(item):
        if item in memo:
            return memo[item]
        top = None
        for prod, kids in forest.nodes[item]:
            score = _check(model.production_logprob(prod))
            enc = (prod.index,)
            for k in kids:
                if isinstance(k, int):
                    continue
                sub = best(k)
                score += sub[0]
                enc += sub[1]
            if _better(score, enc, top):
                top = (score, enc, prod, kids)
        memo[item] = top
        return top

    def build(item):
        _, _, prod, kids = memo[item]
        built = tuple(tokens[k] if isinstance(k, int) else build(k) for k in kids)
        return make_tree(prod, built, item.start, item.end)

    top = None
    for r in forest.roots:
        b = best(r)
        if _better(b[0], b[1], top):
            top = (b[0], b[1], r)
    return build(top[2]), top[0]


def _viterbi_history(forest, model):
    tokens = forest.tokens
    nts = forest.grammar.nonterminals
    mode = getattr(model, "parent_mode", "immediate")
    pair_memo = {}
    memo = {}

    def head_pairs(child):
        if isinstance(child, int):
            return {(tokens[child], None)}
        if child not in pair_memo:
            out = set()
            for prod, kids in forest.nodes[child]:
                out |= alt_pairs(prod, kids)
            pair_memo[child] = out
        return pair_memo[child]

    def alt_pairs(prod, kids):
        first = head_pairs(kids[prod.h1])
        if prod.h2 is None:
            return {(a, None) for a, _ in first}
        if prod.h2 == prod.h1:
            return set(first)
        seconds = {a for a, _ in head_pairs(kids[prod.h2])}
        return {(a, b) for a, _ in first for b in seconds}

    def pick(table, want_h1=None, want_h2=None, check_h2=False):
        top = None
        for key, entry in table.items():
            if want_h1 is not None and key[0] != want_h1:
                continue
            if check_h2 and key[1] != want_h2:
                continue
            if _better(entry[0], entry[1], top and top[1]):
                top = (key, entry)
        return top

    def best(item, history, inh):
        mkey = (item, history, inh)
        if mkey in memo:
            return memo[mkey]
        table = {}
        for prod, kids in forest.nodes[item]:
            for h1, h2 in sorted(alt_pairs(prod, kids), key=lambda hp: (hp[0], hp[1] or "")):
                score = _check(model.constituent_logprob(history, Constituent.of(prod, h1, h2), inh))
                enc = (prod.index,)
                refs = []
                for d, k in enumerate(kids):
                    if isinstance(k, int):
                        refs.append(k)
                        continue
                    ctx = child_history(history, prod, d, h1, h2,
                                        nts[k.label].category.syn_type, mode)
                    kinh = inherited_heads(prod, d)
                    sub = best(k, ctx, kinh)
                    if d == prod.h1:
                        chosen = pick(sub, h1, h2, prod.h2 == prod.h1)
                    elif d == prod.h2:
                        chosen = pick(sub, h2)
                    else:
                        chosen = pick(sub)
                    if chosen is None:
                        break
                    key, entry = chosen
                    score += entry[0]
                    enc += entry[1]
                    refs.append((k, ctx, kinh, key))
                else:
                    if _better(score, enc, table.get((h1, h2))):
                        table[(h1, h2)] = (score, enc, prod, tuple(refs))
        memo[mkey] = table
        return table

    def build(item, history, inh, key):
        _, _, prod, refs = memo[(item, history, inh)][key]
        built = tuple(tokens[r] if isinstance(r, int) else build(*r) for r in refs)
        return make_tree(prod, built, item.start, item.end)

    top = None
    for r in forest.roots:
        chosen = pick(best(r, TOP_HISTORY, NOT_INHERITED))
        if chosen and _better(chosen[1][0], chosen[1][1], top):
            top = (chosen[1][0], chosen[1][1], r, chosen[0])
    if top is None:
        return None
    return build(top[2], TOP_HISTORY, NOT_INHERITED, top[3]), top[0]


# -- the consistent sub-forest ----------------------------------------------------------

def _parts(span, inner):
    """Child tiling of ``span``: maximal reference spans inside it plus bare tokens."""
    i, j = span
    spans = sorted((s for s in inner if i <= s[0] and s[1] <= j and s != span),
                   key=lambda s: (s[0], -s[1]))
    out = {}
    pos = i
    for s in spans:
        if s[0] < pos:
            continue
        while pos < s[0]:
            out[(pos, pos + 1)] = "tok"
            pos += 1
        out[s] = "ref"
        pos = s[1]
    while pos < j:
        out[(pos, pos + 1)] = "tok"
        pos += 1
    return out


def restrict(forest, reference, labelmap, labeled=True):
    """Sub-forest of the parses consistent with ``reference``.

    Every item is paired with an anchor, the span of its nearest
    bracket-bearing ancestor.  A bracket-bearing node must either repeat its
    anchor's span (an inner node of a unary chain) or be one of the anchor's
    child constituents; erased nodes must cover whole child constituents of
    the anchor; words must be bare tokens of their anchor.  Together these
    local tests are equivalent to equality of bracket sets.
    """
    if forest.tokens != reference.words():
        raise ValueError("forest and reference cover different token sequences")
    n = len(forest.tokens)
    grammar = forest.grammar
    ref = bracket_set(reference, labelmap, is_candidate=False, drop_full_span=reference.synthetic)
    full = (0, n)
    top_anchor = full if reference.synthetic else None
    parts_memo = {None: {full: "ref"}}

    def parts(anchor):
        if anchor not in parts_memo:
            parts_memo[anchor] = _parts(anchor, ref)
        return parts_memo[anchor]

    def union_of_parts(span, anchor):
        ps = parts(anchor)
        starts = {s[0] for s in ps}
        stops = {s[1] for s in ps}
        return span[0] in starts and span[1] in stops

    nodes = {}
    memo = {}

    def visit(item, anchor):
        key = (item, anchor)
        if key in memo:
            return memo[key]
        memo[key] = None  # guards against re-entry; forests are acyclic
        span = (item.start, item.end)
        kept = []
        for prod, kids in forest.nodes[item]:
            if prod.lexical:
                if all(parts(anchor).get((k, k + 1)) == "tok" for k in kids):
                    kept.append((prod, kids))
                continue
            label = labelmap(prod.lhs.mnemonic)
            if label is not None:
                if span != anchor:
                    if parts(anchor).get(span) != "ref":
                        continue
                    if labeled and ref.get(span, label if anchor is None else None) != label:
                        continue
                inner = span
            else:
                if not union_of_parts(span, anchor):
                    continue
                inner = anchor
            new_kids = []
            for k in kids:
                if isinstance(k, int):
                    if parts(inner).get((k, k + 1)) != "tok":
                        break
                    new_kids.append(k)
                else:
                    sub = visit(k, inner)
                    if sub is None:
                        break
                    new_kids.append(sub)
            else:
                kept.append((prod, tuple(new_kids)))
        if not kept:
            return None
        new_item = Item(item.start, item.end, item.label, (item.tag, anchor))
        nodes[new_item] = kept
        memo[key] = new_item
        return new_item

    roots = [r for r in (visit(root, top_anchor) for root in forest.roots) if r is not None]
    return Forest(forest.tokens, grammar, nodes, roots)


def best_consistent(forest, model, reference, labelmap, labeled=True):
    """Most probable parse among those consistent with ``reference``, or None."""
    result = viterbi(restrict(forest, reference, labelmap, labeled), model)
    return None if result is None else result[0]


# -- output ------------------------------------------------------------------------

def tree_to_reftree(tree, labelmap=None):
    """Project a parse onto treebank brackets: lexical nodes become tags."""
    labelmap = labelmap or LabelMap(identity=True)

    def project(node):
        if node.production.lexical:
            return [Leaf(w, node.mnemonic, node.start + i) for i, w in enumerate(node.words())]
        out = []
        pos = node.start
        for c in node.children:
            if isinstance(c, str):
                out.append(Leaf(c, "", pos))
                pos += 1
            else:
                out.extend(project(c))
                pos = c.end
        label = labelmap(node.mnemonic)
        if label is None:
            return out
        return [RefTree(label, tuple(out), node.start, node.end)]

    top = project(tree)
    if len(top) == 1 and isinstance(top[0], RefTree):
        return top[0]
    if not any(isinstance(c, RefTree) for c in top):
        top = [RefTree(tree.mnemonic, tuple(top), tree.start, tree.end)]
        return top[0]
    return RefTree("ROOT", tuple(top), tree.start, tree.end, synthetic=True)


def format_tree(tree, labelmap=None):
    return format_reftree(tree_to_reftree(tree, labelmap))
