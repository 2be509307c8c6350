"""Leftmost derivations and the truncated conditioning histories used by HBG.

A history is read off the conditioning parent of a constituent: its Syn/Sem
labels, its rule, its two lexical heads, and the position (1-based) of the
path towards the constituent among the children of that rule.  In
``functional`` mode the conditioning parent skips ancestors that share the
constituent's syntactic type, which lets a constituent under a unit rule
``NP2 -> NP1`` see the VP above the chain.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

TOP = "<top>"
NONE = "<none>"

IMMEDIATE = "immediate"
FUNCTIONAL = "functional"
PARENT_MODES = (IMMEDIATE, FUNCTIONAL)


class HistoryTuple(NamedTuple):
    syn_p: str
    sem_p: str
    rule_p: str
    child_index: int
    h1_p: str
    h2_p: str


TOP_HISTORY = HistoryTuple(TOP, TOP, TOP, 1, TOP, TOP)

HISTORY_FIELDS = HistoryTuple._fields


class Constituent(NamedTuple):
    """The five predicted values of one node: Syn, Sem, R, H1, H2."""

    syn: str
    sem: str
    rule: str
    h1: str
    h2: str

    @classmethod
    def of(cls, production, h1, h2):
        cat = production.lhs.category
        return cls(cat.syn, cat.sem, production.rule_id, h1, NONE if h2 is None else h2)


@dataclass(frozen=True)
class DerivationEvent:
    node_index: int
    rule: str
    # rule sequence applied so far; identifies the sentential form
    prefix: tuple
    constituent: Constituent
    production: object
    # whether H1 / H2 are copied from the immediate parent rather than generated
    inherited: tuple = (False, False)


def inherited_heads(production, index):
    """Which heads of child ``index`` (0-based) are fixed by its parent's heads.

    The h1 child passes its H1 up, so its H1 equals the parent's; a distinct
    h2 child's H1 equals the parent's H2; when h1 and h2 designate the same
    child, that child's H2 equals the parent's H2 as well.
    """
    h1 = index == production.h1 or (index == production.h2 and production.h2 != production.h1)
    h2 = index == production.h1 == production.h2
    return h1, h2


NOT_INHERITED = (False, False)


def child_history(history, production, index, h1, h2, child_type, mode):
    """History seen by child ``index`` (0-based) of a node expanded by ``production``.

    ``history`` is the node's own history; ``child_type`` is the child's
    syntactic type (None for terminals).
    """
    cat = production.lhs.category
    if mode == FUNCTIONAL and child_type == cat.syn_type:
        return history
    return HistoryTuple(cat.syn, cat.sem, production.rule_id, index + 1,
                        h1, NONE if h2 is None else h2)


# -- cursors over parse trees ---------------------------------------------------

class Cursor:
    """A node of a parse tree together with its ancestry."""

    __slots__ = ("tree", "parent", "index")

    def __init__(self, tree, parent=None, index=0):
        self.tree = tree
        self.parent = parent
        self.index = index

    @property
    def syn_type(self):
        return self.tree.production.lhs.category.syn_type

    def children(self):
        for i, c in enumerate(self.tree.children):
            if not isinstance(c, str):
                yield Cursor(c, self, i)

    def __repr__(self):
        return f"Cursor({self.tree.label}@{self.tree.start}:{self.tree.end})"


def walk(tree):
    """Cursors for every internal node, in leftmost-derivation order."""
    stack = [Cursor(tree)]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(list(cur.children())))


def functional_parent(cursor):
    """Nearest ancestor whose syntactic type differs from the node's own; None is TOP."""
    node = cursor
    parent = cursor.parent
    while parent is not None:
        if parent.syn_type != node.syn_type:
            return parent
        node, parent = parent, parent.parent
    return None


def _path_child_index(ancestor, cursor):
    node = cursor
    while node.parent is not ancestor:
        node = node.parent
    return node.index


def make_history(cursor, mode=IMMEDIATE):
    if mode not in PARENT_MODES:
        raise ValueError(f"unknown parent mode {mode!r}")
    parent = cursor.parent if mode == IMMEDIATE else functional_parent(cursor)
    if parent is None:
        return TOP_HISTORY
    t = parent.tree
    cat = t.production.lhs.category
    return HistoryTuple(cat.syn, cat.sem, t.production.rule_id,
                        _path_child_index(parent, cursor) + 1,
                        t.h1, NONE if t.h2 is None else t.h2)


def leftmost_derivation(tree):
    events = []
    prefix = ()
    for i, cur in enumerate(walk(tree), 1):
        p = cur.tree.production
        inh = inherited_heads(cur.parent.tree.production, cur.index) if cur.parent else NOT_INHERITED
        events.append(DerivationEvent(i, p.rule_id, prefix,
                                      Constituent.of(p, cur.tree.h1, cur.tree.h2), p, inh))
        prefix = prefix + (p.index,)
    return events


def history_events(tree, mode=IMMEDIATE):
    """``(HistoryTuple, DerivationEvent)`` pairs for every node of ``tree``."""
    return [(make_history(cur, mode), ev)
            for cur, ev in zip(walk(tree), leftmost_derivation(tree))]


def sentential_form(events, upto):
    """Symbols of the sentential form just before expanding node ``upto`` (1-based)."""
    nts = {ev.production.lhs.label for ev in events}
    form = [(events[0].production.lhs.label, True)]
    for ev in events[:upto - 1]:
        p = ev.production
        k = next(i for i, (_, is_nt) in enumerate(form) if is_nt)
        form[k:k + 1] = [(s, not p.lexical and s in nts) for s in p.rhs]
    return [s for s, _ in form]


def replay(events, tokens=None, start=0):
    """Rebuild the parse tree from its leftmost rule sequence."""
    from .chart import make_tree

    if not events:
        raise ValueError("no events to replay")
    it = iter(events)
    words = list(tokens) if tokens is not None else None
    pos = [start]

    def build():
        ev = next(it)
        p = ev.production
        kids = []
        begin = pos[0]
        for sym in p.rhs:
            if p.lexical or sym not in nt_labels:
                if words is not None:
                    kids.append(words[pos[0] - start])
                else:
                    kids.append(sym)
                pos[0] += 1
            else:
                child = build()
                if child.label != sym:
                    raise ValueError(f"node {ev.node_index} expects {sym} but the next event expands {child.label}")
                kids.append(child)
        return make_tree(p, tuple(kids), begin, pos[0])

    nt_labels = {ev.production.lhs.label for ev in events}
    tree = build()
    if next(it, None) is not None:
        raise ValueError("events left over after the derivation completed")
    return tree


def extract_events(corpus, grammar, model, labelmap=None, mode=IMMEDIATE, report=None):
    """Training events from the most likely consistent parse of every sentence.

    Sentences without a consistent parse are skipped; their number is stored
    under ``report["skipped"]`` when a dict is passed.
    """
    from .chart import best_consistent, parse_all
    from .treebank import LabelMap

    labelmap = labelmap or LabelMap(identity=True)
    events = []
    skipped = 0
    for tokens, ref in corpus:
        tree = best_consistent(parse_all(tokens, grammar), model, ref, labelmap)
        if tree is None:
            skipped += 1
            continue
        events.extend(history_events(tree, mode))
    if report is not None:
        report["skipped"] = skipped
        report["sentences"] = len(corpus) - skipped
    if not events:
        raise ValueError("no training events: no sentence had a consistent parse")
    return events


# -- event dump -------------------------------------------------------------------

def format_event(history, event):
    c = event.constituent
    inh = "".join("1" if f else "0" for f in event.inherited)
    return "\t".join(map(str, (*history, c.syn, c.sem, c.rule, c.h1, c.h2, inh)))


def parse_event_line(line):
    """``(HistoryTuple, Constituent, inherited)``; the inherited column is optional."""
    parts = line.rstrip("\n").split("\t")
    if len(parts) not in (11, 12):
        raise ValueError(f"expected 11 or 12 tab-separated fields, got {len(parts)}")
    h = HistoryTuple(parts[0], parts[1], parts[2], int(parts[3]), parts[4], parts[5])
    inh = tuple(ch == "1" for ch in parts[11]) if len(parts) == 12 else NOT_INHERITED
    return h, Constituent(*parts[6:11]), inh


def write_events(pairs, path):
    Path(path).write_text("".join(format_event(h, e) + "\n" for h, e in pairs), encoding="utf-8")


def read_events(path):
    """Read an event dump as ``(HistoryTuple, Constituent, inherited)`` triples."""
    return [parse_event_line(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
