"""History-based scoring: five conditional factors per constituent.

HBG predicts a constituent's Syn, Sem, rule, primary head and secondary head
in that order.  The rule factor is the decision tree; the other four are
back-off tables smoothed by deleted interpolation.  ``SimpleHeadModel``
predicts the heads first and conditions the labels on them.
"""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from .clusters import balanced_codes, load_manual_bitstrings, write_bitstrings
from .dtree import DecisionTree, GrowReport, HistoryEncoder, StoppingRule, grow, reserved_symbols
from .history import IMMEDIATE, NONE, NOT_INHERITED, PARENT_MODES

UNKNOWN_WORD = "<unk>"
UNIFORM_FLOOR = 1e-6


class FactorEvent(NamedTuple):
    syn_p: str
    sem_p: str
    rule_p: str
    child_index: int
    h1_p: str
    h2_p: str
    syn: str
    sem: str
    rule: str
    h1: str
    h2: str

    @classmethod
    def of(cls, history, constituent):
        return cls(*history, *constituent)


# factor variable name -> event field
VAR = {"Synp": "syn_p", "Semp": "sem_p", "Rp": "rule_p", "Ipc": "child_index", "H1p": "h1_p",
       "H2p": "h2_p", "Syn": "syn", "Sem": "sem", "R": "rule", "H1": "h1", "H2": "h2"}

HBG_FACTORS = (
    ("Syn", ("Rp", "Ipc", "H1p", "Synp", "Semp")),
    ("Sem", ("Syn", "Rp", "Ipc", "H1p", "H2p", "Synp", "Semp")),
    ("R", ("Syn", "Sem", "Rp", "Ipc", "H1p", "H2p", "Synp", "Semp")),
    ("H1", ("R", "Syn", "Sem", "Rp", "Ipc", "H1p", "H2p")),
    ("H2", ("H1", "R", "Syn", "Sem", "Rp", "Ipc", "Synp")),
)

SIMPLE_FACTORS = (
    ("H1", ("H1p", "H2p", "Rp", "Ipc")),
    ("H2", ("H1", "H1p", "H2p", "Rp", "Ipc")),
    ("Syn", ("H1", "Rp", "Ipc")),
    ("Sem", ("Syn", "H1", "Rp", "Ipc")),
    ("R", ("Syn", "Sem", "H1", "H2")),
)


def count_bin(n):
    return int(math.log2(n)) if n > 0 else 0


class FactorModel:
    """Deleted-interpolation estimate of p(target | conditioning).

    Component 0 is uniform over ``inventory``; component k + 1 is the
    relative frequency given the first k conditioning variables.  The
    weights depend on a bucket: the highest order whose context was seen in
    training, and the binned count of that context.
    """

    def __init__(self, target, conditioning, inventory):
        self.target = target
        self.conditioning = tuple(conditioning)
        self.inventory = tuple(sorted(set(inventory)))
        self._inv = set(self.inventory)
        order = len(self.conditioning) + 1
        self.counts = [defaultdict(Counter) for _ in range(order)]
        self.totals = [Counter() for _ in range(order)]
        self.lambdas = {}  # (highest order, count bin) -> weights
        self.trained_buckets = set()
        self._z = {}

    # -- estimation --

    def _key(self, event):
        return tuple(getattr(event, VAR[v]) for v in self.conditioning), getattr(event, VAR[self.target])

    def add_counts(self, events):
        for ev in events:
            ctx, y = self._key(ev)
            for k in range(len(ctx) + 1):
                self.counts[k][ctx[:k]][y] += 1
                self.totals[k][ctx[:k]] += 1

    def bucket(self, ctx):
        top = 0
        for k in range(len(ctx) + 1):
            if self.totals[k].get(ctx[:k]):
                top = k
            else:
                break
        return top, count_bin(self.totals[top].get(ctx[:top], 0))

    def components(self, y, ctx):
        top, _ = self.bucket(ctx)
        out = [1.0 / len(self.inventory)]
        for k in range(top + 1):
            tot = self.totals[k].get(ctx[:k], 0)
            out.append(self.counts[k][ctx[:k]].get(y, 0) / tot if tot else 0.0)
        return out

    def fit_lambdas(self, heldout, iterations=200, tol=1e-10):
        if not heldout:
            raise ValueError(f"factor {self.target}: empty held-out split")
        by_bucket = defaultdict(list)
        for ev in heldout:
            ctx, y = self._key(ev)
            by_bucket[self.bucket(ctx)].append(self.components(y, ctx))
        self.lambdas = {}
        for b, rows in sorted(by_bucket.items()):
            lam = em_weights(rows, iterations, tol)
            # keep the uniform component alive so every probability stays positive
            lam[0] = max(lam[0], UNIFORM_FLOOR)
            total = sum(lam)
            self.lambdas[b] = [v / total for v in lam]
        self.trained_buckets = set(self.lambdas)

    def weights(self, bucket):
        if bucket in self.lambdas:
            return self.lambdas[bucket]
        top, cbin = bucket
        near = sorted((abs(b[1] - cbin), b[1]) for b in self.trained_buckets if b[0] == top)
        if near:
            return self.lambdas[(top, near[0][1])]
        return [1.0 / (top + 2)] * (top + 2)

    # -- scoring --

    def raw_prob(self, y, ctx):
        comps = self.components(y, ctx)
        lam = self.weights(self.bucket(ctx))
        return sum(l * c for l, c in zip(lam, comps))

    def prob(self, y, ctx, support=None):
        """p(y | ctx), renormalized over ``support`` when one is given."""
        if y not in self._inv:
            raise KeyError(f"factor {self.target}: {y!r} is outside the inventory")
        p = self.raw_prob(y, ctx)
        if support is None:
            return p
        key = (ctx, support)
        if key not in self._z:
            self._z[key] = sum(self.raw_prob(s, ctx) for s in support)
        return p / self._z[key]

    # -- io --

    def to_json(self):
        return {
            "target": self.target,
            "conditioning": list(self.conditioning),
            "inventory": list(self.inventory),
            "counts": [[[list(ctx), dict(c)] for ctx, c in sorted(level.items(), key=lambda kv: repr(kv[0]))]
                       for level in self.counts],
            "lambdas": [[b[0], b[1], w] for b, w in sorted(self.lambdas.items())],
        }

    @classmethod
    def from_json(cls, data):
        m = cls(data["target"], data["conditioning"], data["inventory"])
        ipc = "Ipc" in m.conditioning and m.conditioning.index("Ipc")
        for k, level in enumerate(data["counts"]):
            for ctx, c in level:
                if ipc is not False and len(ctx) > ipc:
                    ctx[ipc] = int(ctx[ipc])
                ctx = tuple(ctx)
                m.counts[k][ctx] = Counter(c)
                m.totals[k][ctx] = sum(c.values())
        m.lambdas = {(a, b): w for a, b, w in data["lambdas"]}
        m.trained_buckets = set(m.lambdas)
        return m


def em_weights(rows, iterations=200, tol=1e-10):
    """Mixture weights maximizing the likelihood of rows of component probabilities."""
    n = len(rows[0])
    lam = [1.0 / n] * n
    for _ in range(iterations):
        acc = [0.0] * n
        for comps in rows:
            tot = sum(l * c for l, c in zip(lam, comps))
            if tot <= 0:
                continue
            for j in range(n):
                acc[j] += lam[j] * comps[j] / tot
        s = sum(acc)
        new = [a / s for a in acc] if s > 0 else lam
        done = max(abs(a - b) for a, b in zip(new, lam)) < tol
        lam = new
        if done:
            break
    return lam


def split_heldout(events, heldout_every):
    train = [e for i, e in enumerate(events) if i % heldout_every != heldout_every - 1]
    held = [e for i, e in enumerate(events) if i % heldout_every == heldout_every - 1]
    return train, held


def train_factor(events, target, conditioning, inventory, heldout_every=10, heldout=None):
    """Counts from the training split, weights by EM on the held-out split.

    With ``heldout`` given, ``events`` are all used for counting.
    """
    if not events:
        raise ValueError("no events to train on")
    train, held = (events, heldout) if heldout is not None else split_heldout(events, heldout_every)
    m = FactorModel(target, conditioning, inventory)
    m.add_counts(train)
    m.fit_lambdas(held)
    return m


# -- the models ----------------------------------------------------------------------

@dataclass
class Inventory:
    """Closed value sets and supports derived from the grammar and the training words."""

    syns: tuple
    sems_by_syn: dict
    rules_by_category: dict
    rule_has_h2: dict
    vocabulary: tuple  # includes UNKNOWN_WORD

    @classmethod
    def build(cls, grammar, words):
        cats = grammar.categories
        sems = defaultdict(list)
        for c in cats:
            sems[c.syn].append(c.sem)
        has_h2 = {}
        for p in grammar.productions:
            has_h2[p.rule_id] = has_h2.get(p.rule_id, False) or p.h2 is not None
        vocab = tuple(sorted(set(words) | {UNKNOWN_WORD}))
        return cls(tuple(sorted(sems)), {k: tuple(sorted(v)) for k, v in sems.items()},
                   dict(grammar.rules_by_category), has_h2, vocab)

    def word(self, w):
        return w if w in self._vocab_set else UNKNOWN_WORD

    def __post_init__(self):
        self._vocab_set = set(self.vocabulary)

    def support(self, target, ev):
        if target == "Syn":
            return self.syns
        if target == "Sem":
            return self.sems_by_syn.get(ev.syn, ())
        if target == "R":
            return self.rules_by_category.get((ev.syn, ev.sem), ())
        if target == "H1":
            return self.vocabulary
        if target == "H2":
            return self.vocabulary if self.rule_has_h2.get(ev.rule, True) else (NONE,)
        raise ValueError(f"unknown target {target!r}")

    def values(self, target):
        if target == "Syn":
            return self.syns
        if target == "Sem":
            return tuple(sorted({s for v in self.sems_by_syn.values() for s in v}))
        if target == "R":
            return tuple(sorted({r for v in self.rules_by_category.values() for r in v}))
        if target == "H1":
            return self.vocabulary
        return self.vocabulary + (NONE,)


class _FactoredModel:
    uses_history = True
    factor_spec = ()

    def __init__(self, grammar, factors, inventory, parent_mode=IMMEDIATE):
        if parent_mode not in PARENT_MODES:
            raise ValueError(f"unknown parent mode {parent_mode!r}")
        self.grammar = grammar
        self.factors = factors
        self.inventory = inventory
        self.parent_mode = parent_mode
        self._memo = {}

    def _event(self, history, constituent):
        inv = self.inventory
        c = constituent
        h2 = c.h2 if c.h2 == NONE else inv.word(c.h2)
        return FactorEvent(*history, c.syn, c.sem, c.rule, inv.word(c.h1), h2)

    def factor_probs(self, history, constituent, inherited=NOT_INHERITED):
        """The five factor probabilities, in prediction order.

        A head copied from the parent was generated there, so its factor is 1.
        """
        ev = self._event(history, constituent)
        out = []
        for target, cond in self.factor_spec:
            if (target == "H1" and inherited[0]) or (target == "H2" and inherited[1]):
                out.append(1.0)
            else:
                out.append(self._factor_prob(target, cond, ev))
        return out

    def _factor_prob(self, target, cond, ev):
        f = self.factors[target]
        ctx = tuple(getattr(ev, VAR[v]) for v in cond)
        support = self._support(target, ev)
        y = getattr(ev, VAR[target])
        if y not in support:
            return 0.0
        return f.prob(y, ctx, support)

    def _support(self, target, ev):
        return self.inventory.support(target, ev)

    def constituent_logprob(self, history, constituent, inherited=NOT_INHERITED):
        key = (history, constituent, inherited)
        if key not in self._memo:
            total = 0.0
            for p in self.factor_probs(history, constituent, inherited):
                total += math.log(p) if p > 0 else -math.inf
            self._memo[key] = total
        return self._memo[key]


class HbgModel(_FactoredModel):
    factor_spec = HBG_FACTORS
    kind = "hbg"

    def __init__(self, grammar, factors, tree, inventory, parent_mode=IMMEDIATE):
        super().__init__(grammar, factors, inventory, parent_mode)
        self.tree = tree

    def _factor_prob(self, target, cond, ev):
        if target != "R":
            return super()._factor_prob(target, cond, ev)
        support = self.inventory.support("R", ev)
        if ev.rule not in support:
            return 0.0
        return self.tree.rule_prob(tuple(ev[:6]), ev.rule, support)


class SimpleHeadModel(_FactoredModel):
    factor_spec = SIMPLE_FACTORS
    kind = "simple"

    def _support(self, target, ev):
        if target == "H2":
            # the rule is predicted after the heads here
            return self.inventory.vocabulary + (NONE,)
        if target == "R":
            # rules whose secondary-head slot agrees with the H2 already predicted
            rules = self.inventory.support("R", ev)
            agree = tuple(r for r in rules if self.inventory.rule_has_h2.get(r, True) == (ev.h2 != NONE))
            return agree or rules
        return super()._support(target, ev)


# -- training ------------------------------------------------------------------------

def default_tables(grammar, vocabulary, width=16, word_table=None, manual=None):
    """Bitstring tables for every namespace, with reserved symbols added."""
    tables = dict(manual or {})
    if "syn" not in tables:
        tables["syn"] = balanced_codes("syn", grammar.syn, width)
    if "sem" not in tables:
        tables["sem"] = balanced_codes("sem", grammar.sem, width)
    if "rule" not in tables:
        order = sorted(grammar.rule_ids, key=lambda r: (
            min((p.lhs.syn, p.lhs.sem) for p in grammar.productions if p.rule_id == r), r))
        tables["rule"] = balanced_codes("rule", order, width)
    if word_table is not None:
        tables["word"] = word_table
    elif "word" not in tables:
        tables["word"] = balanced_codes("word", sorted(vocabulary), width)
    return {ns: t.with_reserved(reserved_symbols(ns)) for ns, t in tables.items()}


def _factor_events(events):
    """``(FactorEvent, inherited)`` from ``(history, DerivationEvent)`` pairs or
    ``(history, constituent[, inherited])`` tuples."""
    out = []
    for item in events:
        h, e = item[0], item[1]
        if hasattr(e, "constituent"):
            out.append((FactorEvent.of(h, e.constituent), tuple(e.inherited)))
        else:
            out.append((FactorEvent.of(h, e), tuple(item[2]) if len(item) > 2 else NOT_INHERITED))
    return out


def _train_factors(spec, fevents, inventory, heldout_every):
    """Heads copied from a parent carry no evidence for the head factors and are left out."""
    factors = {}
    for target, cond in spec:
        if target == "H1":
            data = [e for e, inh in fevents if not inh[0]]
        elif target == "H2":
            data = [e for e, inh in fevents if not inh[1]]
        else:
            data = [e for e, _ in fevents]
        factors[target] = train_factor(data, target, cond, inventory.values(target), heldout_every)
    return factors


def _map_words(fevents, inventory):
    w = inventory.word
    return [(e._replace(h1=w(e.h1), h2=e.h2 if e.h2 == NONE else w(e.h2)), inh) for e, inh in fevents]


def train_hbg(events, grammar, tables=None, parent_mode=IMMEDIATE, stopping=StoppingRule(),
              heldout_every=10, report=None, width=16):
    """Train all five HBG factors from ``(HistoryTuple, DerivationEvent)`` pairs."""
    fevents = _factor_events(events)
    if not fevents:
        raise ValueError("no events to train on")
    words = {e.h1 for e, _ in fevents} | {e.h2 for e, _ in fevents if e.h2 != NONE}
    inventory = Inventory.build(grammar, words)
    tables = tables or default_tables(grammar, inventory.vocabulary, width)
    encoder = HistoryEncoder(tables, grammar.max_arity)
    fevents = _map_words(fevents, inventory)
    tree = grow([(tuple(e[:6]), e.rule, (e.syn, e.sem)) for e, _ in fevents], encoder,
                rules=grammar.rule_ids, stopping=stopping, heldout_every=heldout_every,
                report=report if report is not None else GrowReport())
    factors = _train_factors([f for f in HBG_FACTORS if f[0] != "R"], fevents, inventory, heldout_every)
    return HbgModel(grammar, factors, tree, inventory, parent_mode)


def train_simple_model(events, grammar, parent_mode=IMMEDIATE, heldout_every=10):
    fevents = _factor_events(events)
    if not fevents:
        raise ValueError("no events to train on")
    words = {e.h1 for e, _ in fevents} | {e.h2 for e, _ in fevents if e.h2 != NONE}
    inventory = Inventory.build(grammar, words)
    fevents = _map_words(fevents, inventory)
    factors = _train_factors(SIMPLE_FACTORS, fevents, inventory, heldout_every)
    return SimpleHeadModel(grammar, factors, inventory, parent_mode)


def tree_logprob_hbg(model, tree):
    from .chart import tree_logprob
    return tree_logprob(model, tree)


# -- bundles ---------------------------------------------------------------------------

def save_bundle(model, directory, extra=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {"kind": model.kind, "parent_mode": model.parent_mode,
                "vocabulary": list(model.inventory.vocabulary), "lambdas": {}}
    for target, f in model.factors.items():
        (d / f"factor_{target}.json").write_text(json.dumps(f.to_json(), indent=1), encoding="utf-8")
        manifest["lambdas"][target] = [[b[0], b[1], w] for b, w in sorted(f.lambdas.items())]
    if isinstance(model, HbgModel):
        model.tree.save(d / "tree.txt")
        write_bitstrings(model.tree.encoder.tables, d / "bitstrings.txt")
        manifest["width"] = model.tree.encoder.width
        manifest["tree_lambdas"] = {n.id: n.lam for n in model.tree.nodes()}
    manifest.update(extra or {})
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")


def load_bundle(directory, grammar):
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    inventory = Inventory.build(grammar, manifest["vocabulary"])
    spec = HBG_FACTORS if manifest["kind"] == "hbg" else SIMPLE_FACTORS
    factors = {}
    for target, _ in spec:
        path = d / f"factor_{target}.json"
        if path.exists():
            factors[target] = FactorModel.from_json(json.loads(path.read_text(encoding="utf-8")))
    if manifest["kind"] == "hbg":
        tables = load_manual_bitstrings(d / "bitstrings.txt")
        tree = DecisionTree.load(d / "tree.txt", HistoryEncoder(tables, grammar.max_arity))
        return HbgModel(grammar, factors, tree, inventory, manifest["parent_mode"])
    return SimpleHeadModel(grammar, factors, inventory, manifest["parent_mode"])

