"""Decision trees over single-bit questions about a history.

A question asks for one bit of the code of one history field.  Growing picks,
at every node, the question with the largest drop in the entropy of the rule
(conditional on the constituent category when categories are supplied).
Leaf distributions interpolate recursively with their ancestors down to a
uniform floor; the interpolation weights are tied by count bucket and fitted
by EM on held-out events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clusters import BitstringError
from .history import HISTORY_FIELDS, NONE, TOP

FIELD_NAMESPACE = {"syn_p": "syn", "sem_p": "sem", "rule_p": "rule", "h1_p": "word", "h2_p": "word"}
UNKNOWN_WORD = "<unk>"


@dataclass(frozen=True)
class StoppingRule:
    min_leaf: int = 10
    min_gain: float = 1e-4
    max_depth: int = 24


class HistoryEncoder:
    """Maps history fields to bit vectors through the bitstring tables."""

    def __init__(self, tables, max_arity):
        self.tables = tables
        widths = {t.width for t in tables.values()}
        if len(widths) != 1:
            raise BitstringError(f"bitstring tables have different widths {sorted(widths)}")
        self.width = widths.pop()
        self.ipc_bits = max(1, math.ceil(math.log2(max_arity + 1)))
        self.questions = [(f, b) for f in HISTORY_FIELDS
                          for b in range(self.ipc_bits if f == "child_index" else self.width)]
        self._cache = {}

    def field_code(self, name, value):
        if name == "child_index":
            if not 0 <= value < 1 << self.ipc_bits:
                raise BitstringError(f"child index {value} does not fit in {self.ipc_bits} bits")
            return format(value, f"0{self.ipc_bits}b")
        table = self.tables[FIELD_NAMESPACE[name]]
        if value not in table and FIELD_NAMESPACE[name] == "word" and UNKNOWN_WORD in table:
            value = UNKNOWN_WORD
        return table.code(value)

    def encode(self, history):
        """Bit vector (numpy bool array) in question order."""
        if history not in self._cache:
            bits = "".join(self.field_code(f, v) for f, v in zip(HISTORY_FIELDS, history))
            self._cache[history] = np.frombuffer(bits.encode(), dtype=np.uint8) == ord("1")
        return self._cache[history]


def reserved_symbols(namespace):
    if namespace == "word":
        return [TOP, NONE, UNKNOWN_WORD]
    return [TOP]


@dataclass
class Node:
    id: int
    counts: np.ndarray
    question: int | None = None  # index into the encoder's question list
    left: "Node | None" = None  # bit 0
    right: "Node | None" = None  # bit 1
    lam: float = 1.0
    depth: int = 0
    entropy: float = 0.0

    @property
    def is_leaf(self):
        return self.question is None


def _entropy_rows(counts):
    """Entropy (nats) of each row of a count matrix."""
    n = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(counts > 0, counts / n, 0.0)
        logs = np.where(counts > 0, np.log(np.where(counts > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=-1)


def split_entropy(labels_onehot, cats_onehot, mask):
    """Weighted child entropy for every column of ``mask`` (events x questions).

    With categories, ``labels_onehot`` must encode the joint (rule, category)
    outcome, so that the result is the conditional entropy of the rule.
    """
    m = mask.astype(float)
    n = labels_onehot.shape[0]
    ones = m.T @ labels_onehot
    zeros = labels_onehot.sum(axis=0)[None, :] - ones
    n1 = ones.sum(axis=1)
    n0 = n - n1
    h = n1 * _entropy_rows(ones) + n0 * _entropy_rows(zeros)
    if cats_onehot is not None:
        c1 = m.T @ cats_onehot
        c0 = cats_onehot.sum(axis=0)[None, :] - c1
        h -= n1 * _entropy_rows(c1) + n0 * _entropy_rows(c0)
    return h / n, n0, n1


def node_entropy(labels_onehot, cats_onehot):
    h = float(_entropy_rows(labels_onehot.sum(axis=0)))
    if cats_onehot is not None:
        h -= float(_entropy_rows(cats_onehot.sum(axis=0)))
    return h


class DecisionTree:
    def __init__(self, encoder, rules, root):
        self.encoder = encoder
        self.rules = tuple(rules)
        self.rule_index = {r: i for i, r in enumerate(self.rules)}
        self.root = root
        self._dist = {}
        self._leaf_memo = {}

    # -- traversal --

    def nodes(self):
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            if not n.is_leaf:
                stack.extend((n.right, n.left))

    def leaves(self):
        return [n for n in self.nodes() if n.is_leaf]

    def path(self, history):
        bits = self.encoder.encode(history)
        node = self.root
        out = [node]
        while not node.is_leaf:
            node = node.right if bits[node.question] else node.left
            out.append(node)
        return out

    def classify(self, history):
        if history not in self._leaf_memo:
            self._leaf_memo[history] = self.path(history)[-1].id
        return self._leaf_memo[history]

    # -- probabilities --

    def _node_dists(self):
        if not self._dist:
            k = len(self.rules)

            def fill(node, parent):
                n = node.counts.sum()
                ml = node.counts / n if n > 0 else parent
                dist = node.lam * ml + (1 - node.lam) * parent
                self._dist[node.id] = dist
                if not node.is_leaf:
                    fill(node.left, dist)
                    fill(node.right, dist)

            fill(self.root, np.full(k, 1.0 / k))
        return self._dist

    def node_distribution(self, node_id):
        return self._node_dists()[node_id]

    def distribution(self, history, support=None):
        """Smoothed rule distribution at the leaf of ``history``, optionally renormalized over ``support``."""
        dist = self._node_dists()[self.classify(history)]
        if support is None:
            return dict(zip(self.rules, dist))
        sub = {r: dist[self._idx(r)] for r in support}
        z = sum(sub.values())
        return {r: v / z for r, v in sub.items()}

    def _idx(self, rule):
        try:
            return self.rule_index[rule]
        except KeyError:
            raise KeyError(f"unknown rule {rule!r}") from None

    def rule_prob(self, history, rule, support=None):
        dist = self._node_dists()[self.classify(history)]
        p = dist[self._idx(rule)]
        if support is None:
            return float(p)
        z = sum(dist[self._idx(r)] for r in support)
        return float(p / z)

    def set_lambdas(self, lams):
        for node in self.nodes():
            node.lam = float(lams[node.id])
        self._dist.clear()

    # -- serialization --

    def dumps(self):
        out = [f"# rules={' '.join(self.rules)}"]
        for n in self.nodes():
            counts = " ".join(f"{self.rules[i]}:{int(c)}" for i, c in enumerate(n.counts) if c)
            if n.is_leaf:
                out.append(f"L {n.id} {n.lam!r} {counts}".rstrip())
            else:
                f, b = self.encoder.questions[n.question]
                out.append(f"N {n.id} {f} {b} {n.lam!r} {counts}".rstrip())
        return "\n".join(out) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text, encoder):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# rules="):
            raise ValueError("tree file must start with a '# rules=' header")
        rules = lines[0][len("# rules="):].split()
        index = {r: i for i, r in enumerate(rules)}
        qindex = {q: i for i, q in enumerate(encoder.questions)}
        it = iter(lines[1:])

        def counts_of(items):
            v = np.zeros(len(rules))
            for item in items:
                r, _, c = item.rpartition(":")
                v[index[r]] = float(c)
            return v

        def build(depth):
            parts = next(it).split()
            if parts[0] == "L":
                return Node(int(parts[1]), counts_of(parts[3:]), lam=float(parts[2]), depth=depth)
            q = qindex[(parts[2], int(parts[3]))]
            node = Node(int(parts[1]), counts_of(parts[5:]), q, lam=float(parts[4]), depth=depth)
            node.left = build(depth + 1)
            node.right = build(depth + 1)
            return node

        return cls(encoder, rules, build(0))

    @classmethod
    def load(cls, path, encoder):
        return cls.loads(Path(path).read_text(encoding="utf-8"), encoder)


# -- growing ------------------------------------------------------------------------

@dataclass
class GrowReport:
    splits: list = field(default_factory=list)  # (node id, parent entropy, weighted child entropy)
    heldout: int = 0
    lambdas: dict = field(default_factory=dict)  # bucket -> lambda


def _split_events(events, heldout_every):
    if heldout_every and len(events) >= 2 * heldout_every:
        train = [e for i, e in enumerate(events) if i % heldout_every != heldout_every - 1]
        held = [e for i, e in enumerate(events) if i % heldout_every == heldout_every - 1]
        return train, held
    return list(events), []


def grow(events, encoder, rules=None, stopping=StoppingRule(), heldout_every=10, report=None):
    """Grow a tree from ``(history, rule)`` or ``(history, rule, category)`` events.

    Every ``heldout_every``-th event is held out to fit the smoothing weights.
    With categories, splits minimize the rule entropy given the category.
    """
    if not events:
        raise ValueError("cannot grow a tree from no events")
    rules = tuple(sorted({e[1] for e in events} | set(rules or ())))
    rindex = {r: i for i, r in enumerate(rules)}
    train, held = _split_events(events, heldout_every)
    use_cats = all(len(e) > 2 for e in events)
    cats = sorted({e[2] for e in events}) if use_cats else []
    cindex = {c: i for i, c in enumerate(cats)}

    X = np.array([encoder.encode(e[0]) for e in train], dtype=bool)
    Y = np.zeros((len(train), len(rules)))
    Y[np.arange(len(train)), [rindex[e[1]] for e in train]] = 1
    C = None
    J = Y  # outcome whose entropy is measured: the rule, or (rule, category)
    if use_cats:
        C = np.zeros((len(train), len(cats)))
        C[np.arange(len(train)), [cindex[e[2]] for e in train]] = 1
        joint = sorted({(e[1], e[2]) for e in train})
        jindex = {rc: i for i, rc in enumerate(joint)}
        J = np.zeros((len(train), len(joint)))
        J[np.arange(len(train)), [jindex[(e[1], e[2])] for e in train]] = 1

    report = report if report is not None else GrowReport()
    next_id = [0]

    def build(idx, depth):
        node = Node(next_id[0], Y[idx].sum(axis=0), depth=depth)
        next_id[0] += 1
        yi = J[idx]
        ci = C[idx] if C is not None else None
        node.entropy = node_entropy(yi, ci)
        if depth >= stopping.max_depth or len(idx) < 2 * stopping.min_leaf or node.entropy <= 0:
            return node
        child_h, n0, n1 = split_entropy(yi, ci, X[idx])
        gains = node.entropy - child_h
        valid = (n0 >= max(1, stopping.min_leaf)) & (n1 >= max(1, stopping.min_leaf))
        if not valid.any():
            return node
        gains = np.where(valid, gains, -np.inf)
        top = gains.max()
        if top < stopping.min_gain:
            return node
        q = int(np.flatnonzero(gains >= top - 1e-12)[0])
        if child_h[q] > node.entropy + 1e-9:
            raise AssertionError("split increased entropy")
        report.splits.append((node.id, node.entropy, float(child_h[q])))
        node.question = q
        bit = X[idx, q]
        node.left = build(idx[~bit], depth + 1)
        node.right = build(idx[bit], depth + 1)
        return node

    root = build(np.arange(len(train)), 0)
    tree = DecisionTree(encoder, rules, root)
    report.heldout = len(held)
    report.lambdas = fit_lambdas(tree, [(e[0], e[1]) for e in held])
    return tree


def count_bucket(n):
    return min(int(math.log2(n + 1)), 30)


def fit_lambdas(tree, heldout, iterations=50):
    """EM for the per-bucket interpolation weights on held-out ``(history, rule)`` pairs.

    Buckets with no held-out evidence keep a default of n / (n + distinct rules).
    """
    k = len(tree.rules)
    nodes = list(tree.nodes())
    bucket = {n.id: count_bucket(int(n.counts.sum())) for n in nodes}
    ml = {n.id: (n.counts / n.counts.sum() if n.counts.sum() > 0 else None) for n in nodes}
    default = {}
    for n in nodes:
        tot = n.counts.sum()
        default[n.id] = float(tot / (tot + np.count_nonzero(n.counts))) if tot > 0 else 0.0
    # per held-out event: the ML probabilities along its root-to-leaf path
    paths = []
    for h, r in heldout:
        ri = tree._idx(r)
        paths.append([(n.id, ml[n.id][ri] if ml[n.id] is not None else None) for n in tree.path(h)])
    lam_b = {}
    for b in sorted(set(bucket.values())):
        lam_b[b] = 0.5
    seen_buckets = {bucket[nid] for p in paths for nid, v in p if v is not None}
    for _ in range(iterations if paths else 0):
        stop = {b: 0.0 for b in lam_b}
        reach = {b: 0.0 for b in lam_b}
        for p in paths:
            # leaf first; a node stops the back-off chain with probability lambda
            levels = [(nid, v) for nid, v in reversed(p) if v is not None]
            stops, rem = [], 1.0
            for nid, v in levels:
                lam = lam_b[bucket[nid]]
                stops.append(rem * lam * v)
                rem *= 1 - lam
            total = sum(stops) + rem / k
            if total <= 0:
                continue
            suffix = rem / k
            for (nid, _), s in reversed(list(zip(levels, stops))):
                suffix += s
                b = bucket[nid]
                reach[b] += suffix / total
                stop[b] += s / total
        new = {b: (stop[b] / reach[b] if reach[b] > 0 else lam_b[b]) for b in lam_b}
        if max(abs(new[b] - lam_b[b]) for b in lam_b) < 1e-8:
            lam_b = new
            break
        lam_b = new
    lams = {}
    for n in nodes:
        b = bucket[n.id]
        lam = lam_b[b] if b in seen_buckets else default[n.id]
        # strictly below one, so the uniform floor keeps every rule positive
        lams[n.id] = min(float(lam), 1 - 1e-6)
    tree.set_lambdas(lams)
    return {b: float(lam_b[b]) for b in sorted(seen_buckets)}


def best_root_question(events, encoder, min_leaf=1):
    """Exhaustive search for the single split with the lowest weighted child entropy.

    Pure-Python reference used to cross-check the vectorized search.
    """
    use_cats = all(len(e) > 2 for e in events)

    def ent(group):
        def h(keys):
            tot = len(keys)
            counts = {}
            for k in keys:
                counts[k] = counts.get(k, 0) + 1
            return -sum(c / tot * math.log(c / tot) for c in counts.values())
        out = h([(e[1], e[2]) if use_cats else e[1] for e in group])
        if use_cats:
            out -= h([e[2] for e in group])
        return out

    best = None
    for q, (f, b) in enumerate(encoder.questions):
        one = [e for e in events if encoder.field_code(f, getattr(e[0], f))[b] == "1"]
        zero = [e for e in events if encoder.field_code(f, getattr(e[0], f))[b] == "0"]
        if len(one) < min_leaf or len(zero) < min_leaf:
            continue
        score = (len(one) * ent(one) + len(zero) * ent(zero)) / len(events)
        if best is None or score < best[1] - 1e-12:
            best = (q, score)
    return best
