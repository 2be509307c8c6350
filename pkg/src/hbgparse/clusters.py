"""Bitstring codes: mutual-information word clustering and manual category codes.

Every namespace shares one width ``W``; a code is a string of ``W`` 0/1
characters whose leading bits name the coarsest distinctions, so decision
tree questions can address "bit k of field f" uniformly.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

DEFAULT_WIDTH = 16
BOS = "<s>"
EOS = "</s>"
NAMESPACES = ("word", "syn", "sem", "rule")


class BitstringError(ValueError):
    pass


@dataclass
class BitstringTable:
    namespace: str
    width: int
    codes: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = {}
        for sym, bits in self.codes.items():
            if len(bits) != self.width or set(bits) - {"0", "1"}:
                raise BitstringError(f"{self.namespace} {sym}: code {bits!r} is not {self.width} bits")
            if bits in seen:
                raise BitstringError(f"{self.namespace}: duplicate code {bits} for {seen[bits]!r} and {sym!r}")
            seen[bits] = sym

    def __contains__(self, symbol):
        return symbol in self.codes

    def __len__(self):
        return len(self.codes)

    def code(self, symbol):
        try:
            return self.codes[symbol]
        except KeyError:
            raise BitstringError(f"no {self.namespace} code for {symbol!r}") from None

    def as_int(self, symbol):
        return int(self.code(symbol), 2)

    def with_reserved(self, symbols):
        """Copy with extra symbols given the highest unused codes."""
        codes = dict(self.codes)
        used = set(codes.values())
        nxt = (1 << self.width) - 1
        for sym in symbols:
            if sym in codes:
                continue
            while nxt >= 0 and format(nxt, f"0{self.width}b") in used:
                nxt -= 1
            if nxt < 0:
                raise BitstringError(f"{self.namespace}: no free code left for {sym!r}")
            codes[sym] = format(nxt, f"0{self.width}b")
            used.add(codes[sym])
        return BitstringTable(self.namespace, self.width, codes)


def balanced_codes(namespace, symbols, width=DEFAULT_WIDTH):
    """Codes that are the binary index of each symbol in the given order."""
    symbols = list(dict.fromkeys(symbols))
    if len(symbols) > 1 << width:
        raise BitstringError(f"{len(symbols)} {namespace} symbols do not fit in {width} bits")
    bits = max(1, math.ceil(math.log2(len(symbols)))) if symbols else 1
    return BitstringTable(namespace, width,
                          {s: format(i, f"0{bits}b").ljust(width, "0") for i, s in enumerate(symbols)})


def similar_pairs(table):
    """Pairs whose codes differ only in the least significant bit."""
    by_prefix = {}
    for sym, bits in sorted(table.codes.items()):
        by_prefix.setdefault(bits[:-1], []).append(sym)
    return [tuple(v) for v in by_prefix.values() if len(v) == 2]


def validation_report(tables):
    lines = []
    for ns in sorted(tables):
        t = tables[ns]
        lines.append(f"{ns}: {len(t)} codes, width {t.width}")
        for a, b in similar_pairs(t):
            lines.append(f"  similar: {a} {b}")
    return "\n".join(lines)


def write_bitstrings(tables, path):
    lines = []
    for ns in sorted(tables):
        for sym, bits in sorted(tables[ns].codes.items()):
            lines.append(f"{ns} {sym} {bits}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manual_bitstrings(path, required=None, width=None):
    """Read ``namespace symbol bits`` lines into one table per namespace.

    ``required`` maps namespace -> symbols that must be present.
    """
    raw = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("//", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise BitstringError(f"line {lineno}: expected 'namespace symbol bits'")
        ns, sym, bits = parts
        if width is not None and len(bits) != width:
            raise BitstringError(f"line {lineno}: code for {sym!r} has {len(bits)} bits, expected {width}")
        if sym in raw.setdefault(ns, {}):
            raise BitstringError(f"line {lineno}: {ns} symbol {sym!r} listed twice")
        raw[ns][sym] = bits
    tables = {}
    for ns, codes in raw.items():
        widths = {len(b) for b in codes.values()}
        if len(widths) > 1:
            raise BitstringError(f"{ns}: codes of different widths {sorted(widths)}")
        tables[ns] = BitstringTable(ns, widths.pop(), codes)
    for ns, symbols in (required or {}).items():
        missing = sorted(set(symbols) - set(tables.get(ns, BitstringTable(ns, 1)).codes))
        if missing:
            raise BitstringError(f"{ns}: no code for {missing[0]!r}" +
                                 (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    return tables


# -- bigram statistics ------------------------------------------------------------

@dataclass
class BigramStats:
    unigrams: Counter
    bigrams: Counter

    def scaled(self, k):
        return BigramStats(Counter({w: c * k for w, c in self.unigrams.items()}),
                           Counter({b: c * k for b, c in self.bigrams.items()}))


def collect_bigrams(sentences):
    uni, bi = Counter(), Counter()
    for sent in sentences:
        toks = [BOS, *sent, EOS]
        uni.update(sent)
        bi.update(zip(toks, toks[1:]))
    return BigramStats(uni, bi)


# -- greedy agglomerative clustering ----------------------------------------------------

def _plogp_ratio(p, pl, pr):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p * np.log(p / (pl * pr))
    return np.where(p > 0, out, 0.0)


def average_mutual_information(matrix):
    """AMI of a class bigram matrix (rows: left class, columns: right class)."""
    total = matrix.sum()
    p = matrix / total
    pl = p.sum(axis=1, keepdims=True)
    pr = p.sum(axis=0, keepdims=True)
    return float(_plogp_ratio(p, pl, pr).sum())


@dataclass
class Clustering:
    table: BitstringTable
    classes: list  # final classes as sorted word tuples
    merges: list  # (class a, class b, AMI after) in merge order
    ami_history: list


def _class_matrix(stats, classes):
    words = [w for c in classes for w in c]
    index = {w: i for i, c in enumerate(classes) for w in c}
    n = len(classes)
    index[BOS], index[EOS] = n, n + 1
    m = np.zeros((n + 2, n + 2))
    for (a, b), c in stats.bigrams.items():
        if a in index and b in index:
            m[index[a], index[b]] += c
    return m, words


def mi_cluster(stats, num_leaves, width=DEFAULT_WIDTH):
    """Greedy bigram-MI clustering of the vocabulary into ``num_leaves`` classes.

    Each step merges the pair of classes whose union loses the least average
    mutual information; equal losses go to the lexicographically smallest
    pair.  Sentence boundaries are a fixed class that never merges.  A word's
    code is its class index followed by its path in the merge tree of its
    class, padded with zeros to ``width``.
    """
    vocab = sorted(stats.unigrams)
    if not 1 <= num_leaves <= max(1, len(vocab)):
        raise ValueError(f"num_leaves must lie in [1, {len(vocab)}]")
    if not vocab or sum(stats.bigrams.values()) == 0:
        raise ValueError("degenerate bigram statistics: no counts")
    classes = [(w,) for w in vocab]
    trees = {c: c[0] for c in classes}  # class -> nested merge tree
    m, _ = _class_matrix(stats, classes)
    total = m.sum()
    p = m / total
    history = [average_mutual_information(m)]
    merges = []
    while len(classes) > num_leaves:
        i, j, ami = _best_merge(p, classes, history[-1])
        a, b = classes[i], classes[j]
        merged = tuple(sorted(a + b))
        trees[merged] = (trees.pop(a), trees.pop(b))
        # fold column/row j into i, then drop j
        p[i, :] += p[j, :]
        p[:, i] += p[:, j]
        p = np.delete(np.delete(p, j, axis=0), j, axis=1)
        classes[i] = merged
        del classes[j]
        order = sorted(range(len(classes)), key=lambda k: classes[k])
        classes = [classes[k] for k in order]
        keep = order + [len(order), len(order) + 1]
        p = p[np.ix_(keep, keep)]
        history.append(ami)
        merges.append((a, b, ami))

    index_bits = math.ceil(math.log2(len(classes))) if len(classes) > 1 else 0
    codes = {}
    for ci, c in enumerate(classes):
        prefix = format(ci, f"0{index_bits}b") if index_bits else ""
        for word, path in _paths(trees[c]):
            bits = prefix + path
            if len(bits) > width:
                raise BitstringError(f"code for {word!r} needs {len(bits)} bits; width is {width}")
            codes[word] = bits.ljust(width, "0")
    return Clustering(BitstringTable("word", width, codes), classes, merges, history)


def _paths(tree, prefix=""):
    if isinstance(tree, str):
        return [(tree, prefix)]
    left, right = tree
    return _paths(left, prefix + "0") + _paths(right, prefix + "1")


def _best_merge(p, classes, ami):
    """Index pair (i < j) of the cheapest merge and the AMI after it."""
    n = len(classes)
    pl = p.sum(axis=1)
    pr = p.sum(axis=0)
    q = _plogp_ratio(p, pl[:, None], pr[None, :])
    rq, cq = q.sum(axis=1), q.sum(axis=0)
    best = None
    for i in range(n - 1):
        js = np.arange(i + 1, n)
        removed = rq[i] + rq[js] + cq[i] + cq[js] - q[i, i] - q[i, js] - q[js, i] - q[js, js]
        plk = pl[i] + pl[js]  # (J,)
        prk = pr[i] + pr[js]
        row = p[i][None, :] + p[js]  # (J, C) merged row
        col = p[:, i][None, :] + p[:, js].T  # (J, C) merged column
        row_q = _plogp_ratio(row, plk[:, None], pr[None, :])
        col_q = _plogp_ratio(col, pl[None, :], prk[:, None])
        # exclude the two merged indices from the off-diagonal sums
        mask = np.ones((len(js), p.shape[0]), dtype=bool)
        mask[:, i] = False
        mask[np.arange(len(js)), js] = False
        pkk = p[i, i] + p[i, js] + p[js, i] + p[js, js]
        kk = _plogp_ratio(pkk, plk, prk)
        added = (row_q * mask).sum(axis=1) + (col_q * mask).sum(axis=1) + kk
        after = ami - removed + added
        for jj, val in zip(js, after):
            val = float(val)
            if best is None or val > best[2] + 1e-12 * (1 + abs(best[2])):
                best = (i, int(jj), val)
            elif val >= best[2] - 1e-12 * (1 + abs(best[2])):
                if (classes[i], classes[jj]) < (classes[best[0]], classes[best[1]]):
                    best = (i, int(jj), val)
    return best


def brute_force_partition(stats, num_classes):
    """Partition of the vocabulary into ``num_classes`` classes with the highest AMI (tiny inputs only)."""
    vocab = sorted(stats.unigrams)
    best = None

    def partitions(items, k):
        if not items:
            if k == 0:
                yield []
            return
        first, rest = items[0], items[1:]
        for part in partitions(rest, k - 1):
            yield [(first,)] + part
        for part in partitions(rest, k):
            for idx in range(len(part)):
                yield part[:idx] + [(first,) + part[idx]] + part[idx + 1:]

    for part in partitions(vocab, num_classes):
        classes = sorted(tuple(sorted(c)) for c in part)
        ami = average_mutual_information(_class_matrix(stats, classes)[0])
        if best is None or ami > best[0] + 1e-12:
            best = (ami, classes)
    return best


def merge_losses(stats, classes):
    """AMI after each possible merge of two classes, recomputed from scratch."""
    out = {}
    for a, b in combinations(range(len(classes)), 2):
        merged = [c for k, c in enumerate(classes) if k not in (a, b)] + [tuple(sorted(classes[a] + classes[b]))]
        out[(classes[a], classes[b])] = average_mutual_information(_class_matrix(stats, sorted(merged))[0])
    return out
