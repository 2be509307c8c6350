"""P-CFG over mnemonic productions: relative-frequency and constrained EM estimation."""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from pathlib import Path

from .chart import best_consistent, parse_all, restrict
from .treebank import LabelMap

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.01


def _keyer(grammar):
    """``(rule_id, lhs mnemonic, rhs)`` with non-terminals replaced by their mnemonics."""
    nts = grammar.nonterminals

    def key(p):
        return (p.rule_id, p.lhs.mnemonic,
                tuple(nts[s].mnemonic if s in nts else s for s in p.rhs))
    return key


class PcfgModel:
    """Rule probabilities conditioned only on the lhs mnemonic."""

    uses_history = False
    parent_mode = "immediate"

    def __init__(self, grammar, probs, alpha=DEFAULT_ALPHA, iterations=0):
        self.grammar = grammar
        self.key = _keyer(grammar)
        self.probs = dict(probs)
        self.alpha = alpha
        self.iterations = iterations
        self.skipped = 0
        self.loglik_history = []
        self._logp = {}

    # -- construction --

    @classmethod
    def support(cls, grammar):
        """lhs mnemonic -> sorted list of production keys."""
        key = _keyer(grammar)
        out = defaultdict(set)
        for p in grammar.productions:
            k = key(p)
            out[k[1]].add(k)
        return {lhs: sorted(keys) for lhs, keys in out.items()}

    @classmethod
    def from_counts(cls, grammar, counts, alpha=DEFAULT_ALPHA, iterations=0):
        """(c + alpha) / (lhs count + alpha * k); uniform when the denominator is zero."""
        probs = {}
        for lhs, keys in cls.support(grammar).items():
            total = sum(counts.get(k, 0.0) for k in keys)
            denom = total + alpha * len(keys)
            for k in keys:
                probs[k] = (counts.get(k, 0.0) + alpha) / denom if denom > 0 else 1.0 / len(keys)
        return cls(grammar, probs, alpha, iterations)

    @classmethod
    def uniform(cls, grammar, alpha=DEFAULT_ALPHA):
        return cls.from_counts(grammar, {}, alpha)

    # -- scoring --

    def prob(self, production):
        try:
            return self.probs[self.key(production)]
        except KeyError:
            raise KeyError(f"production outside the model support: {production}") from None

    def production_logprob(self, production):
        idx = production.index
        if idx not in self._logp:
            p = self.prob(production)
            self._logp[idx] = math.log(p) if p > 0 else -math.inf
        return self._logp[idx]

    def constituent_logprob(self, history, constituent):
        raise TypeError("a P-CFG scores productions, not constituents; use production_logprob")

    def lhs_totals(self):
        out = defaultdict(float)
        for k, p in self.probs.items():
            out[k[1]] += p
        return dict(out)

    # -- io --

    def save(self, path):
        lines = [f"# alpha={self.alpha!r} iterations={self.iterations}"]
        for (rule, lhs, rhs), p in sorted(self.probs.items()):
            lines.append(f"{rule} {lhs} -> {' '.join(rhs)} : {p!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, grammar):
        alpha, iterations = DEFAULT_ALPHA, 0
        probs = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if line.startswith("#"):
                for item in line[1:].split():
                    k, _, v = item.partition("=")
                    if k == "alpha":
                        alpha = float(v)
                    elif k == "iterations":
                        iterations = int(v)
                continue
            if not line.strip():
                continue
            head, sep, prob = line.rpartition(" : ")
            left, arrow, rhs = head.partition(" -> ")
            if not sep or not arrow or len(left.split()) != 2:
                raise ValueError(f"line {lineno}: expected 'rule lhs -> rhs : prob'")
            rule, lhs = left.split()
            probs[(rule, lhs, tuple(rhs.split()))] = float(prob)
        missing = set(k for keys in cls.support(grammar).values() for k in keys) - set(probs)
        if missing:
            raise ValueError(f"model file lacks {len(missing)} productions, e.g. {sorted(missing)[0]}")
        return cls(grammar, probs, alpha, iterations)


def tree_logprob_pcfg(tree, model):
    return sum(model.production_logprob(node.production) for node in tree.nodes())


def _check_usable(n_used, what):
    if n_used == 0:
        raise ValueError(f"no usable sentences for {what}: every sentence lacked a consistent parse")


def estimate_rf(corpus, grammar, labelmap=None, alpha=DEFAULT_ALPHA, model=None):
    """Relative-frequency estimate from the most likely consistent parse of each sentence.

    ``model`` picks that parse; the uniform model is used when it is None.
    """
    labelmap = labelmap or LabelMap(identity=True)
    chooser = model or PcfgModel.uniform(grammar, alpha)
    key = _keyer(grammar)
    counts = Counter()
    skipped = 0
    for tokens, ref in corpus:
        tree = best_consistent(parse_all(tokens, grammar), chooser, ref, labelmap)
        if tree is None:
            skipped += 1
            continue
        counts.update(key(n.production) for n in tree.nodes())
    _check_usable(len(corpus) - skipped, "relative-frequency estimation")
    if skipped:
        log.warning("estimate_rf: skipped %d sentence(s) without a consistent parse", skipped)
    out = PcfgModel.from_counts(grammar, counts, alpha)
    out.skipped = skipped
    return out


# -- inside-outside on the consistent sub-forest ------------------------------------

def _logsumexp(values):
    values = [v for v in values if v != -math.inf]
    if not values:
        return -math.inf
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


def _topological(forest):
    """Items ordered children-first."""
    order, seen = [], set()
    for root in forest.roots:
        stack = [(root, False)]
        while stack:
            item, done = stack.pop()
            if done:
                order.append(item)
                continue
            if item in seen:
                continue
            seen.add(item)
            stack.append((item, True))
            for _, kids in forest.nodes[item]:
                for k in kids:
                    if not isinstance(k, int) and k not in seen:
                        stack.append((k, False))
    return order


def expected_counts(forest, model):
    """Posterior expected production-key counts and the log of the total inside mass."""
    order = _topological(forest)
    inside = {}
    for item in order:
        inside[item] = _logsumexp(
            model.production_logprob(p) + sum(inside[k] for k in kids if not isinstance(k, int))
            for p, kids in forest.nodes[item])
    z = _logsumexp(inside[r] for r in forest.roots)
    counts = Counter()
    if z == -math.inf:
        return counts, z
    outside = defaultdict(lambda: -math.inf)
    for r in forest.roots:
        outside[r] = 0.0
    for item in reversed(order):
        out = outside[item]
        if out == -math.inf:
            continue
        for p, kids in forest.nodes[item]:
            inner = model.production_logprob(p) + sum(inside[k] for k in kids if not isinstance(k, int))
            if inner == -math.inf:
                continue
            counts[model.key(p)] += math.exp(out + inner - z)
            for d, k in enumerate(kids):
                if isinstance(k, int):
                    continue
                rest = inner - inside[k]
                outside[k] = _logsumexp([outside[k], out + rest])
    return counts, z


def inside_outside_constrained(corpus, grammar, init, iterations, labelmap=None, alpha=None):
    """EM reestimation where only parses consistent with the references contribute.

    Returns the final model; its ``loglik_history`` holds the constrained corpus
    log-likelihood before each update (and after the last one).
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    labelmap = labelmap or LabelMap(identity=True)
    alpha = init.alpha if alpha is None else alpha
    if iterations == 0:
        return init
    forests = []
    skipped = 0
    for tokens, ref in corpus:
        sub = restrict(parse_all(tokens, grammar), ref, labelmap)
        if sub.empty:
            skipped += 1
            continue
        forests.append(sub)
    _check_usable(len(forests), "inside-outside")
    if skipped:
        log.warning("inside-outside: skipped %d sentence(s) with an empty consistent sub-forest", skipped)

    model = init
    history = []
    for it in range(iterations):
        total = Counter()
        ll = 0.0
        for f in forests:
            c, z = expected_counts(f, model)
            total.update(c)
            ll += z
        history.append(ll)
        model = PcfgModel.from_counts(grammar, total, alpha, init.iterations + it + 1)
    history.append(sum(expected_counts(f, model)[1] for f in forests))
    model.loglik_history = history
    model.skipped = skipped
    return model
