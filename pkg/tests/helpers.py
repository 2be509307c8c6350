"""Shared oracles and fixture builders for the test suite."""
from __future__ import annotations

import math
import random
import zlib
from functools import lru_cache
from pathlib import Path

from hbgparse.grammar import load_grammar, parse_grammar
from hbgparse.history import IMMEDIATE

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_grammar(name):
    return load_grammar(FIXTURES / f"{name}.grammar")


class HashModel:
    """History-dependent scores drawn from a hash: an adversarial model for search tests."""

    uses_history = True

    def __init__(self, parent_mode=IMMEDIATE, salt=0):
        self.parent_mode = parent_mode
        self.salt = salt

    def constituent_logprob(self, history, constituent, inherited=(False, False)):
        h = zlib.crc32(repr((self.salt, tuple(history), tuple(constituent), tuple(inherited))).encode())
        return -0.1 - 3.0 * (h % 10007) / 10007


def random_pcfg_probs(grammar, rng):
    """Random positive rule probabilities, normalized per lhs mnemonic."""
    from hbgparse.pcfg import PcfgModel

    probs = {}
    for lhs, keys in PcfgModel.support(grammar).items():
        w = [rng.uniform(0.05, 1.0) for _ in keys]
        z = sum(w)
        probs.update({k: x / z for k, x in zip(keys, w)})
    return PcfgModel(grammar, probs)


def random_grammar(rng, n_nts=3, n_rules=7, terminals=("a", "b")):
    """A random grammar over S, X, Y, ... with mixed arities and possibly unit cycles."""
    nts = ["S", "X", "Y", "Z"][:n_nts]
    lines = ["#syn", " ".join(nts), "#sem", "x", "#start", "S", "#rules"]
    rules = set()
    # one lexical rule per non-terminal keeps most of them productive
    for nt in nts:
        rules.add((nt, (rng.choice(terminals),)))
    while len(rules) < n_rules + n_nts:
        lhs = rng.choice(nts)
        arity = rng.choice([1, 2, 2, 2, 3])
        rhs = tuple(rng.choice(nts + list(terminals)) if arity > 1 else rng.choice(nts)
                    for _ in range(arity))
        rules.add((lhs, rhs))
    seen = set()
    for i, (lhs, rhs) in enumerate(sorted(rules)):
        cat = "" if lhs in seen else f"[{lhs},x]"
        seen.add(lhs)
        n = len(rhs)
        h1 = rng.randrange(n) + 1
        h2 = rng.choice(["none"] + [str(k + 1) for k in range(n)])
        lines.append(f"r{i} : {lhs}{cat} -> {' '.join(rhs)} ; h1={h1} h2={h2}")
    return parse_grammar("\n".join(lines) + "\n")


def brute_force_count(grammar, tokens):
    """Number of parse trees by top-down recursion over the grammar (no forest).

    Unit chains may not repeat a non-terminal, matching the parser's convention.
    """
    tokens = tuple(tokens)
    nts = grammar.nonterminals
    by_lhs = grammar.by_lhs

    @lru_cache(maxsize=None)
    def count(label, i, j, chain):
        total = 0
        for p in by_lhs.get(label, ()):
            if len(p.rhs) == 1 and p.rhs[0] in nts:
                child = p.rhs[0]
                if child not in chain:
                    total += count(child, i, j, chain | frozenset([child]))
                continue
            total += seq(p.rhs, 0, i, j)
        return total

    @lru_cache(maxsize=None)
    def seq(rhs, d, i, j):
        if d == len(rhs):
            return 1 if i == j else 0
        sym = rhs[d]
        remaining = len(rhs) - d - 1
        total = 0
        if sym not in nts:
            if i < j and tokens[i] == sym:
                total += seq(rhs, d + 1, i + 1, j)
            return total
        for k in range(i + 1, j - remaining + 1):
            c = count(sym, i, k, frozenset([sym]))
            if c:
                total += c * seq(rhs, d + 1, k, j)
        return total

    return sum(count(lab, 0, len(tokens), frozenset([lab])) for lab in grammar.start_labels)


def random_fixture(rng, max_tokens=10, max_parses=200):
    """(grammar, tokens, forest) with 1..max_parses parses."""
    from hbgparse.chart import count_parses, parse_all

    while True:
        g = random_grammar(rng, n_nts=rng.choice([2, 3, 4]), n_rules=rng.randint(4, 9))
        for _ in range(10):
            tokens = [rng.choice(sorted(g.terminals)) for _ in range(rng.randint(1, max_tokens))]
            forest = parse_all(tokens, g)
            n = count_parses(forest)
            if 1 <= n <= max_parses:
                return g, tokens, forest


def encoding(tree):
    """Production indices in preorder: a canonical identity for a parse."""
    return tuple(n.production.index for n in tree.nodes())


def logsumexp(xs):
    xs = list(xs)
    m = max(xs)
    return m + math.log(sum(math.exp(x - m) for x in xs))


def fresh_rng(seed):
    return random.Random(seed)
