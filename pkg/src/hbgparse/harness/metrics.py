"""Coverage, accuracy and ambiguity metrics, and the evaluation report."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..chart import count_parses, parse_all, restrict, viterbi
from ..treebank import LabelMap, consistent


def error_reduction(baseline, improved):
    """Share of the baseline's errors removed, in percent."""
    if baseline >= 100:
        raise ValueError("error reduction is undefined for a baseline of 100%")
    return 100.0 * (improved - baseline) / (100.0 - baseline)


def _percent(hits, total):
    return 100.0 * hits / total if total else 0.0


def parse_base(corpus, grammar, counts=None):
    """Geometric mean of parses per word; sentences without a parse are left out."""
    counts = counts if counts is not None else [count_parses(parse_all(t, grammar)) for t, _ in corpus]
    logs = words = 0
    for (tokens, _), c in zip(corpus, counts):
        if c > 0:
            logs += math.log(c)
            words += len(tokens)
    return math.exp(logs / words) if words else float("nan")


def any_consistent_rate(corpus, grammar, labelmap=None, labeled=True):
    labelmap = labelmap or LabelMap(identity=True)
    hits = sum(not restrict(parse_all(t, grammar), ref, labelmap, labeled).empty for t, ref in corpus)
    return _percent(hits, len(corpus))


def viterbi_rate(corpus, grammar, model, labelmap=None, labeled=True):
    labelmap = labelmap or LabelMap(identity=True)
    hits = 0
    for tokens, ref in corpus:
        best = viterbi(parse_all(tokens, grammar), model)
        hits += best is not None and consistent(best[0], ref, labelmap, labeled)
    return _percent(hits, len(corpus))


@dataclass
class EvalReport:
    sentences_total: int = 0
    sentences_skipped: int = 0  # no parse at all
    any_consistent_rate: float = 0.0
    any_consistent_unlabeled: float = 0.0
    parse_base: float = float("nan")
    viterbi: dict = field(default_factory=dict)  # model name -> labeled rate
    viterbi_unlabeled: dict = field(default_factory=dict)
    baseline: str | None = None

    def error_reductions(self):
        if self.baseline not in self.viterbi:
            return {}
        b = self.viterbi[self.baseline]
        return {name: error_reduction(b, r) for name, r in self.viterbi.items()
                if name != self.baseline and b < 100}

    def table(self):
        names = list(self.viterbi)
        width = max([len("Error reduction")] + [len(n) for n in names]) + 2
        lines = ["".ljust(width) + "".join(n.rjust(12) for n in names),
                 "Viterbi rate".ljust(width) + "".join(f"{self.viterbi[n]:11.1f}%" for n in names)]
        red = self.error_reductions()
        if red:
            lines.append("Error reduction".ljust(width) + "".join(
                (f"{red[n]:11.1f}%" if n in red else "".rjust(12)) for n in names))
        return "\n".join(lines)

    def key_values(self):
        kv = {
            "sentences_total": self.sentences_total,
            "sentences_skipped": self.sentences_skipped,
            "any_consistent_rate": round(self.any_consistent_rate, 4),
            "any_consistent_unlabeled": round(self.any_consistent_unlabeled, 4),
            "parse_base": round(self.parse_base, 6),
        }
        for n, r in self.viterbi.items():
            kv[f"viterbi_rate[{n}]"] = round(r, 4)
            kv[f"viterbi_rate_unlabeled[{n}]"] = round(self.viterbi_unlabeled[n], 4)
        for n, r in self.error_reductions().items():
            kv[f"error_reduction[{n}]"] = round(r, 4)
        return kv

    def render(self):
        return self.table() + "\n\n" + "\n".join(f"{k}={v}" for k, v in self.key_values().items()) + "\n"


def evaluate(corpus, grammar, models, labelmap=None, baseline=None):
    """Evaluate every model in ``models`` (name -> model) on one test corpus."""
    labelmap = labelmap or LabelMap(identity=True)
    report = EvalReport(sentences_total=len(corpus), baseline=baseline)
    hits = {n: 0 for n in models}
    hits_u = {n: 0 for n in models}
    covered = covered_u = 0
    counts = []
    for tokens, ref in corpus:
        forest = parse_all(tokens, grammar)
        counts.append(count_parses(forest))
        if forest.empty:
            report.sentences_skipped += 1
            continue
        covered += not restrict(forest, ref, labelmap, True).empty
        covered_u += not restrict(forest, ref, labelmap, False).empty
        for name, model in models.items():
            tree, _ = viterbi(forest, model)
            hits[name] += consistent(tree, ref, labelmap, True)
            hits_u[name] += consistent(tree, ref, labelmap, False)
    report.any_consistent_rate = _percent(covered, len(corpus))
    report.any_consistent_unlabeled = _percent(covered_u, len(corpus))
    report.parse_base = parse_base(corpus, grammar, counts)
    report.viterbi = {n: _percent(h, len(corpus)) for n, h in hits.items()}
    report.viterbi_unlabeled = {n: _percent(h, len(corpus)) for n, h in hits_u.items()}
    return report
