"""The three-model comparison: P-CFG, the simple head model and HBG."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from ..clusters import DEFAULT_WIDTH, collect_bigrams, mi_cluster
from ..dtree import StoppingRule
from ..hbg import default_tables, train_hbg, train_simple_model
from ..history import FUNCTIONAL, extract_events
from ..pcfg import DEFAULT_ALPHA, estimate_rf, inside_outside_constrained
from ..treebank import LabelMap
from .metrics import evaluate
from .synthetic import SyntheticSpec, gen_synthetic, synthetic_grammar

log = logging.getLogger(__name__)

MODEL_NAMES = ("P-CFG", "Simple", "HBG")


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_train: int = 500
    n_test: int = 400
    alpha: float = DEFAULT_ALPHA
    io_iterations: int = 2
    parent_mode: str = FUNCTIONAL
    width: int = DEFAULT_WIDTH
    clusters: int = 4
    min_leaf: int = 10
    min_gain: float = 1e-4
    max_depth: int = 24
    heldout_every: int = 10


def train_models(train, grammar, cfg, labelmap=None):
    labelmap = labelmap or LabelMap(identity=True)
    pcfg = estimate_rf(train, grammar, labelmap, cfg.alpha)
    pcfg = inside_outside_constrained(train, grammar, pcfg, cfg.io_iterations, labelmap)
    events = extract_events(train, grammar, pcfg, labelmap, cfg.parent_mode)
    clustering = mi_cluster(collect_bigrams(t for t, _ in train),
                            min(cfg.clusters, len({w for t, _ in train for w in t})), cfg.width)
    vocab = sorted({w for t, _ in train for w in t})
    tables = default_tables(grammar, vocab, cfg.width, word_table=clustering.table)
    stopping = StoppingRule(cfg.min_leaf, cfg.min_gain, cfg.max_depth)
    hbg = train_hbg(events, grammar, tables, cfg.parent_mode, stopping, cfg.heldout_every)
    simple = train_simple_model(events, grammar, cfg.parent_mode, cfg.heldout_every)
    return {"P-CFG": pcfg, "Simple": simple, "HBG": hbg}


def run_experiment(cfg=None, spec=None):
    cfg = cfg or ExperimentConfig()
    spec = spec or SyntheticSpec()
    started = time.perf_counter()
    grammar = synthetic_grammar(spec)
    corpus = gen_synthetic(spec, cfg.seed, cfg.n_train + cfg.n_test, grammar)
    train, test = corpus[:cfg.n_train], corpus[cfg.n_train:]
    models = train_models(train, grammar, cfg)
    report = evaluate(test, grammar, models, baseline="P-CFG")
    log.info("experiment seed=%d finished in %.1fs", cfg.seed, time.perf_counter() - started)
    return report, models
