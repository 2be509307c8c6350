"""Command-line entry point: ``hbgparse <command> [options]``.

Settings come from an optional INI file (section ``[hbgparse]``) and are
overridden by flags.  Every command that writes an output also writes
``<output>.manifest.json`` with the seed, library versions and a hash of
the resolved settings.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..chart import parse_all, tree_to_reftree, viterbi
from ..clusters import (DEFAULT_WIDTH, collect_bigrams, load_manual_bitstrings, mi_cluster,
                        validation_report, write_bitstrings)
from ..dtree import GrowReport, HistoryEncoder, StoppingRule, grow
from ..grammar import format_grammar, load_grammar
from ..hbg import (_factor_events, default_tables, load_bundle, save_bundle, train_hbg,
                   train_simple_model)
from ..history import IMMEDIATE, NONE, PARENT_MODES, TOP, extract_events, read_events, write_events
from ..pcfg import DEFAULT_ALPHA, PcfgModel, estimate_rf, inside_outside_constrained
from ..treebank import LabelMap, format_reftree, read_corpus, write_corpus
from .experiment import ExperimentConfig, run_experiment
from .metrics import evaluate
from .synthetic import SyntheticSpec, gen_synthetic, synthetic_grammar

log = logging.getLogger("hbgparse")

EXIT_COVERAGE = 2

DEFAULTS = {
    "seed": 0,
    "alpha": DEFAULT_ALPHA,
    "width": DEFAULT_WIDTH,
    "parent_mode": IMMEDIATE,
    "iterations": 3,
    "clusters": 4,
    "min_leaf": 10,
    "min_gain": 1e-4,
    "max_depth": 24,
    "heldout_every": 10,
    "min_coverage": 0.0,
}
TYPES = {"seed": int, "alpha": float, "width": int, "parent_mode": str, "iterations": int,
         "clusters": int, "min_leaf": int, "min_gain": float, "max_depth": int,
         "heldout_every": int, "min_coverage": float}


def resolve_settings(args):
    """Defaults, then the config file, then explicit flags."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise SystemExit(f"cannot read config file {args.config}")
        if cp.has_section("hbgparse"):
            for key, value in cp.items("hbgparse"):
                if key not in TYPES:
                    raise SystemExit(f"unknown config key {key!r}")
                settings[key] = TYPES[key](value)
    for key in TYPES:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["parent_mode"] not in PARENT_MODES:
        raise SystemExit(f"parent_mode must be one of {PARENT_MODES}")
    return settings


def write_manifest(output, command, settings, extra=None):
    blob = json.dumps(settings, sort_keys=True)
    manifest = {
        "command": command,
        "seed": settings["seed"],
        "versions": {"hbgparse": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "config": settings,
    }
    manifest.update(extra or {})
    path = Path(output)
    target = path / "run.manifest.json" if path.is_dir() else path.with_name(path.name + ".manifest.json")
    target.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return target


def _labelmap(args):
    return LabelMap.load(args.labelmap) if getattr(args, "labelmap", None) else LabelMap(identity=True)


def _stopping(s):
    return StoppingRule(s["min_leaf"], s["min_gain"], s["max_depth"])


def _load_model(path, grammar):
    p = Path(path)
    return load_bundle(p, grammar) if p.is_dir() else PcfgModel.load(p, grammar)


# -- commands ------------------------------------------------------------------------

def cmd_gen(args, s):
    spec = SyntheticSpec.from_json(Path(args.spec).read_text()) if args.spec else SyntheticSpec()
    grammar = synthetic_grammar(spec)
    corpus = gen_synthetic(spec, s["seed"], args.n, grammar)
    write_corpus(corpus, args.out)
    if args.grammar_out:
        Path(args.grammar_out).write_text(format_grammar(grammar), encoding="utf-8")
    write_manifest(args.out, "gen", s, {"sentences": len(corpus)})
    print(f"wrote {len(corpus)} sentences to {args.out}")


def cmd_train_pcfg(args, s):
    grammar = load_grammar(args.grammar)
    corpus = read_corpus(args.corpus)
    model = estimate_rf(corpus, grammar, _labelmap(args), s["alpha"])
    model.save(args.out)
    write_manifest(args.out, "train-pcfg", s, {"skipped": model.skipped})
    print(f"trained P-CFG on {len(corpus) - model.skipped} sentences ({model.skipped} skipped)")


def cmd_io_train(args, s):
    grammar = load_grammar(args.grammar)
    corpus = read_corpus(args.corpus)
    init = PcfgModel.load(args.init, grammar) if args.init else PcfgModel.uniform(grammar, s["alpha"])
    model = inside_outside_constrained(corpus, grammar, init, s["iterations"], _labelmap(args), s["alpha"])
    model.save(args.out)
    write_manifest(args.out, "io-train", s, {"loglik": model.loglik_history, "skipped": model.skipped})
    for i, ll in enumerate(model.loglik_history):
        print(f"iteration {i}: loglik={ll:.6f}")


def cmd_extract_events(args, s):
    grammar = load_grammar(args.grammar)
    corpus = read_corpus(args.corpus)
    model = _load_model(args.model, grammar)
    report = {}
    events = extract_events(corpus, grammar, model, _labelmap(args), s["parent_mode"], report)
    write_events(events, args.out)
    write_manifest(args.out, "extract-events", s, {"events": len(events), **report})
    print(f"wrote {len(events)} events ({report['skipped']} sentences skipped)")


def cmd_cluster(args, s):
    sentences = [t for t, _ in read_corpus(args.corpus)]
    stats = collect_bigrams(sentences)
    leaves = min(s["clusters"], len(stats.unigrams))
    result = mi_cluster(stats, leaves, s["width"])
    tables = {"word": result.table}
    if args.manual:
        tables.update(load_manual_bitstrings(args.manual, width=s["width"]))
    write_bitstrings(tables, args.out)
    write_manifest(args.out, "cluster", s, {"ami": result.ami_history[-1], "classes": len(result.classes)})
    print(validation_report(tables))


def _tables(args, grammar, events, s):
    vocab = sorted(({e.h1 for e, _ in events} | {e.h2 for e, _ in events}) - {NONE, TOP})
    manual = load_manual_bitstrings(args.bitstrings) if args.bitstrings else {}
    return default_tables(grammar, vocab, s["width"], manual=manual)


def cmd_grow_tree(args, s):
    grammar = load_grammar(args.grammar)
    events = _factor_events(read_events(args.events))
    tables = _tables(args, grammar, events, s)
    encoder = HistoryEncoder(tables, grammar.max_arity)
    report = GrowReport()
    tree = grow([(tuple(e[:6]), e.rule, (e.syn, e.sem)) for e, _ in events], encoder,
                rules=grammar.rule_ids, stopping=_stopping(s), heldout_every=s["heldout_every"],
                report=report)
    tree.save(args.out)
    write_manifest(args.out, "grow-tree", s, {"nodes": sum(1 for _ in tree.nodes()),
                                             "leaves": len(tree.leaves()), "lambdas": report.lambdas})
    print(f"grew a tree with {sum(1 for _ in tree.nodes())} nodes and {len(tree.leaves())} leaves")


def cmd_train_hbg(args, s):
    grammar = load_grammar(args.grammar)
    raw = read_events(args.events)
    if args.simple:
        model = train_simple_model(raw, grammar, s["parent_mode"], s["heldout_every"])
    else:
        tables = _tables(args, grammar, _factor_events(raw), s)
        model = train_hbg(raw, grammar, tables, s["parent_mode"], _stopping(s), s["heldout_every"])
    save_bundle(model, args.out, {"width": s["width"]})
    write_manifest(args.out, "train-hbg", s, {"kind": model.kind, "events": len(raw)})
    print(f"wrote {model.kind} model bundle to {args.out}")


def cmd_parse(args, s):
    grammar = load_grammar(args.grammar)
    model = _load_model(args.model, grammar)
    labelmap = _labelmap(args)
    out = []
    for line in Path(args.input).read_text(encoding="utf-8").splitlines():
        tokens = line.split()
        if not tokens:
            continue
        result = viterbi(parse_all(tokens, grammar), model)
        if result is None:
            out.append(f"# no parse: {line.strip()}")
        else:
            tree, score = result
            out.append(f"{format_reftree(tree_to_reftree(tree, labelmap))} # logprob={score:.6f}")
    text = "\n".join(out) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(args.out, "parse", s)
    else:
        sys.stdout.write(text)


def cmd_eval(args, s):
    grammar = load_grammar(args.grammar)
    corpus = read_corpus(args.corpus)
    models = {}
    for item in args.model:
        name, sep, path = item.partition("=")
        if not sep:
            raise SystemExit(f"--model expects NAME=PATH, got {item!r}")
        models[name] = _load_model(path, grammar)
    report = evaluate(corpus, grammar, models, _labelmap(args), args.baseline)
    text = report.render()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(args.out, "eval", s, report.key_values())
    if report.any_consistent_rate < s["min_coverage"]:
        log.error("any-consistent rate %.1f%% is below the threshold %.1f%%",
                  report.any_consistent_rate, s["min_coverage"])
        return EXIT_COVERAGE
    return 0


def cmd_experiment(args, s):
    rows = []
    for seed in args.seeds:
        cfg = ExperimentConfig(seed=seed, n_train=args.n_train, n_test=args.n_test, alpha=s["alpha"],
                               parent_mode=s["parent_mode"], width=s["width"], clusters=s["clusters"],
                               min_leaf=s["min_leaf"], min_gain=s["min_gain"], max_depth=s["max_depth"],
                               heldout_every=s["heldout_every"])
        report, _ = run_experiment(cfg)
        print(f"seed {seed}")
        print(report.table())
        rows.append({"seed": seed, **report.key_values()})
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
        write_manifest(args.out, "experiment", s)


# -- argument parsing -------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [hbgparse] section")
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", type=float, help="additive smoothing for the P-CFG")
    common.add_argument("--width", type=int, help="bitstring width")
    common.add_argument("--parent-mode", dest="parent_mode", choices=PARENT_MODES)
    common.add_argument("--labelmap", help="mnemonic-to-treebank label map file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hbgparse", description="History-based grammar parsing toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic corpus")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--spec", help="JSON generator spec")
    g.add_argument("--grammar-out", help="also write the analysis grammar")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train-pcfg", parents=[common], help="relative-frequency P-CFG")
    t.add_argument("--grammar", required=True)
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_pcfg)

    io = sub.add_parser("io-train", parents=[common], help="treebank-constrained inside-outside")
    io.add_argument("--grammar", required=True)
    io.add_argument("--corpus", required=True)
    io.add_argument("--init", help="starting P-CFG (uniform if omitted)")
    io.add_argument("--iterations", type=int)
    io.add_argument("--out", required=True)
    io.set_defaults(func=cmd_io_train)

    e = sub.add_parser("extract-events", parents=[common], help="training events from consistent parses")
    e.add_argument("--grammar", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--model", required=True, help="P-CFG file or model bundle")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_extract_events)

    c = sub.add_parser("cluster", parents=[common], help="mutual-information word bitstrings")
    c.add_argument("--corpus", required=True)
    c.add_argument("--clusters", type=int, help="number of leaf classes")
    c.add_argument("--manual", help="manual syn/sem/rule bitstrings to validate and merge")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cluster)

    for name, func, helptext in (("grow-tree", cmd_grow_tree, "grow the rule decision tree"),
                                 ("train-hbg", cmd_train_hbg, "train an HBG or simple-model bundle")):
        x = sub.add_parser(name, parents=[common], help=helptext)
        x.add_argument("--grammar", required=True)
        x.add_argument("--events", required=True)
        x.add_argument("--bitstrings", help="bitstring table file")
        x.add_argument("--min-leaf", dest="min_leaf", type=int)
        x.add_argument("--min-gain", dest="min_gain", type=float)
        x.add_argument("--max-depth", dest="max_depth", type=int)
        x.add_argument("--heldout-every", dest="heldout_every", type=int)
        x.add_argument("--out", required=True)
        if name == "train-hbg":
            x.add_argument("--simple", action="store_true", help="train the simple head model instead")
        x.set_defaults(func=func)

    pa = sub.add_parser("parse", parents=[common], help="Viterbi-parse one sentence per line")
    pa.add_argument("--grammar", required=True)
    pa.add_argument("--model", required=True)
    pa.add_argument("--input", required=True)
    pa.add_argument("--out")
    pa.set_defaults(func=cmd_parse)

    ev = sub.add_parser("eval", parents=[common], help="coverage and accuracy report")
    ev.add_argument("--grammar", required=True)
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--model", action="append", default=[], help="NAME=PATH, repeatable")
    ev.add_argument("--baseline", help="model name used for error reduction")
    ev.add_argument("--min-coverage", dest="min_coverage", type=float,
                    help="exit with status 2 when the any-consistent rate is below this percentage")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    ex = sub.add_parser("experiment", parents=[common], help="run the synthetic three-model comparison")
    ex.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ex.add_argument("--n-train", dest="n_train", type=int, default=500)
    ex.add_argument("--n-test", dest="n_test", type=int, default=400)
    ex.add_argument("--clusters", type=int)
    ex.add_argument("--out")
    ex.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    settings = resolve_settings(args)
    return args.func(args, settings) or 0


if __name__ == "__main__":
    sys.exit(main())
