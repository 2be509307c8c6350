import argparse
import json
import math

import pytest

from hbgparse.chart import enumerate_parses, parse_all, tree_to_reftree
from hbgparse.harness.cli import DEFAULTS, EXIT_COVERAGE, main, resolve_settings
from hbgparse.harness.metrics import (EvalReport, any_consistent_rate, error_reduction, evaluate,
                                      parse_base, viterbi_rate)
from hbgparse.harness.synthetic import SyntheticSpec, gen_synthetic, synthetic_grammar
from hbgparse.pcfg import PcfgModel
from hbgparse.treebank import parse_record, read_corpus
from helpers import fixture_grammar

# -- error reduction -------------------------------------------------------------------


@pytest.mark.parametrize("base, new, want", [
    (59.8, 74.6, 36.8159), (60, 75, 37.5), (0, 50, 50.0), (50, 50, 0.0), (90, 100, 100.0),
])
def test_error_reduction(base, new, want):
    assert error_reduction(base, new) == pytest.approx(want, abs=1e-3)


def test_error_reduction_can_be_negative():
    assert error_reduction(80, 60) == pytest.approx(-100.0)


def test_error_reduction_undefined_at_perfect_baseline():
    with pytest.raises(ValueError):
        error_reduction(100, 100)


# -- parse base ----------------------------------------------------------------------------

def test_parse_base_sqrt_two():
    corpus = [(["a", "b"], None), (["c", "d"], None)]
    assert parse_base(corpus, None, counts=[4, 1]) == pytest.approx(math.sqrt(2))


def test_parse_base_twelve_words():
    corpus = [(["w"] * 12, None)]
    assert parse_base(corpus, None, counts=[23]) == pytest.approx(23 ** (1 / 12))
    assert parse_base(corpus, None, counts=[23]) == pytest.approx(1.2987, abs=1e-4)


def test_parse_base_is_a_per_word_geometric_mean():
    corpus = [(["w"] * 3, None), (["w"] * 5, None), (["w"] * 2, None)]
    counts = [4, 30, 1]
    want = math.exp((math.log(4) + math.log(30)) / 10)
    assert parse_base(corpus, None, counts) == pytest.approx(want)
    # order and duplication do not matter
    assert parse_base(corpus[::-1], None, counts[::-1]) == pytest.approx(want)
    assert parse_base(corpus * 2, None, counts * 2) == pytest.approx(want)


def test_parse_base_skips_unparsed_and_counts_from_grammar():
    g = fixture_grammar("pp")
    corpus = [("I saw man with telescope".split(), None), ("saw saw".split(), None)]
    assert parse_base(corpus, g) == pytest.approx(2 ** (1 / 5))
    assert math.isnan(parse_base([(["x"], None)], None, counts=[0]))


# -- coverage and accuracy ------------------------------------------------------------------

def attach_corpus(sites):
    """PP sentences whose reference attaches the phrase at ``sites`` ('v' or 'n')."""
    g = fixture_grammar("pp")
    sentences = ["I saw man with telescope", "man saw I with telescope",
                 "telescope saw man with I", "I saw telescope with man"]
    corpus = []
    for s, site in zip(sentences, sites):
        rule = "vp_pp" if site == "v" else "np_pp"
        trees = enumerate_parses(parse_all(s.split(), g), 10)
        tree = next(t for t in trees if any(n.production.rule_id == rule for n in t.nodes()))
        corpus.append((s.split(), tree_to_reftree(tree)))
    return g, corpus


def verb_attach_pcfg(g):
    probs = dict(PcfgModel.uniform(g).probs)
    for k in probs:
        probs[k] = {"vp_pp": 0.9, "vp": 0.1, "np_pp": 0.1, "np": 0.9}.get(k[0], probs[k])
    return PcfgModel(g, probs)


def test_three_of_four():
    g, corpus = attach_corpus("vvvn")
    m = verb_attach_pcfg(g)
    assert viterbi_rate(corpus, g, m) == 75.0
    assert any_consistent_rate(corpus, g) == 100.0


def test_one_uncovered_of_four():
    g, corpus = attach_corpus("vvv")
    corpus.append(("I saw man".split(), parse_record("[S [X I_N saw_V X] [NP man_N NP] S]")))
    assert any_consistent_rate(corpus, g) == 75.0
    assert viterbi_rate(corpus, g, verb_attach_pcfg(g)) == 75.0


def test_adversarial_model_never_right_but_coverage_full():
    g, corpus = attach_corpus("nnnn")
    m = verb_attach_pcfg(g)
    assert viterbi_rate(corpus, g, m) == 0.0
    assert any_consistent_rate(corpus, g) == 100.0


def test_unparsable_sentence_counts_against_both():
    g, corpus = attach_corpus("vvvv")
    corpus.append((["saw"], parse_record("[S [VP saw_V VP] S]")))
    m = verb_attach_pcfg(g)
    assert any_consistent_rate(corpus, g) == 80.0
    report = evaluate(corpus, g, {"pcfg": m})
    assert report.sentences_skipped == 1 and report.viterbi["pcfg"] == 80.0


def test_evaluate_report():
    g, corpus = attach_corpus("vvnn")
    report = evaluate(corpus, g, {"verb": verb_attach_pcfg(g), "uniform": PcfgModel.uniform(g)},
                      baseline="uniform")
    assert report.viterbi["verb"] == 50.0
    assert report.viterbi["verb"] <= report.any_consistent_rate
    assert report.parse_base == pytest.approx(2 ** (1 / 5))
    text = report.render()
    assert "Viterbi rate" in text and "any_consistent_rate=100.0" in text
    assert "error_reduction[verb]" in text
    assert "verb" in report.error_reductions()


def test_empty_report_renders():
    assert "Viterbi rate" in EvalReport().render()


# -- synthetic corpora ----------------------------------------------------------------------

def test_gen_synthetic_is_deterministic():
    a = gen_synthetic(seed=5, n=30)
    b = gen_synthetic(seed=5, n=30)
    c = gen_synthetic(seed=6, n=30)
    assert [t for t, _ in a] == [t for t, _ in b]
    assert [t for t, _ in a] != [t for t, _ in c]


def test_gen_synthetic_zero():
    assert gen_synthetic(n=0) == []


def test_synthetic_corpus_is_fully_covered():
    g = synthetic_grammar()
    corpus = gen_synthetic(seed=1, n=40, grammar=g)
    assert any_consistent_rate(corpus, g) == 100.0
    assert all(len(t) == 5 for t, _ in corpus)


def test_synthetic_spec_round_trip():
    spec = SyntheticSpec()
    assert SyntheticSpec.from_json(spec.to_json()) == spec


# -- settings -------------------------------------------------------------------------------

def ns(**kw):
    base = {k: None for k in DEFAULTS}
    base.update(config=None)
    base.update(kw)
    return argparse.Namespace(**base)


def test_settings_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[hbgparse]\nalpha = 0.5\nseed = 9\n")
    s = resolve_settings(ns(config=str(cfg), seed=3))
    assert s["alpha"] == 0.5 and s["seed"] == 3 and s["width"] == DEFAULTS["width"]


def test_settings_reject_unknown_key(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[hbgparse]\ncolour = red\n")
    with pytest.raises(SystemExit):
        resolve_settings(ns(config=str(cfg)))


# -- the command line -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    p = {k: str(d / v) for k, v in dict(
        train="train.txt", test="test.txt", grammar="g.grammar", pcfg="pcfg.txt", io="io.txt",
        events="events.tsv", bits="bits.txt", tree="tree.txt", hbg="hbg", simple="simple",
        sents="sents.txt", parsed="parsed.txt", report="report.txt").items()}
    common = ["--min-leaf", "5"]
    assert main(["gen", "--n", "120", "--seed", "1", "--out", p["train"], "--grammar-out", p["grammar"]]) == 0
    assert main(["gen", "--n", "40", "--seed", "2", "--out", p["test"]]) == 0
    assert main(["train-pcfg", "--grammar", p["grammar"], "--corpus", p["train"], "--out", p["pcfg"]]) == 0
    assert main(["io-train", "--grammar", p["grammar"], "--corpus", p["train"], "--init", p["pcfg"],
                 "--iterations", "1", "--out", p["io"]]) == 0
    assert main(["extract-events", "--grammar", p["grammar"], "--corpus", p["train"], "--model", p["io"],
                 "--parent-mode", "functional", "--out", p["events"]]) == 0
    assert main(["cluster", "--corpus", p["train"], "--clusters", "4", "--out", p["bits"]]) == 0
    assert main(["grow-tree", "--grammar", p["grammar"], "--events", p["events"], *common,
                 "--out", p["tree"]]) == 0
    assert main(["train-hbg", "--grammar", p["grammar"], "--events", p["events"], "--bitstrings", p["bits"],
                 "--parent-mode", "functional", *common, "--out", p["hbg"]]) == 0
    assert main(["train-hbg", "--simple", "--grammar", p["grammar"], "--events", p["events"],
                 "--parent-mode", "functional", "--out", p["simple"]]) == 0
    return p


def test_cli_pipeline_writes_manifests(pipeline):
    m = json.loads(open(pipeline["train"] + ".manifest.json").read())
    assert m["command"] == "gen" and m["seed"] == 1 and len(m["config_hash"]) == 64
    assert "numpy" in m["versions"]
    assert len(read_corpus(pipeline["train"])) == 120
    assert json.loads(open(pipeline["hbg"] + "/run.manifest.json").read())["kind"] == "hbg"
    io = json.loads(open(pipeline["io"] + ".manifest.json").read())
    assert io["loglik"] == sorted(io["loglik"])


def test_cli_parse(pipeline, capsys):
    with open(pipeline["sents"], "w") as f:
        f.write("sx1 va1 ob1 with pi1\n\nnot a sentence\n")
    assert main(["parse", "--grammar", pipeline["grammar"], "--model", pipeline["hbg"],
                 "--input", pipeline["sents"]]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    assert "# logprob=" in lines[0] and lines[1].startswith("# no parse")


def test_cli_eval_and_coverage_exit(pipeline, capsys):
    models = ["--model", f"P-CFG={pipeline['io']}", "--model", f"HBG={pipeline['hbg']}",
              "--model", f"Simple={pipeline['simple']}"]
    args = ["eval", "--grammar", pipeline["grammar"], "--corpus", pipeline["test"], *models,
            "--baseline", "P-CFG"]
    assert main(args + ["--out", pipeline["report"]]) == 0
    out = capsys.readouterr().out
    assert "viterbi_rate[HBG]" in out and "error_reduction[HBG]" in out
    assert main(args + ["--min-coverage", "100"]) == 0
    assert main(args + ["--min-coverage", "100.5"]) == EXIT_COVERAGE


def test_cli_rejects_bad_model_spec(pipeline):
    with pytest.raises(SystemExit):
        main(["eval", "--grammar", pipeline["grammar"], "--corpus", pipeline["test"], "--model", "nope"])


def test_cli_experiment(tmp_path, capsys):
    out = tmp_path / "exp.json"
    assert main(["experiment", "--seeds", "0", "--n-train", "150", "--n-test", "30", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert rows[0]["seed"] == 0 and "viterbi_rate[HBG]" in rows[0]
    assert "Viterbi rate" in capsys.readouterr().out
