"""History-based grammar parsing: chart parsing, P-CFG training and HBG models."""

__version__ = "0.1.0"

from .grammar import Grammar, GrammarError, load_grammar, parse_grammar  # noqa: E402
from .treebank import LabelMap, RefTree, read_corpus  # noqa: E402
from .chart import count_parses, parse_all, viterbi  # noqa: E402
from .pcfg import PcfgModel, estimate_rf, inside_outside_constrained  # noqa: E402
from .hbg import HbgModel, SimpleHeadModel, train_hbg, train_simple_model  # noqa: E402

__all__ = [
    "Grammar", "GrammarError", "load_grammar", "parse_grammar",
    "LabelMap", "RefTree", "read_corpus",
    "count_parses", "parse_all", "viterbi",
    "PcfgModel", "estimate_rf", "inside_outside_constrained",
    "HbgModel", "SimpleHeadModel", "train_hbg", "train_simple_model",
]
