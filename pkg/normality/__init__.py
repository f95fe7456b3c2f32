"""Finite-state selectors, gamblers and normality statistics over symbol sequences."""
from __future__ import annotations

from .core import (
    Alphabet,
    BernoulliMeasure,
    GuardError,
    RandomSource,
    SymbolStream,
    ValidationError,
    Word,
    measure_of_word,
    uniform_measure,
    validate_measure,
)
from .automata import (
    Dfa,
    Gambler,
    ProductAlphabet,
    Selector,
    delta_star,
    join_measure,
    join_streams,
    log_capital_trajectory,
    neutralize_except,
    project,
    select,
)
from .probabilistic import (
    Pfa,
    ProbabilisticGambler,
    ProbabilisticSelector,
    enumerate_function_tables,
    exact_select_distribution,
    lift_gambler,
    lift_selector,
    run_pfa_gamble,
    run_pfa_select,
)
from .stats import bfreq, freq, kl_divergence, nbocc, normality_deviation, stream_profile
from .adversary import attack, build_suffix_gambler, estimate_cluster_point, find_minimal_divergent_word
from .analysis import (
    balancedness_estimate,
    build_chain,
    classify_trajectory,
    expected_decay_exponent,
    stationary,
    visit_frequencies,
)

__all__ = [
    "Alphabet", "BernoulliMeasure", "GuardError", "RandomSource", "SymbolStream", "ValidationError", "Word",
    "measure_of_word", "uniform_measure", "validate_measure",
    "Dfa", "Gambler", "ProductAlphabet", "Selector", "delta_star", "join_measure", "join_streams",
    "log_capital_trajectory", "neutralize_except", "project", "select",
    "Pfa", "ProbabilisticGambler", "ProbabilisticSelector", "enumerate_function_tables",
    "exact_select_distribution", "lift_gambler", "lift_selector", "run_pfa_gamble", "run_pfa_select",
    "bfreq", "freq", "kl_divergence", "nbocc", "normality_deviation", "stream_profile",
    "attack", "build_suffix_gambler", "estimate_cluster_point", "find_minimal_divergent_word",
    "balancedness_estimate", "build_chain", "classify_trajectory", "expected_decay_exponent", "stationary",
    "visit_frequencies",
]
