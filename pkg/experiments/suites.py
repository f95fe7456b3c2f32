"""Experiment suites: each runs one family of checks over a battery and returns rows plus a summary."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable

import numpy as np

from normality.adversary import CLUSTER_LAST, attack
from normality.analysis import (
    CONSTANT,
    DECAY,
    GROWTH,
    balancedness_estimate,
    build_chain,
    classify_trajectory,
    ergodic_check,
    expected_decay_exponent,
    stationary,
    visit_frequencies,
)
from normality.automata import (
    Gambler,
    Selector,
    join_measure,
    join_streams,
    log_capital_trajectory,
    project,
    select,
)
from normality.automaton_io import Battery
from normality.core import (
    Alphabet,
    BernoulliMeasure,
    RandomSource,
    ValidationError,
    Word,
    measure_from_text,
    parse_weights,
    uniform_measure,
)
from normality.generators import build_source, champernowne_stream, periodic_stream
from normality.probabilistic import (
    ProbabilisticGambler,
    ProbabilisticSelector,
    derandomized_select,
    exact_select_distribution,
    run_pfa_gamble,
    run_pfa_select,
    sample_select_distribution,
    total_variation,
)
from normality.stats import (
    balance_deviation,
    bfreq,
    normality_deviation,
    profile_symbols,
    stream_profile,
)
from normality.trials import run_trials

from . import ExperimentConfig
from .derand_cmd import compare_lifted, tv_ok

logger = logging.getLogger(__name__)

COIN_LANE = 1


@dataclass
class SuiteResult:
    rows: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed", False))


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _param(ctx: ExperimentConfig, key: str, default: Any) -> Any:
    return ctx.experiment.get(key, default)


def _alphabet_for(text: Any) -> Alphabet:
    if isinstance(text, str) and text.strip().lower() == "uniform":
        return Alphabet.of_size(2)
    return Alphabet.of_size(len(parse_weights(text)))


def _measure(ctx: ExperimentConfig, text: Any, exact: bool | None = None) -> BernoulliMeasure:
    return measure_from_text(_alphabet_for(text), text, ctx.exact if exact is None else exact)


def _measure_label(text: Any) -> str:
    return text if isinstance(text, str) else ",".join(str(x) for x in text)


def _iid(text: Any, seed: int, trial: int):
    return build_source({"name": "iid", "measure": text}, seed, trial)


def _measures(ctx: ExperimentConfig) -> list[Any]:
    measures = _param(ctx, "measures", ["uniform"])
    if not measures:
        raise ValidationError("[experiment] measures must list at least one measure")
    return list(measures)


def _grouped_pass(rows: list[dict[str, Any]], required: float, flag: str = "passed") -> dict[str, Any]:
    """Per (measure, automaton) fractions of row[flag] over the trials that yielded enough output."""
    groups: dict[str, list[dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault(f"{row['measure']}|{row['automaton']}", []).append(row)
    out: dict[str, Any] = {}
    for key, members in groups.items():
        checked = [r for r in members if r["checked"]]
        passed = sum(1 for r in checked if r[flag])
        out[key] = {
            "checked": len(checked),
            "passed": passed,
            "pass_fraction": passed / len(checked) if checked else None,
            "ok": not checked or passed / len(checked) >= required,
        }
    return out


# ---------------------------------------------------------------------------
# Agafonov: selected subsequences of normal input stay normal
# ---------------------------------------------------------------------------

def _selection_row(selection, mu: BernoulliMeasure, n: int, ctx: ExperimentConfig, min_selected: int) -> dict[str, Any]:
    size = len(selection)
    row: dict[str, Any] = {"selected": size, "rate": size / n, "deviation": None, "balance": None}
    row["checked"] = size >= max(min_selected, ctx.max_length)
    if size >= ctx.max_length:
        report = profile_symbols(mu.alphabet, selection.symbols, ctx.max_length, ctx.table_cap, ctx.memory_cap)
        row["deviation"] = normality_deviation(report, mu)
        row["balance"] = balance_deviation(report, mu)
    row["passed"] = bool(row["checked"] and row["deviation"] <= ctx.tolerance)
    return row


def _agafonov_trial(
    trial: int, rng: RandomSource, *, ctx: ExperimentConfig, text: Any, mu: BernoulliMeasure,
    sel: Selector | ProbabilisticSelector, name: str, min_selected: int, derandomize: bool,
) -> dict[str, Any]:
    n = ctx.n
    stream = _iid(text, ctx.seed, trial)
    if isinstance(sel, Selector):
        selection = select(sel, stream, n)
    else:
        coins = RandomSource(ctx.seed, trial, COIN_LANE)
        if derandomize:
            selection = derandomized_select(sel, stream, n, coins, ctx.table_cap, ctx.memory_cap)
        else:
            selection = run_pfa_select(sel, stream, n, coins)
    return {"measure": _measure_label(text), "automaton": name, "trial": trial,
            **_selection_row(selection, mu, n, ctx, min_selected)}


def _agafonov(ctx: ExperimentConfig, battery: Battery, kinds: tuple[str, ...]) -> SuiteResult:
    min_selected = int(_param(ctx, "min_selected", 100_000))
    required = float(_param(ctx, "pass_fraction", 0.95))
    derandomize = bool(_param(ctx, "derandomize", False))
    n = ctx.n
    rows: list[dict[str, Any]] = []
    for text in _measures(ctx):
        mu = _measure(ctx, text)
        for entry in battery.of_kind(*kinds):
            one = partial(_agafonov_trial, ctx=ctx, text=text, mu=mu, sel=entry.build(mu), name=entry.name,
                          min_selected=min_selected, derandomize=derandomize)
            rows.extend(run_trials(one, ctx.seed, max(1, ctx.trials), ctx.workers))
            logger.info(f"Agafonov check done for {entry.name} under μ={_measure_label(text)}")
    groups = _grouped_pass(rows, required)
    return SuiteResult(rows, {
        "n": n,
        "tolerance": ctx.tolerance,
        "max_length": ctx.max_length,
        "min_selected": min_selected,
        "required_pass_fraction": required,
        "groups": groups,
        "passed": all(g["ok"] for g in groups.values()),
    })


def suite_agafonov_dfa(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    return _agafonov(ctx, battery, ("selector",))


def suite_agafonov_pfa(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    return _agafonov(ctx, battery, ("pfa-selector",))


# ---------------------------------------------------------------------------
# Schnorr-Stimm: gamblers on normal input are constant or decay
# ---------------------------------------------------------------------------

def _relative_error(measured: float, predicted: float) -> float | None:
    if predicted == 0 or not np.isfinite(predicted) or not np.isfinite(measured):
        return None
    return abs(measured - predicted) / abs(predicted)


def _schnorr_stimm_trial(
    trial: int, rng: RandomSource, *, ctx: ExperimentConfig, text: Any, g: Gambler | ProbabilisticGambler,
    name: str, predicted: float, rate_tolerance: float, capital_bound: float,
) -> dict[str, Any]:
    stream = _iid(text, ctx.seed, trial)
    if isinstance(g, Gambler):
        trajectory = log_capital_trajectory(g, stream, ctx.n)
    else:
        trajectory = run_pfa_gamble(g, stream, ctx.n, RandomSource(ctx.seed, trial, COIN_LANE))
    verdict = classify_trajectory(trajectory)
    rel = _relative_error(verdict.rate, predicted) if verdict.tag == DECAY else None
    expected_tag = CONSTANT if predicted == 0 else DECAY
    peak = float(np.max(trajectory)) if len(trajectory) else 0.0
    return {
        "measure": _measure_label(text),
        "automaton": name,
        "trial": trial,
        "verdict": verdict.tag,
        "rate": verdict.rate,
        "predicted": predicted,
        "rel_error": rel,
        "max_log_capital": peak,
        "capital_ok": peak <= capital_bound,
        "checked": True,
        "passed": verdict.tag == expected_tag and (rel is None or rel <= rate_tolerance),
    }


def suite_schnorr_stimm(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    rate_tolerance = float(_param(ctx, "rate_tolerance", 0.15))
    capital_bound = float(_param(ctx, "capital_bound", math.log(100)))
    capital_fraction = float(_param(ctx, "capital_pass_fraction", 0.95))
    n = ctx.n
    rows: list[dict[str, Any]] = []
    for text in _measures(ctx):
        mu = _measure(ctx, text)
        for entry in battery.of_kind("gambler", "pfa-gambler"):
            g = entry.build(mu)
            machine = g.pfa if isinstance(g, ProbabilisticGambler) else g.dfa
            predicted = expected_decay_exponent(g, stationary(build_chain(machine, mu)))
            one = partial(_schnorr_stimm_trial, ctx=ctx, text=text, g=g, name=entry.name,
                          predicted=predicted, rate_tolerance=rate_tolerance,
                          capital_bound=capital_bound)
            rows.extend(run_trials(one, ctx.seed, max(1, ctx.trials), ctx.workers))
    groups = _grouped_pass(rows, 1.0)
    capital = _grouped_pass(rows, capital_fraction, "capital_ok")
    return SuiteResult(rows, {
        "n": n,
        "rate_tolerance": rate_tolerance,
        "capital_bound": capital_bound,
        "required_capital_fraction": capital_fraction,
        "growth_verdicts": sum(1 for r in rows if r["verdict"] == GROWTH),
        "groups": groups,
        "capital_groups": capital,
        "passed": all(g["ok"] for g in groups.values()) and all(g["ok"] for g in capital.values()),
    })


# ---------------------------------------------------------------------------
# Dichotomy: non-normal sources are attacked, normal ones are not
# ---------------------------------------------------------------------------

DEFAULT_DICHOTOMY_SOURCES: list[dict[str, Any]] = [
    {"name": "markov", "p_same": "2/3"},
    {"name": "thue-morse"},
    {"name": "periodic", "word": "01"},
    {"name": "iid", "measure": "uniform"},
]


def suite_dichotomy(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    sources = _param(ctx, "sources", DEFAULT_DICHOTOMY_SOURCES)
    rate_tolerance = float(_param(ctx, "rate_tolerance", 0.25))
    # the KL-maximizing checkpoint sits high on short prefixes; the final one tracks the true rate
    cluster = str(_param(ctx, "cluster", CLUSTER_LAST))
    n = ctx.n
    rows: list[dict[str, Any]] = []
    for source in sources:
        def make_stream(source=source):
            return build_source(source, ctx.seed)

        mu = uniform_measure(make_stream().alphabet, ctx.exact)
        result = attack(make_stream, mu, n, ctx.tolerance, ctx.max_length, cluster)
        normal = source.get("name") == "iid"
        verdict = classify_trajectory(result.trajectory).tag if result.trajectory is not None else None
        rel = _relative_error(result.measured_rate, result.predicted_rate) if result.attacked else None
        if normal:
            passed = verdict != GROWTH
        else:
            passed = result.attacked and result.measured_rate > 0 and verdict == GROWTH
        rows.append({
            "source": source.get("name"),
            "parameters": {k: v for k, v in source.items() if k != "name"},
            "attacked": result.attacked,
            "context": str(result.witness.context) if result.witness else None,
            "predicted_rate": result.predicted_rate,
            "measured_rate": result.measured_rate,
            "rel_error": rel,
            "verdict": verdict,
            "passed": passed,
        })
    markov = [r for r in rows if r["source"] == "markov" and r["rel_error"] is not None]
    return SuiteResult(rows, {
        "n": n,
        "cluster": cluster,
        "rate_tolerance": rate_tolerance,
        "markov_rate_ok": all(r["rel_error"] <= rate_tolerance for r in markov),
        "passed": all(r["passed"] for r in rows) and all(r["rel_error"] <= rate_tolerance for r in markov),
    })


# ---------------------------------------------------------------------------
# Derandomization
# ---------------------------------------------------------------------------

def suite_derand(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    word_length = int(_param(ctx, "word_length", 8))
    mc_trials = int(_param(ctx, "mc_trials", 2000))
    mc_word = str(_param(ctx, "mc_word", "0110"))
    rows: list[dict[str, Any]] = []
    entries: dict[str, Any] = {}
    for text in _measures(ctx):
        mu = _measure(ctx, text, exact=True)
        for entry in battery.of_kind("pfa-selector", "pfa-gambler"):
            automaton = entry.build(mu)
            tau, per_word = compare_lifted(automaton, word_length, ctx.table_cap, memory_cap=ctx.memory_cap)
            exact = tau.exact and automaton.pfa.exact and getattr(automaton, "exact", True)
            failures = [
                r["word"] for r in per_word
                if not tv_ok(r["tv_lifted"], exact)
                or (r["tv_enumerated"] is not None and not tv_ok(r["tv_enumerated"], exact))
            ]
            key = f"{_measure_label(text)}|{entry.name}"
            info: dict[str, Any] = {
                "tables": tau.size,
                "mode": "exact" if exact else "float",
                "max_tv": max(float(r["tv_lifted"]) for r in per_word),
                "failures": failures,
            }
            if isinstance(automaton, ProbabilisticSelector) and mc_trials:
                w = automaton.pfa.alphabet.word(mc_word)
                empirical = sample_select_distribution(automaton, w, mc_trials, ctx.seed, ctx.workers)
                info["mc_tv"] = float(total_variation(
                    {k: float(v) for k, v in exact_select_distribution(automaton, w).items()}, empirical
                ))
            entries[key] = info
            for r in per_word:
                rows.append({"measure": _measure_label(text), "automaton": entry.name, **r})
    return SuiteResult(rows, {
        "word_length": word_length,
        "mc_trials": mc_trials,
        "entries": entries,
        "passed": all(not e["failures"] for e in entries.values()),
    })


# ---------------------------------------------------------------------------
# Block normality
# ---------------------------------------------------------------------------

def suite_block_normality(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    counterexample = str(_param(ctx, "periodic_word", "01"))
    gap = float(_param(ctx, "min_gap", 0.4))
    n = ctx.n
    rows: list[dict[str, Any]] = []
    for text in _measures(ctx):
        alphabet = _alphabet_for(text)
        report = stream_profile(_iid(text, ctx.seed, 0), n, ctx.max_length, ctx.table_cap, memory_cap=ctx.memory_cap)
        for w in report.words():
            block = bfreq(w, _iid(text, ctx.seed, 0), n)
            rows.append({
                "source": f"iid:{_measure_label(text)}",
                "word": str(w),
                "freq": report.freq(w),
                "bfreq": block,
                "diff": abs(report.freq(w) - block),
            })
        logger.debug(f"Block frequencies over k={alphabet.size} done")
    iid_ok = all(r["diff"] <= ctx.tolerance for r in rows)

    period = Alphabet.of_size(2).word(counterexample)
    sliding = stream_profile(periodic_stream(period), n, len(period), ctx.table_cap,
                             memory_cap=ctx.memory_cap).freq(period)
    aligned = bfreq(period, periodic_stream(period), n)
    rows.append({
        "source": f"periodic:{counterexample}",
        "word": counterexample,
        "freq": sliding,
        "bfreq": aligned,
        "diff": abs(sliding - aligned),
    })
    return SuiteResult(rows, {
        "n": n,
        "tolerance": ctx.tolerance,
        "iid_within_tolerance": iid_ok,
        "periodic_gap": abs(sliding - aligned),
        "passed": iid_ok and abs(sliding - aligned) >= gap,
    })


# ---------------------------------------------------------------------------
# Balancedness of probabilistic selectors
# ---------------------------------------------------------------------------

def suite_balancedness(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    chunk_length = int(_param(ctx, "chunk_length", 10_000))
    m = int(_param(ctx, "m", 1))
    eps = float(_param(ctx, "eps", 0.05))
    trials = max(int(ctx.trials), 100)
    rows: list[dict[str, Any]] = []
    verdicts: dict[str, Any] = {}
    for text in _measures(ctx):
        mu = _measure(ctx, text)
        chunk = Word.from_array(mu.alphabet, _iid(text, ctx.seed, 0).take(chunk_length))
        for entry in battery.of_kind("pfa-selector"):
            sel = entry.build(mu)
            estimate = balancedness_estimate(sel, chunk, m, eps, trials, ctx.seed, mu, workers=ctx.workers)
            key = f"{_measure_label(text)}|{entry.name}"
            verdicts[key] = {
                "lambda": estimate.lam,
                "minimum": estimate.minimum,
                "maximum": estimate.maximum,
                "balanced": estimate.balanced,
            }
            for state in estimate.per_state:
                rows.append({
                    "measure": _measure_label(text),
                    "automaton": entry.name,
                    "initial_state": state.state,
                    "successes": state.successes,
                    "trials": state.trials,
                    "estimate": state.estimate,
                    "ci_low": state.ci_low,
                    "ci_high": state.ci_high,
                })
    return SuiteResult(rows, {
        "chunk_length": chunk_length,
        "m": m,
        "eps": eps,
        "trials": trials,
        "selectors": verdicts,
        "passed": all(v["balanced"] for v in verdicts.values()),
    })


# ---------------------------------------------------------------------------
# Ergodic visit frequencies
# ---------------------------------------------------------------------------

def suite_ergodic(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    tolerance = float(_param(ctx, "visit_tolerance", 0.01))
    n = ctx.n
    rows: list[dict[str, Any]] = []
    problems: dict[str, list[str]] = {}
    for text in _measures(ctx):
        mu = _measure(ctx, text)
        for entry in battery.of_kind("selector", "gambler"):
            dfa = entry.build(mu).dfa
            chain = build_chain(dfa, mu)
            info = stationary(chain)
            visits = visit_frequencies(dfa, _iid(text, ctx.seed, 0), n)
            found = ergodic_check(chain, info, visits, n, tolerance)
            if found:
                problems[f"{_measure_label(text)}|{entry.name}"] = found
            for q in range(chain.num_states):
                rows.append({
                    "measure": _measure_label(text),
                    "automaton": entry.name,
                    "state": q,
                    "recurrent": chain.is_recurrent(q),
                    "pi": info.pi(q),
                    "visits": float(visits[q]),
                })
    return SuiteResult(rows, {"n": n, "tolerance": tolerance, "problems": problems, "passed": not problems})


# ---------------------------------------------------------------------------
# Joins and projections
# ---------------------------------------------------------------------------

def suite_join_projection(ctx: ExperimentConfig, battery: Battery) -> SuiteResult:
    coin_text = _param(ctx, "coin", "uniform")
    base = int(_param(ctx, "base", 2))
    n = ctx.n
    coin = _measure(ctx, coin_text)
    target = join_measure(uniform_measure(Alphabet.of_size(base), ctx.exact), coin)

    def joined():
        return join_streams(champernowne_stream(base), _iid(coin_text, ctx.seed, 0))

    length = min(2, ctx.max_length)
    report = stream_profile(joined(), n, length, ctx.table_cap, memory_cap=ctx.memory_cap)
    tables = {ell: target.word_table(ell) for ell in range(1, length + 1)}
    rows = []
    for w in report.words():
        expected = float(tables[len(w)][w.code])
        rows.append({"word": str(w), "freq": report.freq(w), "target": expected,
                     "diff": abs(report.freq(w) - expected)})
    left_ok = bool(np.array_equal(project(joined(), 0).take(n), champernowne_stream(base).take(n)))
    right_ok = bool(np.array_equal(project(joined(), 1).take(n), _iid(coin_text, ctx.seed, 0).take(n)))
    max_diff = max(r["diff"] for r in rows)
    return SuiteResult(rows, {
        "n": n,
        "tolerance": ctx.tolerance,
        "max_diff": max_diff,
        "left_projection_exact": left_ok,
        "right_projection_exact": right_ok,
        "passed": max_diff <= ctx.tolerance and left_ok and right_ok,
    })


SUITES: dict[str, Callable[[ExperimentConfig, Battery], SuiteResult]] = {
    "agafonov-dfa": suite_agafonov_dfa,
    "agafonov-pfa": suite_agafonov_pfa,
    "schnorr-stimm": suite_schnorr_stimm,
    "dichotomy": suite_dichotomy,
    "derand": suite_derand,
    "block-normality": suite_block_normality,
    "balancedness": suite_balancedness,
    "ergodic": suite_ergodic,
    "join-projection": suite_join_projection,
}
