"""select / gamble: run one automaton on the configured input."""
from __future__ import annotations

import argparse
import logging
import math
from functools import partial
from typing import Any, Callable

from normality.analysis import build_chain, classify_trajectory, expected_decay_exponent, stationary
from normality.automata import Gambler, Selector, capital_trajectory_exact, log_capital_trajectory, select
from normality.core import BernoulliMeasure, RandomSource, SymbolStream, ValidationError
from normality.probabilistic import (
    ProbabilisticGambler,
    ProbabilisticSelector,
    derandomized_select,
    run_pfa_gamble,
    run_pfa_select,
)
from normality.seqfile import write_nseq
from normality.stats import balance_deviation, normality_deviation, profile_symbols
from normality.trials import run_trials

from . import EXIT_OK, ExperimentConfig
from .inputs import input_source, load_target, machine_of, new_record, target_measure, trajectory_rows
from .output import write_run
from .ui import print_fields, print_success, print_warning

logger = logging.getLogger(__name__)

EXACT_CAPITAL_MAX_LENGTH = 10_000


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------

def _select_trial(
    trial: int, rng: RandomSource, *, ctx: ExperimentConfig, sel: Selector | ProbabilisticSelector,
    make_stream: Callable[[], SymbolStream], n: int, mu: BernoulliMeasure, derandomize: bool,
) -> dict[str, Any]:
    """One select run; trial 0 also hands back the selected symbols."""
    stream = make_stream()
    if isinstance(sel, Selector):
        selection = select(sel, stream, n)
    elif derandomize:
        selection = derandomized_select(sel, stream, n, rng, ctx.table_cap, ctx.memory_cap)
    else:
        selection = run_pfa_select(sel, stream, n, rng)
    row: dict[str, Any] = {"trial": trial, "selected": len(selection), "rate": len(selection) / n if n else 0.0}
    if len(selection) >= ctx.max_length:
        report = profile_symbols(stream.alphabet, selection.symbols, ctx.max_length, ctx.table_cap, ctx.memory_cap)
        row["deviation"] = normality_deviation(report, mu)
        row["balance"] = balance_deviation(report, mu)
    else:
        row["deviation"] = None
        row["balance"] = None
    if trial == 0:
        row["symbols"] = selection.symbols
    return row


def run_select(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    sel = load_target(ctx, args)
    if not isinstance(sel, (Selector, ProbabilisticSelector)):
        raise ValidationError(f"select needs a selector, got {type(sel).__name__}")
    machine = machine_of(sel)
    make_stream, n = input_source(ctx, args, machine.alphabet)
    mu = target_measure(ctx, sel)
    info = stationary(build_chain(machine, mu))
    lam = float(sum(info.aggregate[q] for q in sel.select_states))

    one = partial(_select_trial, ctx=ctx, sel=sel, make_stream=make_stream, n=n, mu=mu,
                  derandomize=bool(args.derandomize))
    trials = 1 if isinstance(sel, Selector) else max(1, ctx.trials)
    rows = run_trials(one, ctx.seed, trials, ctx.workers)
    first_symbols = [row.pop("symbols", None) for row in rows][0]

    out_path = ctx.output_dir / "selection.nseq"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_nseq(out_path, machine.alphabet.size, first_symbols)

    checked = [r for r in rows if r["deviation"] is not None]
    passing = [r for r in checked if r["deviation"] <= ctx.tolerance]
    record = new_record(
        ctx, "select",
        n=n,
        trials=trials,
        predicted_rate=lam,
        input_dependent=info.input_dependent,
        max_deviation=max((r["deviation"] for r in checked), default=None),
        pass_fraction=len(passing) / len(checked) if checked else None,
        tolerance=ctx.tolerance,
        max_length=ctx.max_length,
        derandomized=bool(args.derandomize) and isinstance(sel, ProbabilisticSelector),
    )
    record.rows = rows
    write_run(ctx.output_dir, "select", record, ctx.output_format)

    print_fields({"n": n, "selected": rows[0]["selected"], "λ": f"{lam:.6f}", "trials": trials})
    if checked and len(passing) == len(checked):
        print_success(f"Selected subsequence within {ctx.tolerance} of μ in every trial")
    elif checked:
        print_warning(f"{len(checked) - len(passing)} of {len(checked)} trials exceed tolerance {ctx.tolerance}")
    else:
        print_warning("Selected subsequence too short to check")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gamble
# ---------------------------------------------------------------------------

def _final_capital(log_capital: float) -> float:
    return 0.0 if log_capital == float("-inf") else math.exp(log_capital)


def _gamble_trial(
    trial: int, rng: RandomSource, *, g: Gambler | ProbabilisticGambler,
    make_stream: Callable[[], SymbolStream], n: int,
) -> dict[str, Any]:
    if isinstance(g, Gambler):
        trajectory = log_capital_trajectory(g, make_stream(), n)
    else:
        trajectory = run_pfa_gamble(g, make_stream(), n, rng)
    verdict = classify_trajectory(trajectory)
    final = float(trajectory[-1])
    row: dict[str, Any] = {
        "trial": trial,
        "final_log_capital": final,
        "final_capital": _final_capital(final),
        "verdict": verdict.tag,
        "rate": verdict.rate,
    }
    if trial == 0:
        row["trajectory"] = trajectory
    return row


def run_gamble(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    g = load_target(ctx, args)
    if not isinstance(g, (Gambler, ProbabilisticGambler)):
        raise ValidationError(f"gamble needs a gambler, got {type(g).__name__}")
    machine = machine_of(g)
    make_stream, n = input_source(ctx, args, machine.alphabet)
    if n < 1:
        raise ValidationError("gamble needs at least one input symbol")
    info = stationary(build_chain(machine, g.measure))
    expected = expected_decay_exponent(g, info)

    trials = 1 if isinstance(g, Gambler) else max(1, ctx.trials)
    one = partial(_gamble_trial, g=g, make_stream=make_stream, n=n)
    results = run_trials(one, ctx.seed, trials, ctx.workers)
    trajectory = [row.pop("trajectory", None) for row in results][0]

    summary: dict[str, Any] = {
        "n": n,
        "trials": trials,
        "expected_exponent": expected,
        "final_log_capital": results[0]["final_log_capital"],
        "final_capital": results[0]["final_capital"],
        "verdict": results[0]["verdict"],
        "rate": results[0]["rate"],
        "per_trial": results if trials > 1 else [],
    }
    if isinstance(g, Gambler) and g.exact and n <= EXACT_CAPITAL_MAX_LENGTH:
        summary["final_capital_exact"] = capital_trajectory_exact(g, make_stream().take(n))[-1]

    record = new_record(ctx, "gamble", **summary)
    record.rows = trajectory_rows(trajectory, args.stride)
    write_run(ctx.output_dir, "gamble", record, ctx.output_format)

    print_fields({
        "n": n,
        "final capital": summary.get("final_capital_exact", f"{summary['final_capital']:.6g}"),
        "verdict": summary["verdict"],
        "expected exponent": f"{expected:.6f}",
    })
    return EXIT_OK
