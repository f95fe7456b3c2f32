"""analyze-automaton: induced Markov chain, BSCCs, stationary law, per-state exponents."""
from __future__ import annotations

import argparse
import logging
from typing import Any

from normality.analysis import (
    alpha_per_state,
    build_chain,
    ergodic_check,
    expected_decay_exponent,
    stationary,
    visit_frequencies,
)
from normality.automata import Dfa, Gambler
from normality.probabilistic import ProbabilisticGambler

from . import EXIT_OK, ExperimentConfig
from .inputs import input_source, load_target, machine_of, new_record, target_measure
from .output import write_run
from .ui import print_fields, print_success, print_warning

logger = logging.getLogger(__name__)


def run_analyze_automaton(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    automaton = load_target(ctx, args)
    machine = machine_of(automaton)
    mu = target_measure(ctx, automaton)
    chain = build_chain(machine, mu)
    info = stationary(chain)
    gambler = isinstance(automaton, (Gambler, ProbabilisticGambler))
    alphas = alpha_per_state(automaton) if gambler else None

    component = {q: i for i, b in enumerate(chain.bsccs) for q in b}
    rows: list[dict[str, Any]] = []
    for q in range(chain.num_states):
        row: dict[str, Any] = {
            "state": q,
            "reachable": q in chain.reachable,
            "recurrent": chain.is_recurrent(q),
            "bscc": component.get(q),
            "pi": info.pi(q),
        }
        if gambler:
            row["alpha"] = float(alphas[q])
            row["betting"] = any(b != 1 for b in automaton.bets[q])
        else:
            row["selecting"] = q in automaton.select_states
        rows.append(row)

    summary: dict[str, Any] = {
        "states": chain.num_states,
        "bsccs": [list(b) for b in chain.bsccs],
        "transient": list(chain.transient),
        "absorption": info.absorption.tolist(),
        "input_dependent": info.input_dependent,
        "measure": [float(p) for p in mu.probabilities],
    }
    if gambler:
        summary["expected_exponent"] = expected_decay_exponent(automaton, info)
    else:
        summary["select_rate"] = float(sum(info.aggregate[q] for q in automaton.select_states))

    if args.visits and isinstance(machine, Dfa):
        make_stream, n = input_source(ctx, args, machine.alphabet)
        visits = visit_frequencies(machine, make_stream(), n)
        for row, v in zip(rows, visits.tolist()):
            row["visits"] = v
        summary["visit_problems"] = ergodic_check(chain, info, visits, n)
        summary["visit_n"] = n
    elif args.visits:
        logger.warning("Visit frequencies are simulated for deterministic automata only")

    record = new_record(ctx, "analyze-automaton", **summary)
    record.rows = rows
    write_run(ctx.output_dir, "automaton", record, ctx.output_format)

    print_fields({
        "states": chain.num_states,
        "bottom components": len(chain.bsccs),
        "transient": len(chain.transient),
        ("expected exponent" if gambler else "select rate λ"):
            f"{summary['expected_exponent' if gambler else 'select_rate']:.6f}",
    })
    if summary.get("visit_problems"):
        for problem in summary["visit_problems"]:
            print_warning(problem)
    elif "visit_problems" in summary:
        print_success(f"Visit frequencies within tolerance of π over n={summary['visit_n']}")
    return EXIT_OK
