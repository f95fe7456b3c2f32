"""adversary: find a divergent word, estimate the conditional law, bet on it."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from normality.adversary import attack
from normality.analysis import classify_trajectory
from normality.automaton_io import write_automaton

from . import EXIT_OK, ExperimentConfig
from .inputs import new_record, trajectory_rows
from .output import write_run
from .ui import print_fields, print_success, print_warning

logger = logging.getLogger(__name__)


def run_adversary(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    stream = ctx.stream()
    mu = ctx.measure(stream.alphabet)
    result = attack(ctx.stream, mu, ctx.n, ctx.tolerance, ctx.max_length, args.cluster, args.floor)

    summary = {
        "n": ctx.n,
        "tolerance": ctx.tolerance,
        "max_length": ctx.max_length,
        "cluster_choice": args.cluster,
        "attacked": result.attacked,
        "witness": None,
        "cluster": None,
        "predicted_rate": result.predicted_rate,
        "measured_rate": result.measured_rate,
        "verdict": None,
    }
    if result.witness is not None:
        w = result.witness
        summary["witness"] = {
            "word": str(w.word),
            "context": str(w.context),
            "letter": stream.alphabet.label(w.letter),
            "observed": w.observed,
            "target": w.target,
            "effective_tolerance": w.tolerance,
        }
    if result.cluster is not None:
        c = result.cluster
        summary["cluster"] = {"nu": list(c.nu), "checkpoint": c.checkpoint, "kl": c.kl, "samples": c.samples}

    record = new_record(ctx, "adversary")
    if result.trajectory is not None:
        verdict = classify_trajectory(result.trajectory)
        summary["verdict"] = verdict.tag
        record.rows = trajectory_rows(result.trajectory, args.stride)
    record.summary = summary
    write_run(ctx.output_dir, "adversary", record, ctx.output_format)

    if args.save_gambler and result.gambler is not None:
        path = Path(args.save_gambler)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_automaton(path, result.gambler)

    if not result.attacked:
        print_warning("No exploitable divergence found; the input looks μ-normal at this horizon")
        return EXIT_OK
    print_fields({
        "context": summary["witness"]["context"] or "ε",
        "predicted rate": f"{result.predicted_rate:.6f}",
        "measured rate": f"{result.measured_rate:.6f}",
        "verdict": summary["verdict"],
    })
    print_success("Constructed gambler run complete")
    return EXIT_OK
