"""analyze: word-frequency profile of a source prefix against μ."""
from __future__ import annotations

import argparse
import logging
from typing import Any

from normality.stats import FrequencyReport, balance_deviation, block_profile, normality_deviation, stream_profile

from . import EXIT_OK, ExperimentConfig
from .inputs import new_record
from .output import write_csv, write_run
from .ui import print_fields, print_success, print_warning

logger = logging.getLogger(__name__)

CHECKPOINT_COLUMNS = ("n", "word", "freq")


def checkpoint_rows(report: FrequencyReport) -> list[dict[str, Any]]:
    """freq(w) at each geometric checkpoint, for every word up to the report's length."""
    words = list(report.words())
    return [
        {"n": cp.n, "word": str(w), "freq": float(cp.frequencies[len(w) - 1][w.code])}
        for cp in report.checkpoints
        for w in words
    ]


def run_analyze(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    stream = ctx.stream()
    n = ctx.n
    length = getattr(stream, "length", None)
    if length is not None and length < n:
        logger.warning(f"Input file holds {length} symbols; analyzing all of them instead of n={n}")
        n = length
    mu = ctx.measure(stream.alphabet)
    report = stream_profile(stream, n, ctx.max_length, ctx.table_cap, memory_cap=ctx.memory_cap)

    blocks = {}
    if args.blocks:
        for block_length in range(1, ctx.max_length + 1):
            blocks[block_length] = block_profile(ctx.stream(), n, block_length, ctx.memory_cap).frequencies()

    tables = {length: mu.word_table(length) for length in range(1, ctx.max_length + 1)}
    rows = []
    for w in report.words():
        target = float(tables[len(w)][w.code])
        row = {
            "word": str(w),
            "length": len(w),
            "count": report.count(w),
            "freq": report.freq(w),
            "freq_lower": report.freq_lower(w),
            "freq_upper": report.freq_upper(w),
            "mu_w": target,
            "deviation": abs(report.freq(w) - target),
        }
        if blocks:
            row["bfreq"] = float(blocks[len(w)][w.code])
        rows.append(row)

    deviation = normality_deviation(report, mu)
    balance = balance_deviation(report, mu)
    record = new_record(
        ctx, "analyze",
        n=n,
        max_length=ctx.max_length,
        tolerance=ctx.tolerance,
        normality_deviation=deviation,
        balance_deviation=balance,
        within_tolerance=deviation <= ctx.tolerance,
    )
    record.rows = rows
    checkpoints = checkpoint_rows(report)
    if ctx.output_format == "csv":
        write_run(ctx.output_dir, "analyze", record, ctx.output_format)
        write_csv(ctx.output_dir / "analyze-checkpoints.csv", record, CHECKPOINT_COLUMNS,
                  ([r[c] for c in CHECKPOINT_COLUMNS] for r in checkpoints))
    else:
        record.summary["checkpoints"] = checkpoints
        write_run(ctx.output_dir, "analyze", record, ctx.output_format)

    print_fields({"n": n, "L": ctx.max_length, "deviation": f"{deviation:.6f}", "balance": f"{balance:.6f}"})
    if deviation <= ctx.tolerance:
        print_success(f"All words up to length {ctx.max_length} within {ctx.tolerance} of μ")
    else:
        print_warning(f"Deviation {deviation:.6f} exceeds tolerance {ctx.tolerance}")
    return EXIT_OK
