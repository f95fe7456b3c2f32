"""Shared plumbing for subcommands: automaton lookup, input streams, records, trajectory thinning."""
from __future__ import annotations

import argparse
import logging
from functools import partial
from typing import Any, Callable

import numpy as np

from normality.automaton_io import Automaton, load_automaton, load_battery
from normality.core import Alphabet, BernoulliMeasure, SymbolStream, ValidationError, measure_from_text, parse_weights
from normality.probabilistic import ProbabilisticGambler, ProbabilisticSelector
from normality.seqfile import ArrayStream

from . import ExperimentConfig, RunRecord

logger = logging.getLogger(__name__)

MAX_TRAJECTORY_ROWS = 10_000


def machine_of(automaton: Automaton):
    if isinstance(automaton, (ProbabilisticSelector, ProbabilisticGambler)):
        return automaton.pfa
    return automaton.dfa


def load_target(ctx: ExperimentConfig, args: argparse.Namespace) -> Automaton:
    """--automaton FILE, or --battery NAME --entry NAME built against the configured measure."""
    if args.automaton:
        return load_automaton(args.automaton, exact=True if ctx.exact else None)
    if args.battery and args.entry:
        battery = load_battery(args.battery)
        for entry in battery.entries:
            if entry.name == args.entry:
                text = ctx.measure_text
                alphabet = Alphabet.of_size(2 if text == "uniform" else len(parse_weights(text)))
                return entry.build(ctx.measure(alphabet))
        raise ValidationError(f"Battery {battery.name!r} has no automaton named {args.entry!r}")
    raise ValidationError("Pass --automaton FILE, or --battery NAME with --entry NAME")


def target_measure(ctx: ExperimentConfig, automaton: Automaton) -> BernoulliMeasure:
    """Gamblers carry their own μ; selectors are checked against the configured measure."""
    measure = getattr(automaton, "measure", None)
    if measure is not None:
        return measure
    return measure_from_text(machine_of(automaton).alphabet, ctx.measure_text, ctx.exact)


def input_source(
    ctx: ExperimentConfig, args: argparse.Namespace, alphabet: Alphabet
) -> tuple[Callable[[], SymbolStream], int]:
    """Factory for fresh copies of the run input, and its length.

    --text is read over the automaton's alphabet; otherwise the configured source is used.
    """
    text = getattr(args, "text", None)
    if text is not None:
        word = alphabet.word(text)
        if len(word) == 0:
            raise ValidationError("--text must contain at least one symbol")
        symbols = word.as_array()
        return partial(ArrayStream, alphabet, symbols), len(word)
    stream = ctx.stream()
    if stream.alphabet.size != alphabet.size:
        raise ValidationError(
            f"Source alphabet has {stream.alphabet.size} letters but the automaton reads {alphabet.size}"
        )
    n = ctx.n
    if isinstance(stream, ArrayStream) and stream.length < n:
        logger.warning(f"Input file holds {stream.length} symbols; using all of them instead of n={n}")
        n = stream.length
    return ctx.stream, n


def new_record(ctx: ExperimentConfig, command: str, **summary: Any) -> RunRecord:
    return RunRecord(command, ctx.config_hash, ctx.seed, summary=dict(summary))


def trajectory_rows(trajectory: np.ndarray, stride: int | None = None) -> list[dict[str, Any]]:
    """(n, log_capital) rows, thinned to about MAX_TRAJECTORY_ROWS points; the last point is always kept."""
    n = len(trajectory)
    if n == 0:
        return []
    if stride is None:
        stride = max(1, n // MAX_TRAJECTORY_ROWS)
    if stride < 1:
        raise ValidationError(f"--stride must be >= 1, got {stride}")
    idx = np.arange(stride - 1, n, stride)
    if idx.size == 0 or idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return [{"n": int(i) + 1, "log_capital": float(trajectory[i])} for i in idx.tolist()]
