"""Entry point: python3 -m experiments <subcommand> [options]"""
from __future__ import annotations

import argparse
import logging
import sys

from config_loader import apply_cli_overrides, load_config, log_config_sources
from normality.core import GuardError, ValidationError

from . import EXIT_FAILURE, EXIT_GUARD, EXIT_OK, EXIT_VALIDATION, ExperimentConfig
from .ui import print_error

logger = logging.getLogger(__name__)


def _common_parser() -> argparse.ArgumentParser:
    """Flags shared by every subcommand; None means 'take the config value'."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--debug", action="store_true", help="Enable debug output")
    common.add_argument("--config", action="append", default=None,
                        help="Path to TOML/JSON config file (can be specified multiple times; overrides default config loading)")
    common.add_argument("--seed", type=int, default=None, help="Master seed (64-bit unsigned)")
    common.add_argument("--n", type=int, default=None, help="Horizon: number of input symbols")
    common.add_argument("--measure", default=None, help="Letter weights, e.g. 0.5,0.5 or 1/4,3/4 or 'uniform'")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--trials", type=int, default=None, help="Monte Carlo trial count")
    common.add_argument("--format", choices=("csv", "json"), default=None, help="Output format")
    common.add_argument("--max-length", type=int, default=None, help="Word-length cap L")
    common.add_argument("--tolerance", type=float, default=None, help="Deviation tolerance")
    common.add_argument("--workers", type=int, default=None, help="Worker threads for trials (0 = auto)")

    source = common.add_argument_group("source")
    source.add_argument("--source", dest="source_name", default=None,
                        help="Generator: champernowne, thue-morse, fibonacci, morphic, periodic, markov, iid")
    source.add_argument("--input", default=None, help="Read the input sequence from an NSEQ1 file")
    source.add_argument("--base", dest="source_base", type=int, default=None, help="Champernowne base")
    source.add_argument("--word", dest="source_word", default=None, help="Period of the periodic source")
    source.add_argument("--p-same", dest="source_p_same", default=None, help="Markov source: P(next letter = previous)")
    source.add_argument("--k", dest="source_k", type=int, default=None, help="Alphabet size for iid/periodic sources")
    return common


def _automaton_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--automaton", default=None, help="Automaton or PFA file (JSON or TOML)")
    p.add_argument("--battery", default=None, help="Battery name or path (with --entry)")
    p.add_argument("--entry", default=None, help="Battery automaton name")
    p.add_argument("--text", default=None, help="Literal input word over the automaton's alphabet")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsnormal",
        description="Finite-state selectors, gamblers and normality experiments",
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="command")

    gen_p = sub.add_parser("gen", parents=[common], help="Write a generated sequence as an NSEQ1 file")
    gen_p.add_argument("--output", default=None, help="Sequence file path (default <out>/sequence.nseq)")

    analyze_p = sub.add_parser("analyze", parents=[common], help="Word frequencies and normality deviation")
    analyze_p.add_argument("--blocks", action="store_true", help="Also report aligned block frequencies")

    select_p = sub.add_parser("select", parents=[common], help="Run a selector and check the selected subsequence")
    _automaton_args(select_p)
    select_p.add_argument("--derandomize", action="store_true",
                          help="Run a PFA through its lifted deterministic automaton")

    gamble_p = sub.add_parser("gamble", parents=[common], help="Run a gambler and record its log-capital")
    _automaton_args(gamble_p)
    gamble_p.add_argument("--stride", type=int, default=None, help="Keep every stride-th trajectory point")

    adversary_p = sub.add_parser("adversary", parents=[common], help="Build and run a gambler against non-normal input")
    adversary_p.add_argument("--cluster", choices=("max-kl", "last"), default="max-kl",
                             help="Which checkpoint estimates the conditional law (max-kl overstates the rate on short runs)")
    adversary_p.add_argument("--floor", type=float, default=0.0, help="Lower bound applied to the estimated law")
    adversary_p.add_argument("--save-gambler", default=None, help="Write the constructed gambler as JSON")
    adversary_p.add_argument("--stride", type=int, default=None, help="Keep every stride-th trajectory point")

    automaton_p = sub.add_parser("analyze-automaton", parents=[common],
                                 help="Markov chain, stationary law and exponents of an automaton")
    _automaton_args(automaton_p)
    automaton_p.add_argument("--visits", action="store_true", help="Also compare simulated visit frequencies to π")

    derand_p = sub.add_parser("derand-check", parents=[common],
                              help="Compare a PFA with its lifted deterministic automaton on all short words")
    _automaton_args(derand_p)
    derand_p.add_argument("--word-length", type=int, default=None, help="Check all words of length 1..this")

    experiment_p = sub.add_parser("experiment", parents=[common], help="Run an experiment suite")
    experiment_p.add_argument("--suite", default=None, help="Suite name")
    experiment_p.add_argument("--battery", default=None, help="Battery name or path")
    experiment_p.add_argument("--list", action="store_true", help="List suites and batteries")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        key: getattr(args, key, None)
        for key in ("seed", "workers", "n", "trials", "max_length", "tolerance", "measure", "out", "format")
    }
    if args.command == "experiment":
        overrides["suite"] = args.suite
        overrides["battery"] = args.battery
    for key, value in vars(args).items():
        if key.startswith("source_"):
            overrides[key] = value
    if args.input:
        overrides["source_name"] = "file"
        overrides["source_path"] = args.input
    return overrides


def _dispatch(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    if args.command == "gen":
        from .gen_cmd import run_gen
        return run_gen(ctx, args)
    if args.command == "analyze":
        from .analyze_cmd import run_analyze
        return run_analyze(ctx, args)
    if args.command == "select":
        from .run_cmd import run_select
        return run_select(ctx, args)
    if args.command == "gamble":
        from .run_cmd import run_gamble
        return run_gamble(ctx, args)
    if args.command == "adversary":
        from .adversary_cmd import run_adversary
        return run_adversary(ctx, args)
    if args.command == "analyze-automaton":
        from .automaton_cmd import run_analyze_automaton
        return run_analyze_automaton(ctx, args)
    if args.command == "derand-check":
        from .derand_cmd import run_derand_check
        return run_derand_check(ctx, args)
    from .experiment_cmd import run_experiment
    return run_experiment(ctx, args)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args: argparse.Namespace = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_FAILURE

    # python -m experiments skips fsnormal.py's basicConfig
    if not logging.getLogger().handlers:
        logging.basicConfig(format="%(asctime)s - %(levelname)s - %(message)s", stream=sys.stderr)

    config = apply_cli_overrides(load_config(args.config), _overrides(args))

    # Reconfigure log level from config
    log_level_str = str(config.get("general", {}).get("log_level", "INFO")).upper()
    log_level = getattr(logging, log_level_str, logging.INFO)
    if args.debug:
        log_level = logging.DEBUG
    logging.getLogger().setLevel(log_level)
    log_config_sources(config)

    try:
        ctx = ExperimentConfig.from_config(config)
        return _dispatch(ctx, args)
    except ValidationError as e:
        logger.error(f"Validation failed: {e}")
        print_error(str(e))
        return EXIT_VALIDATION
    except GuardError as e:
        logger.error(f"Guard refused the run: {e}")
        print_error(str(e))
        return EXIT_GUARD
    except Exception:
        logger.exception(f"Command {args.command!r} failed")
        raise


if __name__ == "__main__":
    sys.exit(main() or EXIT_OK)
