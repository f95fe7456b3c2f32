"""experiment: run a named suite over a battery and write its rows and summary."""
from __future__ import annotations

import argparse
import logging

from normality.automaton_io import list_batteries, load_battery
from normality.core import ValidationError

from . import EXIT_OK, ExperimentConfig
from .inputs import new_record
from .output import write_run
from .suites import SUITES
from .ui import print_error, print_header, print_info, print_success

logger = logging.getLogger(__name__)


def list_suites() -> None:
    print_header("Suites")
    for name in SUITES:
        print_info(name)
    print_header("Batteries")
    for path in list_batteries():
        print_info(path.stem)


def run_experiment(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    if getattr(args, "list", False):
        list_suites()
        return EXIT_OK
    suite = str(ctx.experiment.get("suite", ""))
    if suite not in SUITES:
        raise ValidationError(f"Unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
    battery = load_battery(str(ctx.experiment.get("battery", "default")))

    logger.info(f"Running suite {suite} on battery {battery.name!r} v{battery.version}")
    result = SUITES[suite](ctx, battery)
    record = new_record(ctx, "experiment", suite=suite, battery=battery.name,
                        battery_version=battery.version, **result.summary)
    record.rows = result.rows
    paths = write_run(ctx.output_dir, suite, record, ctx.output_format)

    if result.passed:
        print_success(f"Suite {suite} passed")
    else:
        print_error(f"Suite {suite} did not meet its acceptance thresholds")
    for path in paths:
        print_info(f"Wrote {path}")
    return EXIT_OK
