"""gen: materialize the configured source as an NSEQ1 file plus a provenance sidecar."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from normality.seqfile import write_nseq

from . import EXIT_OK, ExperimentConfig
from .inputs import new_record
from .output import write_json
from .ui import print_fields, print_success

logger = logging.getLogger(__name__)


def run_gen(ctx: ExperimentConfig, args: argparse.Namespace) -> int:
    stream = ctx.stream()
    symbols = stream.take(ctx.n)
    path = Path(args.output) if args.output else ctx.output_dir / "sequence.nseq"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_nseq(path, stream.alphabet.size, symbols)

    source = ctx.source
    record = new_record(
        ctx, "gen",
        source=source,
        alphabet_size=stream.alphabet.size,
        n=int(len(symbols)),
        file=path.name,
    )
    write_json(path.with_name(path.name + ".json"), record)
    print_success(f"Wrote {len(symbols)} symbols to {path}")
    print_fields({"source": source.get("name", "iid"), "alphabet": stream.alphabet.size, "seed": ctx.seed})
    return EXIT_OK
