"""Command-line front end: sequence generation, runs, attacks, derandomization checks, suites."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from config_loader import config_hash
from normality.core import PRNG_ALGORITHM, Alphabet, BernoulliMeasure, SymbolStream, measure_from_text
from normality.generators import build_source

REPO_DIR = Path(__file__).resolve().parent.parent

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_GUARD = 3


def extract_version_from_file(path: str | Path) -> str:
    """Extract __version__ string from a Python source file."""
    for line in Path(path).read_text().splitlines():
        if line.startswith("__version__"):
            match = re.search(r'"([^"]+)"', line)
            if match:
                return match.group(1)
            break
    return "unknown"


def software_version() -> str:
    return extract_version_from_file(REPO_DIR / "fsnormal.py")


@dataclass
class ExperimentConfig:
    """Effective settings for one command, resolved from the merged config."""

    config: dict[str, Any]
    seed: int = 0
    workers: int | None = None
    exact: bool = False
    n: int = 1_000_000
    max_length: int = 3
    tolerance: float = 0.02
    trials: int = 1
    table_cap: int = 1 << 20
    memory_cap: int | None = 1 << 30
    output_dir: Path = Path("results")
    output_format: str = "csv"
    experiment: dict[str, Any] = field(default_factory=dict)
    config_hash: str = ""

    @classmethod
    def from_config(cls, config: dict[str, Any]) -> ExperimentConfig:
        general = config.get("general", {})
        run = config.get("run", {})
        output = config.get("output", {})
        workers = int(general.get("workers", 0))
        return cls(
            config=config,
            seed=int(general.get("seed", 0)),
            workers=workers or None,
            exact=general.get("numeric_mode", "float") == "exact",
            n=int(run.get("n", 1_000_000)),
            max_length=int(run.get("max_length", 3)),
            tolerance=float(run.get("tolerance", 0.02)),
            trials=int(run.get("trials", 1)),
            table_cap=int(run.get("table_cap", 1 << 20)),
            memory_cap=int(run["memory_cap"]) if run.get("memory_cap") else None,
            output_dir=Path(output.get("dir", "results")),
            output_format=str(output.get("format", "csv")),
            experiment=dict(config.get("experiment", {})),
            config_hash=config_hash(config),
        )

    @property
    def source(self) -> dict[str, Any]:
        """Source section; IID sources without their own measure draw from [measure]."""
        source = dict(self.config.get("source", {}))
        if source.get("name", "iid") == "iid" and "measure" not in source:
            source["measure"] = self.measure_text
        return source

    @property
    def measure_text(self) -> Any:
        return self.config.get("measure", {}).get("weights", "uniform")

    def stream(self, trial: int | None = None) -> SymbolStream:
        return build_source(self.source, self.seed, trial)

    def measure(self, alphabet: Alphabet, text: Any = None) -> BernoulliMeasure:
        return measure_from_text(alphabet, self.measure_text if text is None else text, self.exact)


@dataclass
class RunRecord:
    """Provenance plus per-trial summary rows; contains nothing time-dependent."""

    command: str
    config_hash: str
    seed: int
    version: str = field(default_factory=software_version)
    prng: str = PRNG_ALGORITHM
    summary: dict[str, Any] = field(default_factory=dict)
    rows: list[dict[str, Any]] = field(default_factory=list)

    def header(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": self.version,
            "prng": self.prng,
        }

    def to_dict(self) -> dict[str, Any]:
        return {**self.header(), "summary": self.summary, "rows": self.rows}
