"""Automaton and PFA files (JSON or TOML) and the bundled automaton batteries."""
from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .automata import Dfa, Gambler, Selector, suffix_tracker_dfa
from .core import (
    Alphabet,
    BernoulliMeasure,
    RandomSource,
    ValidationError,
    Weight,
    measure_from_text,
    parse_weight,
    parse_weights,
)
from .probabilistic import Pfa, ProbabilisticGambler, ProbabilisticSelector

logger = logging.getLogger(__name__)

Automaton = Union[Selector, Gambler, ProbabilisticSelector, ProbabilisticGambler]

BATTERY_DIR = Path(__file__).resolve().parent.parent / "batteries"
MAX_SUFFIX_DEPTH = 3


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _require(data: dict[str, Any], key: str) -> Any:
    if key not in data:
        raise ValidationError(f"Automaton file is missing required field {key!r}")
    return data[key]


def _is_pfa_delta(delta: Any) -> bool:
    return bool(delta) and bool(delta[0]) and isinstance(delta[0][0], list)


def _parse_pfa_delta(delta: list, states: int, k: int, exact: bool) -> tuple:
    rows = []
    for q, per_state in enumerate(delta):
        if len(per_state) != k:
            raise ValidationError(f"delta[{q}] has {len(per_state)} letters, expected {k}")
        parsed_state = []
        for a, pairs in enumerate(per_state):
            row: list[Weight] = [0] * states
            for pair in pairs:
                try:
                    target = int(pair["target"])
                    prob = parse_weight(pair["probability"], exact)
                except (KeyError, TypeError):
                    raise ValidationError(f"delta[{q}][{a}] entries need 'target' and 'probability'") from None
                if not 0 <= target < states:
                    raise ValidationError(f"delta[{q}][{a}] targets invalid state {target}")
                row[target] += prob
            if all(isinstance(p, Fraction) for p in row if p):
                row = [Fraction(p) for p in row]
            else:
                row = [float(p) for p in row]
            parsed_state.append(tuple(row))
        rows.append(tuple(parsed_state))
    return tuple(rows)


def _exact_hint(data: dict[str, Any]) -> bool:
    """Rational mode when any weight in the file is written as a fraction string."""
    return "/" in json.dumps(data)


def parse_automaton(data: dict[str, Any], exact: bool | None = None) -> Automaton:
    """Build a selector or gambler (deterministic or probabilistic) from its dict form."""
    if exact is None:
        exact = _exact_hint(data)
    alphabet = Alphabet(tuple(str(s) for s in _require(data, "alphabet")))
    states = int(_require(data, "states"))
    initial = int(data.get("initial", 0))
    delta = _require(data, "delta")
    if len(delta) != states:
        raise ValidationError(f"delta has {len(delta)} rows for {states} states")

    if _is_pfa_delta(delta):
        machine: Dfa | Pfa = Pfa(alphabet, states, initial, _parse_pfa_delta(delta, states, alphabet.size, exact))
    else:
        machine = Dfa(alphabet, states, initial, tuple(tuple(int(t) for t in row) for row in delta))

    if "select_states" in data:
        chosen = frozenset(int(q) for q in data["select_states"])
        if isinstance(machine, Pfa):
            return ProbabilisticSelector(machine, chosen)
        return Selector(machine, chosen)
    if "bets" in data:
        mu = measure_from_text(alphabet, data.get("measure", "uniform"), exact)
        bets = tuple(parse_weights(row, exact) for row in data["bets"])
        if isinstance(machine, Pfa):
            return ProbabilisticGambler(machine, bets, mu)
        return Gambler(machine, bets, mu)
    raise ValidationError("Automaton file needs either 'select_states' or 'bets'")


def _load_mapping(path: str | Path) -> dict[str, Any]:
    p = Path(path)
    try:
        if p.suffix == ".toml":
            with open(p, "rb") as f:
                return tomllib.load(f)
        with open(p, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"Automaton file not found: {p}") from None
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ValidationError(f"Cannot parse {p}: {e}") from None


def load_automaton(path: str | Path, exact: bool | None = None) -> Automaton:
    automaton = parse_automaton(_load_mapping(path), exact)
    logger.info(f"Loaded {type(automaton).__name__} from {path}")
    return automaton


# ---------------------------------------------------------------------------
# Dumping
# ---------------------------------------------------------------------------

def _weight_out(w: Weight) -> float | str:
    if isinstance(w, Fraction):
        return str(w) if w.denominator != 1 else int(w)
    return float(w)


def dump_automaton(automaton: Automaton) -> dict[str, Any]:
    """Inverse of parse_automaton; rationals are written as 'p/q' strings."""
    machine = automaton.pfa if isinstance(automaton, (ProbabilisticSelector, ProbabilisticGambler)) else automaton.dfa
    out: dict[str, Any] = {
        "alphabet": list(machine.alphabet.symbols),
        "states": machine.num_states,
        "initial": machine.initial,
    }
    if isinstance(machine, Pfa):
        out["delta"] = [
            [[{"target": j, "probability": _weight_out(p)} for j, p in enumerate(row) if p > 0] for row in per_state]
            for per_state in machine.delta
        ]
    else:
        out["delta"] = [list(row) for row in machine.delta]
    if isinstance(automaton, (Selector, ProbabilisticSelector)):
        out["select_states"] = sorted(automaton.select_states)
    else:
        out["bets"] = [[_weight_out(b) for b in row] for row in automaton.bets]
        out["measure"] = [_weight_out(p) for p in automaton.measure.probabilities]
    return out


def write_automaton(path: str | Path, automaton: Automaton) -> None:
    Path(path).write_text(json.dumps(dump_automaton(automaton), indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Wrote automaton to {path}")


# ---------------------------------------------------------------------------
# Battery generators
# ---------------------------------------------------------------------------

def parity_dfa(alphabet: Alphabet, flip: int = 1) -> Dfa:
    """Two states; the letter `flip` toggles the state, every other letter keeps it."""
    return Dfa(alphabet, 2, 0, tuple(tuple(q ^ (a == flip) for a in range(alphabet.size)) for q in range(2)))


def bounded_suffix_tracker(alphabet: Alphabet, depth: int) -> tuple[Dfa, list[tuple[int, ...]]]:
    if not 0 <= depth <= MAX_SUFFIX_DEPTH:
        raise ValidationError(f"Suffix trackers are limited to depth {MAX_SUFFIX_DEPTH}, got {depth}")
    return suffix_tracker_dfa(alphabet, depth)


def random_dfa(alphabet: Alphabet, states: int, seed: int) -> Dfa:
    rng = RandomSource(seed)
    targets = (rng.u64(states * alphabet.size) % states).tolist()
    k = alphabet.size
    return Dfa(alphabet, states, 0, tuple(tuple(int(t) for t in targets[q * k:(q + 1) * k]) for q in range(states)))


def random_select_states(states: int, seed: int) -> frozenset[int]:
    flags = (RandomSource(seed, 1).u64(states) % 2).tolist()
    chosen = frozenset(q for q, f in enumerate(flags) if f)
    return chosen or frozenset({0})


def stay_leave_pfa(alphabet: Alphabet, stay: Weight) -> Pfa:
    """Two states; on every letter stay with probability `stay`, switch otherwise."""
    leave = 1 - stay
    rows = ((stay, leave), (leave, stay))
    return Pfa(alphabet, 2, 0, tuple(tuple(rows[q] for _ in range(alphabet.size)) for q in range(2)))


def noisy_parity_pfa(alphabet: Alphabet, noise: Weight, flip: int = 1) -> Pfa:
    """Parity automaton whose transition goes the wrong way with probability `noise`."""
    one = 1 - noise
    per_state = []
    for q in range(2):
        row = []
        for a in range(alphabet.size):
            target = q ^ (a == flip)
            row.append((one, noise) if target == 0 else (noise, one))
        per_state.append(tuple(row))
    return Pfa(alphabet, 2, 0, tuple(per_state))


# ---------------------------------------------------------------------------
# Batteries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatteryEntry:
    """One battery automaton; gamblers derive their bets ν(a)/μ(a) for whichever μ they are built against."""

    name: str
    kind: str
    spec: dict[str, Any] = field(repr=False)

    @property
    def probabilistic(self) -> bool:
        return self.kind.startswith("pfa-")

    @property
    def is_gambler(self) -> bool:
        return self.kind.endswith("gambler")

    def machine(self, alphabet: Alphabet) -> tuple[Dfa | Pfa, list[tuple[int, ...]] | None]:
        spec = self.spec
        generator = spec.get("generator", "explicit")
        if generator == "parity":
            return parity_dfa(alphabet, int(spec.get("flip", 1))), None
        if generator == "suffix-tracker":
            return bounded_suffix_tracker(alphabet, int(spec.get("depth", 1)))
        if generator == "random":
            return random_dfa(alphabet, int(spec.get("states", 3)), int(spec.get("seed", 0))), None
        if generator == "stay-leave":
            return stay_leave_pfa(alphabet, parse_weight(spec.get("stay", "1/2"), exact=True)), None
        if generator == "noisy-parity":
            return noisy_parity_pfa(alphabet, parse_weight(spec.get("noise", "1/4"), exact=True),
                                    int(spec.get("flip", 1))), None
        if generator == "explicit":
            data = {"alphabet": list(alphabet.symbols), **spec, "select_states": [0]}
            parsed = parse_automaton(data)
            return (parsed.pfa if isinstance(parsed, ProbabilisticSelector) else parsed.dfa), None
        raise ValidationError(f"Battery entry {self.name!r}: unknown generator {generator!r}")

    def _state_index(self, key: str | int, words: list[tuple[int, ...]] | None, alphabet: Alphabet) -> int:
        """Suffix trackers name states by their word (\"\" for the empty word); others by index."""
        if words is not None:
            return words.index(alphabet.word(str(key)).letters)
        return int(key)

    def build(self, mu: BernoulliMeasure) -> Automaton:
        alphabet = mu.alphabet
        machine, words = self.machine(alphabet)
        spec = self.spec
        if not self.is_gambler:
            if "select" in spec:
                chosen = frozenset(self._state_index(v, words, alphabet) for v in spec["select"])
            elif spec.get("generator") == "random":
                chosen = random_select_states(machine.num_states, int(spec.get("seed", 0)))
            else:
                chosen = frozenset(int(q) for q in spec.get("select_states", []))
            if isinstance(machine, Pfa):
                return ProbabilisticSelector(machine, chosen)
            return Selector(machine, chosen)

        one: Weight = Fraction(1) if mu.exact else 1.0
        bets = [tuple([one] * alphabet.size) for _ in range(machine.num_states)]
        for key, row in spec.get("nu", {}).items():
            q = self._state_index(key, words, alphabet)
            nu = parse_weights(row, exact=mu.exact)
            if len(nu) != alphabet.size:
                raise ValidationError(f"Battery entry {self.name!r}: ν row for {key!r} has {len(nu)} entries")
            bets[q] = tuple(x / p for x, p in zip(nu, mu.probabilities))
        if isinstance(machine, Pfa):
            return ProbabilisticGambler(machine, tuple(bets), mu)
        return Gambler(machine, tuple(bets), mu)


@dataclass(frozen=True)
class Battery:
    name: str
    version: int
    entries: tuple[BatteryEntry, ...]

    def of_kind(self, *kinds: str) -> list[BatteryEntry]:
        return [e for e in self.entries if e.kind in kinds]


KINDS = ("selector", "gambler", "pfa-selector", "pfa-gambler")


def list_batteries(battery_dir: str | Path = BATTERY_DIR) -> list[Path]:
    d = Path(battery_dir)
    if not d.is_dir():
        return []
    return sorted(p for p in d.glob("*.toml") if p.is_file())


def load_battery(name_or_path: str | Path, battery_dir: str | Path = BATTERY_DIR) -> Battery:
    """Load a battery by name (batteries/<name>.toml) or by explicit path."""
    path = Path(name_or_path)
    if not path.suffix:
        path = Path(battery_dir) / f"{name_or_path}.toml"
    data = _load_mapping(path)
    entries = []
    for raw in data.get("automaton", []):
        if not isinstance(raw, dict) or not raw.get("name"):
            raise ValidationError(f"{path}: every battery automaton must have a name")
        kind = raw.get("kind", "selector")
        if kind not in KINDS:
            raise ValidationError(f"{path}: automaton {raw['name']!r} has unknown kind {kind!r}")
        spec = {key: value for key, value in raw.items() if key not in ("name", "kind")}
        entries.append(BatteryEntry(raw["name"], kind, spec))
    if not entries:
        raise ValidationError(f"{path}: battery must contain at least one [[automaton]] block")
    battery = Battery(str(data.get("name", path.stem)), int(data.get("version", 1)), tuple(entries))
    logger.info(f"Loaded battery {battery.name!r} v{battery.version} with {len(entries)} automata")
    return battery
