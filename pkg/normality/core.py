"""Foundational types: alphabets, words, symbol streams, Bernoulli measures, seeded randomness."""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

Weight = Union[float, Fraction]

MAX_ALPHABET_SIZE = 255
PROBABILITY_TOLERANCE = 1e-12
PRNG_ALGORITHM = "numpy.PCG64/SeedSequence"
SYMBOL_DTYPE = np.int64


class ValidationError(ValueError):
    """An input violates a documented invariant (alphabet, measure, automaton, file format)."""


class GuardError(RuntimeError):
    """A size or memory guard refused the request."""


# bytes per table cell; counts and state indices are 64-bit
ENTRY_BYTES = np.dtype(np.int64).itemsize


def check_memory(entries: int, memory_cap: int | None, what: str) -> None:
    """Raise GuardError when `entries` 64-bit cells would need more than memory_cap bytes."""
    if memory_cap is not None and entries * ENTRY_BYTES > memory_cap:
        raise GuardError(f"{what} needs {entries * ENTRY_BYTES} bytes, above the memory cap of {memory_cap}")


# ---------------------------------------------------------------------------
# Alphabets and words
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Alphabet:
    """Ordered finite alphabet; symbols are addressed by index 0..k-1, labels are display only."""

    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        self._check_size()
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError(f"Alphabet labels must be distinct: {self.symbols}")

    def _check_size(self) -> None:
        k = len(self.symbols)
        if k < 2:
            raise ValidationError(f"Alphabet needs at least 2 symbols, got {k}")
        if k > MAX_ALPHABET_SIZE:
            raise ValidationError(f"Alphabet limited to {MAX_ALPHABET_SIZE} symbols, got {k}")

    @classmethod
    def of_size(cls, k: int) -> Alphabet:
        return cls(tuple(str(i) for i in range(k)))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, label: str) -> int:
        try:
            return self.symbols.index(label)
        except ValueError:
            raise ValidationError(f"Unknown symbol {label!r} for alphabet {self.symbols}") from None

    def label(self, index: int) -> str:
        return self.symbols[index]

    def word(self, text: str | Sequence[str]) -> Word:
        """Parse a word from its labels: a plain string for one-character labels, or a list."""
        if isinstance(text, str):
            if all(len(s) == 1 for s in self.symbols):
                labels: Sequence[str] = list(text)
            else:
                labels = [t for t in text.split(",") if t]
        else:
            labels = text
        return Word(self, tuple(self.index(lab) for lab in labels))

    def word_from_code(self, code: int, length: int) -> Word:
        """Inverse of Word.code: base-k digits, first letter most significant."""
        letters = []
        for _ in range(length):
            code, digit = divmod(code, self.size)
            letters.append(digit)
        return Word(self, tuple(reversed(letters)))


@dataclass(frozen=True)
class Word:
    """Finite word over an alphabet, stored as symbol indices."""

    alphabet: Alphabet
    letters: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "letters", tuple(int(a) for a in self.letters))
        k = self.alphabet.size
        for a in self.letters:
            if not 0 <= a < k:
                raise ValidationError(f"Symbol index {a} out of range for alphabet of size {k}")

    def __len__(self) -> int:
        return len(self.letters)

    def __add__(self, other: Word) -> Word:
        if other.alphabet != self.alphabet:
            raise ValidationError("Cannot concatenate words over different alphabets")
        return Word(self.alphabet, self.letters + other.letters)

    def __getitem__(self, item: int | slice) -> int | Word:
        if isinstance(item, slice):
            return Word(self.alphabet, self.letters[item])
        return self.letters[item]

    def __str__(self) -> str:
        labels = [self.alphabet.label(a) for a in self.letters]
        if all(len(lab) == 1 for lab in self.alphabet.symbols):
            return "".join(labels)
        return ",".join(labels)

    @property
    def is_empty(self) -> bool:
        return not self.letters

    @property
    def code(self) -> int:
        """Base-k integer code of the word (first letter most significant)."""
        code = 0
        for a in self.letters:
            code = code * self.alphabet.size + a
        return code

    def as_array(self) -> np.ndarray:
        return np.asarray(self.letters, dtype=SYMBOL_DTYPE)

    @classmethod
    def from_array(cls, alphabet: Alphabet, symbols: Iterable[int]) -> Word:
        return cls(alphabet, tuple(int(a) for a in symbols))


def empty_word(alphabet: Alphabet) -> Word:
    return Word(alphabet, ())


# ---------------------------------------------------------------------------
# Streams
# ---------------------------------------------------------------------------

class SymbolStream(ABC):
    """Pull-based infinite symbol source.

    Subclasses implement _produce(count) returning the next `count` symbols; the
    result must not depend on how a run is split into calls, so next() and take()
    can be mixed freely without changing the sequence.
    """

    def __init__(self, alphabet: Alphabet) -> None:
        self.alphabet = alphabet
        self.position = 0
        self._buffer = np.empty(0, dtype=SYMBOL_DTYPE)
        self._buffer_pos = 0

    @abstractmethod
    def _produce(self, count: int) -> np.ndarray: ...

    def _fill_size(self) -> int:
        return 1024

    def next(self) -> int:
        if self._buffer_pos >= len(self._buffer):
            self._buffer = np.asarray(self._produce(self._fill_size()), dtype=SYMBOL_DTYPE)
            self._buffer_pos = 0
        symbol = int(self._buffer[self._buffer_pos])
        self._buffer_pos += 1
        self.position += 1
        return symbol

    def take(self, n: int) -> np.ndarray:
        """Return the next n symbols as an integer array."""
        if n < 0:
            raise ValidationError(f"Cannot take a negative number of symbols: {n}")
        buffered = self._buffer[self._buffer_pos:self._buffer_pos + n]
        self._buffer_pos += len(buffered)
        rest = n - len(buffered)
        if rest > 0:
            out = np.concatenate([buffered, np.asarray(self._produce(rest), dtype=SYMBOL_DTYPE)])
        else:
            out = buffered.copy()
        self.position += n
        return out

    def chunks(self, n: int, chunk_size: int = 1 << 16) -> Iterable[np.ndarray]:
        """Yield the next n symbols in bounded chunks."""
        remaining = n
        while remaining > 0:
            size = min(chunk_size, remaining)
            yield self.take(size)
            remaining -= size

    def __iter__(self) -> SymbolStream:
        return self

    def __next__(self) -> int:
        return self.next()


# ---------------------------------------------------------------------------
# Bernoulli measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_measure(mu: BernoulliMeasure | Sequence[Weight]) -> MeasureReport:
    """Check positivity and normalization; exact check when every weight is a Fraction."""
    weights = list(mu.probabilities) if isinstance(mu, BernoulliMeasure) else list(mu)
    violations: list[str] = []
    zero_or_negative = [i for i, p in enumerate(weights) if p <= 0]
    if zero_or_negative:
        violations.append(f"positivity: weights at {zero_or_negative} are not > 0")
    total = sum(weights)
    if all(isinstance(p, Fraction) for p in weights):
        if total != 1:
            violations.append(f"normalization: weights sum to {total}, expected exactly 1")
    elif abs(float(total) - 1.0) > PROBABILITY_TOLERANCE:
        violations.append(f"normalization: weights sum to {float(total)!r}, expected 1 within {PROBABILITY_TOLERANCE}")
    return MeasureReport(tuple(violations))


@dataclass(frozen=True)
class BernoulliMeasure:
    """Positive distribution over an alphabet, extended multiplicatively to words."""

    alphabet: Alphabet
    probabilities: tuple[Weight, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probabilities", tuple(self.probabilities))
        if len(self.probabilities) != self.alphabet.size:
            raise ValidationError(
                f"Measure has {len(self.probabilities)} weights for an alphabet of size {self.alphabet.size}"
            )
        report = validate_measure(self.probabilities)
        if not report.ok:
            raise ValidationError("; ".join(report.violations))

    @property
    def exact(self) -> bool:
        return all(isinstance(p, Fraction) for p in self.probabilities)

    def __getitem__(self, symbol: int) -> Weight:
        return self.probabilities[symbol]

    def as_array(self) -> np.ndarray:
        return np.asarray([float(p) for p in self.probabilities], dtype=np.float64)

    def to_exact(self) -> BernoulliMeasure:
        return BernoulliMeasure(self.alphabet, tuple(to_fraction(p) for p in self.probabilities))

    def word_table(self, length: int) -> np.ndarray:
        """μ(w) for every word of the given length, indexed by Word.code."""
        table = np.ones(1, dtype=np.float64)
        p = self.as_array()
        for _ in range(length):
            table = np.kron(table, p)
        return table


def to_fraction(value: Weight | str) -> Fraction:
    """Exact rational from a float (via its decimal repr), a Fraction, or a string like '1/3'."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ValidationError(f"Not a real number: {value!r}")
    return Fraction(repr(float(value)))


def parse_weight(value: Weight | str, exact: bool = False) -> Weight:
    """Parse one probability or bet. Strings containing '/' are always exact."""
    if isinstance(value, str):
        text = value.strip()
        try:
            if exact or "/" in text:
                return Fraction(text)
            return float(text)
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"Invalid weight {value!r}") from None
    if exact:
        return to_fraction(value)
    if isinstance(value, Fraction):
        return value
    return float(value)


def parse_weights(text: str | Sequence[Weight | str], exact: bool = False) -> tuple[Weight, ...]:
    """Parse '0.5,0.5' / '1/3,2/3' or a list of numbers. Mixed exact/float inputs fall back to float."""
    items = text.split(",") if isinstance(text, str) else list(text)
    weights = tuple(parse_weight(item, exact) for item in items if not (isinstance(item, str) and not item.strip()))
    if not exact and any(isinstance(w, Fraction) for w in weights) and not all(isinstance(w, Fraction) for w in weights):
        weights = tuple(float(w) for w in weights)
    return weights


def measure_of_word(mu: BernoulliMeasure, w: Word) -> Weight:
    """Product of letter probabilities; the empty word has measure 1."""
    if w.alphabet != mu.alphabet:
        raise ValidationError("Word and measure are over different alphabets")
    result: Weight = Fraction(1) if mu.exact else 1.0
    for a in w.letters:
        result *= mu.probabilities[a]
    return result


def uniform_measure(alphabet: Alphabet, exact: bool = False) -> BernoulliMeasure:
    k = alphabet.size
    weight: Weight = Fraction(1, k) if exact else 1.0 / k
    return BernoulliMeasure(alphabet, (weight,) * k)


def measure_from_text(alphabet: Alphabet, text: str | Sequence[Weight | str], exact: bool = False) -> BernoulliMeasure:
    if isinstance(text, str) and text.strip().lower() == "uniform":
        return uniform_measure(alphabet, exact)
    return BernoulliMeasure(alphabet, parse_weights(text, exact))


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

@dataclass
class RandomSource:
    """Seeded 64-bit generator (numpy PCG64 via SeedSequence).

    Substreams for trial i come from SeedSequence(seed, spawn_key=(i,)), which
    hashes (seed, i) into independent, non-overlapping PCG64 states. A non-zero
    lane gives a second independent stream for the same trial (e.g. the source
    and the automaton's coin flips).
    """

    seed: int
    trial: int | None = None
    lane: int = 0
    algorithm: str = field(default=PRNG_ALGORITHM, init=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        spawn_key: tuple[int, ...] = () if self.trial is None else (self.trial,)
        if self.lane:
            spawn_key = (self.trial or 0, self.lane)
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=spawn_key)))

    def substream(self, trial: int, lane: int = 0) -> RandomSource:
        return RandomSource(self.seed, trial, lane)

    def random(self, size: int) -> np.ndarray:
        """Uniform doubles in [0, 1); one 64-bit draw per value, so chunking does not change the sequence."""
        return self._generator.random(size)

    def next_u64(self) -> int:
        return int(self._generator.integers(0, 2 ** 64, dtype=np.uint64))

    def u64(self, size: int) -> np.ndarray:
        return self._generator.integers(0, 2 ** 64, size=size, dtype=np.uint64)


def sample_index(cdf: Sequence[float], u: float) -> int:
    """Inverse-CDF draw: first index whose cumulative sum is strictly above u.

    Rounding can leave the last cumulative value just under 1; draws past it land
    on the last index with positive mass.
    """
    lo, hi = 0, len(cdf)
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    if lo >= len(cdf):
        lo = len(cdf) - 1
        while lo > 0 and cdf[lo] == cdf[lo - 1]:
            lo -= 1
    return lo


def cumulative(weights: Sequence[Weight]) -> np.ndarray:
    return np.cumsum(np.asarray([float(w) for w in weights], dtype=np.float64))


def sample_indices(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized sample_index over an array of uniforms."""
    idx = np.searchsorted(cdf, u, side="right")
    last = len(cdf) - 1
    while last > 0 and cdf[last] == cdf[last - 1]:
        last -= 1
    return np.minimum(idx, last).astype(SYMBOL_DTYPE)


def cdf_table(probabilities: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative sums along the last axis, and the index sample_index falls back to for each row."""
    cdf = np.cumsum(np.asarray(probabilities, dtype=np.float64), axis=-1)
    width = cdf.shape[-1]
    moved = np.ones(cdf.shape, dtype=bool)
    moved[..., 1:] = cdf[..., 1:] != cdf[..., :-1]
    last = np.where(moved, np.arange(width), 0).max(axis=-1)
    return cdf, last.astype(SYMBOL_DTYPE)


def sampled_maps(cdf: np.ndarray, last: np.ndarray, symbols: np.ndarray, u: np.ndarray) -> np.ndarray:
    """maps[i, q] = sample_index(cdf[q, symbols[i]], u[i]) for every state q at once.

    cdf has shape (states, letters, targets), last has shape (states, letters).
    """
    rows = cdf[:, symbols, :].transpose(1, 0, 2)
    picks = np.count_nonzero(rows <= u[:, None, None], axis=2)
    return np.minimum(picks, last[:, symbols].T).astype(SYMBOL_DTYPE)


# ---------------------------------------------------------------------------
# State maps
# ---------------------------------------------------------------------------

# Entries per (steps, states) map table handed to follow_maps.
MAP_BUDGET = 1 << 22


def map_span(entries_per_step: int) -> int:
    """Steps per map table so that steps * entries_per_step stays within MAP_BUDGET."""
    return max(1, MAP_BUDGET // max(1, entries_per_step))


def follow_maps(maps: np.ndarray, start: int) -> np.ndarray:
    """States after each step when step i moves q to maps[i, q], starting from `start`.

    The steps are cut into about sqrt(n) blocks. One pass composes each block
    into a single map (all blocks in lockstep), a short scalar walk finds every
    block's entry state, and a second lockstep pass fills in the states.
    """
    n, size = maps.shape
    if n == 0:
        return np.empty(0, dtype=SYMBOL_DTYPE)
    width = max(1, math.isqrt(n))
    blocks = -(-n // width)
    pad = blocks * width - n
    if pad:
        identity = np.broadcast_to(np.arange(size, dtype=maps.dtype), (pad, size))
        maps = np.concatenate([maps, identity])
    grid = maps.reshape(blocks, width, size)

    composed = np.broadcast_to(np.arange(size, dtype=maps.dtype), (blocks, size))
    for j in range(width):
        composed = np.take_along_axis(grid[:, j, :], composed, axis=1)

    entries = np.empty(blocks, dtype=np.intp)
    q = int(start)
    for b, row in enumerate(composed.tolist()):
        entries[b] = q
        q = row[q]

    out = np.empty((blocks, width), dtype=SYMBOL_DTYPE)
    rows = np.arange(blocks)
    current = entries
    for j in range(width):
        current = grid[rows, j, current]
        out[:, j] = current
    return out.reshape(-1)[:n]


def check_distribution(weights: Sequence[Weight], what: str) -> None:
    """Raise ValidationError unless weights are non-negative and sum to 1 (exactly for Fractions)."""
    if any(w < 0 for w in weights):
        raise ValidationError(f"{what} has negative entries: {list(weights)}")
    if all(isinstance(w, Fraction) for w in weights):
        total = sum(weights)
        if total != 1:
            raise ValidationError(f"{what} sums to {total}, expected exactly 1")
    else:
        total = math.fsum(float(w) for w in weights)
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ValidationError(f"{what} sums to {total!r}, expected 1")
