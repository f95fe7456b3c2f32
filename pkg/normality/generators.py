"""Sources of the example sequences: Champernowne, morphic fixed points, periodic, Markov and IID."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .core import (
    Alphabet,
    BernoulliMeasure,
    RandomSource,
    SymbolStream,
    SYMBOL_DTYPE,
    ValidationError,
    Weight,
    Word,
    cdf_table,
    check_distribution,
    cumulative,
    follow_maps,
    map_span,
    measure_from_text,
    parse_weights,
    sample_indices,
    sampled_maps,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Champernowne
# ---------------------------------------------------------------------------

class ChampernowneStream(SymbolStream):
    """Concatenation of the base-b numerals of 0, 1, 2, ..."""

    def __init__(self, base: int = 10) -> None:
        if not 2 <= base <= 255:
            raise ValidationError(f"Champernowne base must be in 2..255, got {base}")
        super().__init__(Alphabet.of_size(base))
        self.base = base
        self._next_number = 0
        self._pending: list[int] = []

    def _digits(self, number: int) -> list[int]:
        if number == 0:
            return [0]
        digits = []
        while number:
            number, d = divmod(number, self.base)
            digits.append(d)
        digits.reverse()
        return digits

    def _produce(self, count: int) -> np.ndarray:
        out = self._pending
        while len(out) < count:
            out.extend(self._digits(self._next_number))
            self._next_number += 1
        self._pending = out[count:]
        return np.asarray(out[:count], dtype=SYMBOL_DTYPE)


def champernowne_stream(base: int = 10) -> ChampernowneStream:
    return ChampernowneStream(base)


# ---------------------------------------------------------------------------
# Morphic sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MorphismSpec:
    alphabet: Alphabet
    images: tuple[Word, ...]

    def __post_init__(self) -> None:
        if len(self.images) != self.alphabet.size:
            raise ValidationError(f"Morphism needs one image per symbol ({self.alphabet.size}), got {len(self.images)}")
        for a, image in enumerate(self.images):
            if image.alphabet != self.alphabet:
                raise ValidationError(f"Image of symbol {a} is over a different alphabet")
            if image.is_empty:
                raise ValidationError(f"Image of symbol {a} is empty")

    @classmethod
    def from_text(cls, alphabet: Alphabet, images: Sequence[str]) -> MorphismSpec:
        return cls(alphabet, tuple(alphabet.word(text) for text in images))


THUE_MORSE = MorphismSpec.from_text(Alphabet.of_size(2), ["01", "10"])
FIBONACCI = MorphismSpec.from_text(Alphabet.of_size(2), ["01", "0"])


class MorphicStream(SymbolStream):
    """Lazy fixed point of a prolongable morphism.

    The expansion keeps one read cursor into the already generated prefix and
    appends the image of the symbol under it, so each output symbol costs O(1)
    amortized and memory is the generated prefix only.
    """

    def __init__(
        self,
        morphism: MorphismSpec,
        seed: int = 0,
        relabel: Sequence[int] | None = None,
        drop: int = 0,
    ) -> None:
        super().__init__(morphism.alphabet)
        seed_image = morphism.images[seed].letters
        if seed_image[0] != seed:
            raise ValidationError(
                f"Morphism is not prolongable on symbol {seed}: its image starts with {seed_image[0]}"
            )
        if relabel is not None and sorted(relabel) != list(range(morphism.alphabet.size)):
            raise ValidationError(f"relabel must be a permutation of the alphabet indices, got {list(relabel)}")
        self._images = [bytes(image.letters) for image in morphism.images]
        self._relabel = np.asarray(relabel, dtype=SYMBOL_DTYPE) if relabel is not None else None
        # |image(seed)| == 1 means the seed is a fixed letter: the limit is seed repeated.
        self._constant = len(seed_image) == 1
        self._seed = seed
        self._generated = bytearray(seed_image)
        self._read = 1
        self._emitted = 0
        if drop:
            self._produce(drop)

    def _produce(self, count: int) -> np.ndarray:
        if self._constant:
            out = np.full(count, self._seed, dtype=SYMBOL_DTYPE)
        else:
            target = self._emitted + count
            generated, images = self._generated, self._images
            while len(generated) < target:
                generated.extend(images[generated[self._read]])
                self._read += 1
            out = np.frombuffer(bytes(generated[self._emitted:target]), dtype=np.uint8).astype(SYMBOL_DTYPE)
            self._emitted = target
        if self._relabel is not None:
            out = self._relabel[out]
        return out


def morphic_stream(morphism: MorphismSpec, seed: int = 0, relabel: Sequence[int] | None = None,
                   drop: int = 0) -> MorphicStream:
    return MorphicStream(morphism, seed, relabel=relabel, drop=drop)


def thue_morse_stream() -> MorphicStream:
    return MorphicStream(THUE_MORSE, 0)


def fibonacci_stream(displayed: bool = True) -> MorphicStream:
    """Fibonacci word (0 -> 01, 1 -> 0).

    The commonly displayed form "1001010010..." is the fixed point "0100101001..."
    with its first letter removed; displayed=True yields that form.
    """
    return MorphicStream(FIBONACCI, 0, drop=1 if displayed else 0)


# ---------------------------------------------------------------------------
# Periodic
# ---------------------------------------------------------------------------

class PeriodicStream(SymbolStream):
    def __init__(self, word: Word) -> None:
        if word.is_empty:
            raise ValidationError("Periodic stream needs a non-empty word")
        super().__init__(word.alphabet)
        self._period = word.as_array()
        self._offset = 0

    def _produce(self, count: int) -> np.ndarray:
        idx = (self._offset + np.arange(count)) % len(self._period)
        self._offset = (self._offset + count) % len(self._period)
        return self._period[idx]


def periodic_stream(word: Word) -> PeriodicStream:
    return PeriodicStream(word)


# ---------------------------------------------------------------------------
# Stochastic sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovSourceSpec:
    """First-order Markov source: row-stochastic transition matrix plus initial distribution."""

    alphabet: Alphabet
    transitions: tuple[tuple[Weight, ...], ...]
    initial: tuple[Weight, ...] | None = None

    def __post_init__(self) -> None:
        k = self.alphabet.size
        if len(self.transitions) != k or any(len(row) != k for row in self.transitions):
            raise ValidationError(f"Transition matrix must be {k}x{k}")
        for i, row in enumerate(self.transitions):
            check_distribution(row, f"transition row {i}")
        if self.initial is None:
            object.__setattr__(self, "initial", tuple([1.0 / k] * k))
        elif len(self.initial) != k:
            raise ValidationError(f"Initial distribution must have {k} entries")
        check_distribution(self.initial, "initial distribution")


def correlated_binary_source(p_same: Weight = Fraction(2, 3)) -> MarkovSourceSpec:
    """Binary source where each bit repeats the previous one with probability p_same."""
    p_flip = 1 - p_same
    return MarkovSourceSpec(Alphabet.of_size(2), ((p_same, p_flip), (p_flip, p_same)))


class MarkovStream(SymbolStream):
    def __init__(self, spec: MarkovSourceSpec, rng: RandomSource) -> None:
        super().__init__(spec.alphabet)
        self.spec = spec
        self._rng = rng
        # a single input letter: each step's map depends on its uniform only
        cdf, last = cdf_table(np.asarray([[float(p) for p in row] for row in spec.transitions]))
        self._cdf, self._last = cdf[:, None, :], last[:, None]
        self._initial = cumulative(spec.initial)
        self._state: int | None = None

    def _produce(self, count: int) -> np.ndarray:
        u = self._rng.random(count)
        out = np.empty(count, dtype=SYMBOL_DTYPE)
        if count == 0:
            return out
        lo = 0
        state = self._state
        if state is None:
            state = int(sample_indices(self._initial, u[:1])[0])
            out[0] = state
            lo = 1
        span = map_span(self.alphabet.size ** 2)
        while lo < count:
            hi = min(count, lo + span)
            steps = np.zeros(hi - lo, dtype=SYMBOL_DTYPE)
            after = follow_maps(sampled_maps(self._cdf, self._last, steps, u[lo:hi]), state)
            out[lo:hi] = after
            state = int(after[-1])
            lo = hi
        self._state = state
        return out


def markov_stream(spec: MarkovSourceSpec, rng: RandomSource) -> MarkovStream:
    return MarkovStream(spec, rng)


class IidStream(SymbolStream):
    def __init__(self, mu: BernoulliMeasure, rng: RandomSource) -> None:
        super().__init__(mu.alphabet)
        self.mu = mu
        self._rng = rng
        self._cdf = cumulative(mu.probabilities)

    def _produce(self, count: int) -> np.ndarray:
        return sample_indices(self._cdf, self._rng.random(count))


def iid_stream(mu: BernoulliMeasure, rng: RandomSource) -> IidStream:
    return IidStream(mu, rng)


# ---------------------------------------------------------------------------
# Source factory (config / CLI)
# ---------------------------------------------------------------------------

SOURCE_NAMES = ("champernowne", "thue-morse", "fibonacci", "periodic", "markov", "iid", "file")


def build_source(source_cfg: dict[str, Any], seed: int, trial: int | None = None) -> SymbolStream:
    """Build a stream from a `[source]` config section.

    Stochastic sources draw from RandomSource(seed, trial), so (config, seed, trial)
    fully determines the sequence.
    """
    name = source_cfg.get("name", "iid")
    if name == "champernowne":
        return ChampernowneStream(int(source_cfg.get("base", 10)))
    if name == "thue-morse":
        return thue_morse_stream()
    if name == "fibonacci":
        return fibonacci_stream(bool(source_cfg.get("displayed", True)))
    if name == "morphic":
        alphabet = Alphabet.of_size(int(source_cfg.get("k", 2)))
        spec = MorphismSpec.from_text(alphabet, source_cfg["images"])
        return MorphicStream(spec, int(source_cfg.get("seed_symbol", 0)),
                             relabel=source_cfg.get("relabel"), drop=int(source_cfg.get("drop", 0)))
    if name == "periodic":
        word_text = str(source_cfg.get("word", "01"))
        k = int(source_cfg.get("k", max(2, max(int(c) for c in word_text) + 1)))
        return PeriodicStream(Alphabet.of_size(k).word(word_text))
    if name == "markov":
        if "transitions" in source_cfg:
            rows = tuple(parse_weights(row) for row in source_cfg["transitions"])
            alphabet = Alphabet.of_size(len(rows))
            initial = parse_weights(source_cfg["initial"]) if "initial" in source_cfg else None
            spec = MarkovSourceSpec(alphabet, rows, initial)
        else:
            p_same = parse_weights([source_cfg.get("p_same", "2/3")])[0]
            spec = correlated_binary_source(p_same)
        return MarkovStream(spec, RandomSource(seed, trial))
    if name == "iid":
        text = source_cfg.get("measure", "uniform")
        k = int(source_cfg.get("k", 2 if isinstance(text, str) and text == "uniform" else len(parse_weights(text))))
        return IidStream(measure_from_text(Alphabet.of_size(k), text), RandomSource(seed, trial))
    if name == "file":
        from .seqfile import file_stream
        return file_stream(source_cfg["path"])
    raise ValidationError(f"Unknown source {name!r}; expected one of {', '.join(SOURCE_NAMES)}")
