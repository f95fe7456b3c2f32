"""Occurrence counting, sliding and block frequencies, normality deviation, KL divergence, conditional profiles."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import rel_entr

from .core import (
    Alphabet,
    BernoulliMeasure,
    GuardError,
    SymbolStream,
    SYMBOL_DTYPE,
    ValidationError,
    Weight,
    Word,
    check_memory,
)

logger = logging.getLogger(__name__)

DEFAULT_TABLE_CAP = 1 << 20
DEFAULT_MAX_LENGTH = 8
DEFAULT_BURN_IN = 1000
DEFAULT_RATIO = 1.1


def default_max_length(k: int, table_cap: int = DEFAULT_TABLE_CAP) -> int:
    """Largest L <= 8 with k^L <= table_cap."""
    length = 1
    while length < DEFAULT_MAX_LENGTH and k ** (length + 1) <= table_cap:
        length += 1
    return length


def geometric_checkpoints(n: int, burn_in: int = DEFAULT_BURN_IN, ratio: float = DEFAULT_RATIO) -> list[int]:
    """Checkpoints ceil(ratio^j) that are >= burn_in and <= n, always ending at n."""
    points: list[int] = []
    if n >= burn_in:
        j = max(0, math.floor(math.log(burn_in) / math.log(ratio)))
        while True:
            c = math.ceil(ratio ** j)
            if c > n:
                break
            if c >= burn_in and (not points or c > points[-1]):
                points.append(c)
            j += 1
    if not points or points[-1] != n:
        points.append(n)
    return points


def window_codes(symbols: np.ndarray, length: int, k: int) -> np.ndarray:
    """Base-k codes of every length-`length` window (first letter most significant)."""
    if len(symbols) < length:
        return np.empty(0, dtype=np.int64)
    powers = k ** np.arange(length - 1, -1, -1, dtype=np.int64)
    return sliding_window_view(np.asarray(symbols, dtype=np.int64), length) @ powers


# ---------------------------------------------------------------------------
# Batch counting
# ---------------------------------------------------------------------------

def _as_array(w: Word | np.ndarray | Sequence[int]) -> np.ndarray:
    if isinstance(w, Word):
        return w.as_array()
    return np.asarray(w, dtype=SYMBOL_DTYPE)


def nbocc(u: Word | Sequence[int], w: Word | np.ndarray | Sequence[int]) -> int:
    """Number of positions i with w[i..i+|u|-1] = u."""
    needle = _as_array(u)
    if len(needle) == 0:
        raise ValidationError("nbocc needs a non-empty pattern")
    hay = _as_array(w)
    if len(hay) < len(needle):
        return 0
    return int(np.all(sliding_window_view(hay, len(needle)) == needle, axis=1).sum())


def freq(u: Word | Sequence[int], w: Word | np.ndarray | Sequence[int]) -> float:
    """nbocc(u, w) / (|w| - |u| + 1)."""
    m, n = len(_as_array(u)), len(_as_array(w))
    if m == 0:
        raise ValidationError("freq needs a non-empty pattern")
    if n < m:
        raise ValidationError(f"freq needs |w| >= |u|, got |w|={n}, |u|={m}")
    return nbocc(u, w) / (n - m + 1)


# ---------------------------------------------------------------------------
# Streaming counters
# ---------------------------------------------------------------------------

class OccurrenceCounter:
    """Counts of every word of length <= L over the symbols seen so far.

    Tables are indexed by Word.code; the last L-1 symbols are carried between
    updates so windows spanning two chunks are counted exactly once.
    """

    def __init__(
        self, alphabet: Alphabet, max_length: int, table_cap: int = DEFAULT_TABLE_CAP, memory_cap: int | None = None
    ) -> None:
        if max_length < 1:
            raise ValidationError(f"max_length must be >= 1, got {max_length}")
        k = alphabet.size
        if k ** max_length > table_cap:
            raise GuardError(f"Occurrence table k^L = {k}^{max_length} exceeds the cap of {table_cap} entries")
        check_memory(sum(k ** length for length in range(1, max_length + 1)), memory_cap,
                     f"Occurrence tables up to length {max_length}")
        self.alphabet = alphabet
        self.max_length = max_length
        self.counts = [np.zeros(0, dtype=np.int64)] + [np.zeros(k ** length, dtype=np.int64)
                                                       for length in range(1, max_length + 1)]
        self.n = 0
        self._tail = np.empty(0, dtype=SYMBOL_DTYPE)

    def update(self, symbol: int) -> None:
        self.update_many(np.asarray([symbol], dtype=SYMBOL_DTYPE))

    def update_many(self, symbols: np.ndarray) -> None:
        if len(symbols) == 0:
            return
        k = self.alphabet.size
        joined = np.concatenate([self._tail, np.asarray(symbols, dtype=SYMBOL_DTYPE)])
        carried = len(self._tail)
        for length in range(1, self.max_length + 1):
            # windows ending inside the new chunk start at carried - length + 1
            start = max(0, carried - length + 1)
            codes = window_codes(joined[start:], length, k)
            if len(codes):
                self.counts[length] += np.bincount(codes, minlength=k ** length)
        self.n += len(symbols)
        keep = self.max_length - 1
        self._tail = joined[max(0, len(joined) - keep):] if keep else np.empty(0, dtype=SYMBOL_DTYPE)

    def count(self, w: Word) -> int:
        self._check_word(w)
        return int(self.counts[len(w)][w.code])

    def frequency(self, w: Word) -> float:
        self._check_word(w)
        return float(self.frequencies(len(w))[w.code])

    def frequencies(self, length: int) -> np.ndarray:
        denom = self.n - length + 1
        if denom <= 0:
            return np.zeros(self.alphabet.size ** length, dtype=np.float64)
        return self.counts[length] / denom

    def _check_word(self, w: Word) -> None:
        if not 1 <= len(w) <= self.max_length:
            raise ValidationError(f"Word length {len(w)} outside 1..{self.max_length}")

    def snapshot(self) -> FrequencyReport:
        return FrequencyReport(
            alphabet=self.alphabet,
            n=self.n,
            max_length=self.max_length,
            counts=tuple(c.copy() for c in self.counts[1:]),
        )


class BlockCounter:
    """Counts of aligned, non-overlapping blocks of a fixed length."""

    def __init__(
        self, alphabet: Alphabet, block_length: int, table_cap: int = DEFAULT_TABLE_CAP, memory_cap: int | None = None
    ) -> None:
        if block_length < 1:
            raise ValidationError(f"block_length must be >= 1, got {block_length}")
        if alphabet.size ** block_length > table_cap:
            raise GuardError(f"Block table {alphabet.size}^{block_length} exceeds the cap of {table_cap} entries")
        check_memory(alphabet.size ** block_length, memory_cap, f"Block table of length {block_length}")
        self.alphabet = alphabet
        self.block_length = block_length
        self.counts = np.zeros(alphabet.size ** block_length, dtype=np.int64)
        self.n = 0
        self._partial = np.empty(0, dtype=SYMBOL_DTYPE)

    def update_many(self, symbols: np.ndarray) -> None:
        joined = np.concatenate([self._partial, np.asarray(symbols, dtype=SYMBOL_DTYPE)])
        complete = len(joined) // self.block_length * self.block_length
        if complete:
            blocks = joined[:complete].reshape(-1, self.block_length)
            powers = self.alphabet.size ** np.arange(self.block_length - 1, -1, -1, dtype=np.int64)
            self.counts += np.bincount(blocks @ powers, minlength=len(self.counts))
        self._partial = joined[complete:]
        self.n += len(symbols)

    @property
    def blocks(self) -> int:
        return self.n // self.block_length

    def frequencies(self) -> np.ndarray:
        if self.blocks == 0:
            return np.zeros(len(self.counts), dtype=np.float64)
        return self.counts / self.blocks


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Checkpoint:
    n: int
    frequencies: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class FrequencyReport:
    """Immutable snapshot of word frequencies over a prefix, plus checkpoint history."""

    alphabet: Alphabet
    n: int
    max_length: int
    counts: tuple[np.ndarray, ...]
    checkpoints: tuple[Checkpoint, ...] = ()
    freq_min: tuple[np.ndarray, ...] = ()
    freq_max: tuple[np.ndarray, ...] = ()

    def frequencies(self, length: int) -> np.ndarray:
        denom = self.n - length + 1
        if denom <= 0:
            return np.zeros(self.alphabet.size ** length, dtype=np.float64)
        return self.counts[length - 1] / denom

    def count(self, w: Word) -> int:
        return int(self.counts[len(w) - 1][w.code])

    def freq(self, w: Word) -> float:
        if not 1 <= len(w) <= self.max_length:
            raise ValidationError(f"Word length {len(w)} outside 1..{self.max_length}")
        return float(self.frequencies(len(w))[w.code])

    def freq_lower(self, w: Word) -> float:
        """Running minimum of freq(w) over the checkpoints (freq^- estimate)."""
        return float(self.freq_min[len(w) - 1][w.code]) if self.freq_min else self.freq(w)

    def freq_upper(self, w: Word) -> float:
        """Running maximum of freq(w) over the checkpoints (freq^+ estimate)."""
        return float(self.freq_max[len(w) - 1][w.code]) if self.freq_max else self.freq(w)

    def words(self) -> Iterator[Word]:
        """All words of length 1..L in scan order: by length, then lexicographic."""
        for length in range(1, self.max_length + 1):
            for code in range(self.alphabet.size ** length):
                yield self.alphabet.word_from_code(code, length)

    def select_lengths(self, max_length: int) -> FrequencyReport:
        return FrequencyReport(self.alphabet, self.n, max_length, self.counts[:max_length],
                               self.checkpoints, self.freq_min[:max_length], self.freq_max[:max_length])


def profile_symbols(alphabet: Alphabet, symbols: np.ndarray, max_length: int,
                    table_cap: int = DEFAULT_TABLE_CAP, memory_cap: int | None = None) -> FrequencyReport:
    """Frequency report over a materialized sequence (no checkpoints)."""
    counter = OccurrenceCounter(alphabet, max_length, table_cap, memory_cap)
    counter.update_many(symbols)
    return counter.snapshot()


def stream_profile(
    s: SymbolStream,
    n: int,
    max_length: int,
    table_cap: int = DEFAULT_TABLE_CAP,
    burn_in: int = DEFAULT_BURN_IN,
    ratio: float = DEFAULT_RATIO,
    memory_cap: int | None = None,
) -> FrequencyReport:
    """Word frequencies over the first n symbols, with running min/max at geometric checkpoints."""
    if not n >= max_length >= 1:
        raise ValidationError(f"stream_profile needs n >= L >= 1, got n={n}, L={max_length}")
    counter = OccurrenceCounter(s.alphabet, max_length, table_cap, memory_cap)
    checkpoints: list[Checkpoint] = []
    lo: list[np.ndarray] = []
    hi: list[np.ndarray] = []
    for point in geometric_checkpoints(n, burn_in, ratio):
        for chunk in s.chunks(point - counter.n):
            counter.update_many(chunk)
        freqs = tuple(counter.frequencies(length) for length in range(1, max_length + 1))
        checkpoints.append(Checkpoint(point, freqs))
        if point >= burn_in or point == n:
            if not lo:
                lo = [f.copy() for f in freqs]
                hi = [f.copy() for f in freqs]
            else:
                lo = [np.minimum(a, f) for a, f in zip(lo, freqs)]
                hi = [np.maximum(a, f) for a, f in zip(hi, freqs)]
        logger.debug(f"Profile checkpoint n={point}")
    snap = counter.snapshot()
    return FrequencyReport(snap.alphabet, snap.n, max_length, snap.counts, tuple(checkpoints), tuple(lo), tuple(hi))


def bfreq(u: Word, s: SymbolStream, n: int) -> float:
    """Fraction of the floor(n/|u|) aligned blocks of the first n symbols that equal u."""
    if len(u) < 1:
        raise ValidationError("bfreq needs a non-empty word")
    if n < len(u):
        raise ValidationError(f"bfreq needs n >= |u|, got n={n}, |u|={len(u)}")
    counter = BlockCounter(s.alphabet, len(u))
    for chunk in s.chunks(n):
        counter.update_many(chunk)
    return float(counter.frequencies()[u.code])


def block_profile(s: SymbolStream, n: int, block_length: int, memory_cap: int | None = None) -> BlockCounter:
    counter = BlockCounter(s.alphabet, block_length, memory_cap=memory_cap)
    for chunk in s.chunks(n):
        counter.update_many(chunk)
    return counter


# ---------------------------------------------------------------------------
# Deviation scores
# ---------------------------------------------------------------------------

def normality_deviation(r: FrequencyReport, mu: BernoulliMeasure) -> float:
    """max over 1 <= |w| <= L of |freq(w) - μ(w)|."""
    if r.alphabet.size != mu.alphabet.size:
        raise ValidationError("Report and measure are over different alphabets")
    worst = 0.0
    for length in range(1, r.max_length + 1):
        if r.n < length:
            break
        worst = max(worst, float(np.max(np.abs(r.frequencies(length) - mu.word_table(length)))))
    return worst


def balance_deviation(r: FrequencyReport, mu: BernoulliMeasure) -> float:
    """Letter-only deviation: the μ-balanced check."""
    return float(np.max(np.abs(r.frequencies(1) - mu.as_array())))


def kl_divergence(nu: Sequence[Weight], mu: Sequence[Weight]) -> float:
    """D_KL(ν‖μ) in nats, with 0·log 0 = 0."""
    p = np.asarray([float(x) for x in nu], dtype=np.float64)
    q = np.asarray([float(x) for x in mu], dtype=np.float64)
    if p.shape != q.shape:
        raise ValidationError(f"Distributions differ in length: {len(p)} vs {len(q)}")
    if np.any(q <= 0):
        raise ValidationError("KL divergence needs a strictly positive reference distribution")
    if np.any(p < 0):
        raise ValidationError("KL divergence needs a non-negative distribution")
    return max(0.0, float(np.sum(rel_entr(p, q))))


# ---------------------------------------------------------------------------
# Conditional next-letter profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalProfile:
    """f(a) = nbocc(u·a) / Σ_b nbocc(u·b) over a prefix, with checkpoint history."""

    context: Word
    f: tuple[float, ...]
    samples: int
    n: int
    history: tuple[tuple[int, tuple[float, ...]], ...] = field(default=())

    @property
    def found(self) -> bool:
        return self.samples > 0


def conditional_profile(
    s: SymbolStream,
    u: Word,
    n: int,
    burn_in: int = DEFAULT_BURN_IN,
    ratio: float = DEFAULT_RATIO,
) -> ConditionalProfile:
    k = s.alphabet.size
    m = len(u) + 1
    ucode = u.code
    counts = np.zeros(k, dtype=np.int64)
    tail = np.empty(0, dtype=SYMBOL_DTYPE)
    seen = 0
    history: list[tuple[int, tuple[float, ...]]] = []
    for point in geometric_checkpoints(n, burn_in, ratio):
        for chunk in s.chunks(point - seen):
            joined = np.concatenate([tail, chunk])
            codes = window_codes(joined, m, k)
            hits = codes[codes // k == ucode]
            if len(hits):
                counts += np.bincount(hits % k, minlength=k)
            seen += len(chunk)
            tail = joined[max(0, len(joined) - (m - 1)):] if m > 1 else np.empty(0, dtype=SYMBOL_DTYPE)
        total = int(counts.sum())
        if total:
            history.append((point, tuple(float(c) / total for c in counts)))
    total = int(counts.sum())
    if total == 0:
        logger.warning(f"Context {str(u)!r} never occurs in the first {n} symbols")
        return ConditionalProfile(u, tuple([0.0] * k), 0, n, ())
    return ConditionalProfile(u, tuple(float(c) / total for c in counts), total, n, tuple(history))
