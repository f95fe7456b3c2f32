"""Deterministic automata, selectors, gamblers, and product-alphabet plumbing."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (
    Alphabet,
    BernoulliMeasure,
    PROBABILITY_TOLERANCE,
    SymbolStream,
    SYMBOL_DTYPE,
    ValidationError,
    Weight,
    Word,
    follow_maps,
    map_span,
    to_fraction,
)

logger = logging.getLogger(__name__)

CHUNK = 1 << 16
# Above this many states a run steps one symbol at a time instead of composing state maps.
MAP_STATE_LIMIT = 512


# ---------------------------------------------------------------------------
# Product alphabets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductAlphabet(Alphabet):
    """A × B in row-major order: pair(a, b) = a·|B| + b."""

    left: Alphabet | None = None
    right: Alphabet | None = None

    def _check_size(self) -> None:
        if self.left is None or self.right is None:
            raise ValidationError("ProductAlphabet needs both factors; build it with ProductAlphabet.of()")
        if len(self.symbols) != self.left.size * self.right.size:
            raise ValidationError("ProductAlphabet labels do not match |A|·|B|")

    @classmethod
    def of(cls, left: Alphabet, right: Alphabet) -> ProductAlphabet:
        labels = tuple(f"({a},{b})" for a in left.symbols for b in right.symbols)
        return cls(labels, left, right)

    def pair(self, a: int, b: int) -> int:
        return a * self.right.size + b

    def unpair(self, z: int) -> tuple[int, int]:
        return divmod(z, self.right.size)


@dataclass(frozen=True)
class TableAlphabet(Alphabet):
    """Alphabet of function-table indices; may have a single symbol and more than 255."""

    def _check_size(self) -> None:
        if len(self.symbols) < 1:
            raise ValidationError("TableAlphabet needs at least one table")

    @classmethod
    def of_count(cls, count: int) -> TableAlphabet:
        return cls(tuple(f"t{i}" for i in range(count)))


# ---------------------------------------------------------------------------
# DFA, selectors, gamblers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dfa:
    alphabet: Alphabet
    num_states: int
    initial: int
    delta: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", tuple(tuple(int(t) for t in row) for row in self.delta))
        if self.num_states < 1:
            raise ValidationError("A DFA needs at least one state")
        if not 0 <= self.initial < self.num_states:
            raise ValidationError(f"Initial state {self.initial} out of range 0..{self.num_states - 1}")
        if len(self.delta) != self.num_states:
            raise ValidationError(f"delta has {len(self.delta)} rows for {self.num_states} states")
        for q, row in enumerate(self.delta):
            if len(row) != self.alphabet.size:
                raise ValidationError(f"delta row {q} has {len(row)} entries, expected {self.alphabet.size}")
            for target in row:
                if not 0 <= target < self.num_states:
                    raise ValidationError(f"delta[{q}] targets invalid state {target}")

    def step(self, q: int, a: int) -> int:
        return self.delta[q][a]

    def trace(self, symbols: np.ndarray, start: int | None = None) -> tuple[np.ndarray, int]:
        """States before each symbol, and the state after the last one."""
        q = self.initial if start is None else start
        symbols = np.asarray(symbols, dtype=SYMBOL_DTYPE)
        if len(symbols) == 0:
            return np.empty(0, dtype=SYMBOL_DTYPE), q
        if self.num_states > MAP_STATE_LIMIT:
            table = [list(row) for row in self.delta]
            states = [0] * len(symbols)
            for i, a in enumerate(symbols.tolist()):
                states[i] = q
                q = table[q][a]
            return np.asarray(states, dtype=SYMBOL_DTYPE), q
        table = np.asarray(self.delta, dtype=SYMBOL_DTYPE)
        span = map_span(self.num_states)
        parts = []
        for lo in range(0, len(symbols), span):
            after = follow_maps(table[:, symbols[lo:lo + span]].T, q)
            parts.append(np.concatenate(([q], after[:-1])).astype(SYMBOL_DTYPE))
            q = int(after[-1])
        return np.concatenate(parts), q


def delta_star(d: Dfa, q: int, w: Word | Sequence[int]) -> int:
    """Iterated transition; δ*(q, ε) = q."""
    letters = w.letters if isinstance(w, Word) else w
    for a in letters:
        q = d.delta[q][a]
    return q


@dataclass(frozen=True)
class Selector:
    dfa: Dfa
    select_states: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "select_states", frozenset(int(q) for q in self.select_states))
        bad = [q for q in self.select_states if not 0 <= q < self.dfa.num_states]
        if bad:
            raise ValidationError(f"Select states {sorted(bad)} are not states of the automaton")


@dataclass(frozen=True)
class Selection:
    """Selected subsequence plus the per-step mask (True where the symbol was taken)."""

    alphabet: Alphabet
    symbols: np.ndarray
    mask: np.ndarray

    @property
    def word(self) -> Word:
        return Word.from_array(self.alphabet, self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)


def select(sel: Selector, s: SymbolStream, n: int) -> Selection:
    """Append X[i] whenever the state before reading it is a select state."""
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    selected = np.asarray(sorted(sel.select_states), dtype=SYMBOL_DTYPE)
    picked: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    q = sel.dfa.initial
    for chunk in s.chunks(n, CHUNK):
        states, q = sel.dfa.trace(chunk, q)
        mask = np.isin(states, selected)
        masks.append(mask)
        picked.append(chunk[mask])
    if not masks:
        return Selection(s.alphabet, np.empty(0, dtype=SYMBOL_DTYPE), np.empty(0, dtype=bool))
    return Selection(s.alphabet, np.concatenate(picked), np.concatenate(masks))


@dataclass(frozen=True)
class Gambler:
    """DFA with per-state bets γ(q, a) ≥ 0, fair against μ: Σ_a μ(a)·γ(q, a) = 1."""

    dfa: Dfa
    bets: tuple[tuple[Weight, ...], ...]
    measure: BernoulliMeasure

    def __post_init__(self) -> None:
        object.__setattr__(self, "bets", tuple(tuple(row) for row in self.bets))
        if self.measure.alphabet.size != self.dfa.alphabet.size:
            raise ValidationError("Gambler measure and automaton alphabets differ in size")
        if len(self.bets) != self.dfa.num_states:
            raise ValidationError(f"bets has {len(self.bets)} rows for {self.dfa.num_states} states")
        violations = fairness_violations(self)
        if violations:
            raise ValidationError("; ".join(violations))

    @property
    def exact(self) -> bool:
        return self.measure.exact and all(isinstance(b, Fraction) for row in self.bets for b in row)

    def is_betting_state(self, q: int) -> bool:
        return any(b != 1 for b in self.bets[q])

    def log_bets(self) -> np.ndarray:
        table = np.asarray([[float(b) for b in row] for row in self.bets], dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.log(table)


def fairness_violations(g: Gambler) -> list[str]:
    """Per-state fairness and non-negativity problems (empty when the gambler is valid)."""
    return bet_table_violations(g.bets, g.measure)


def bet_table_violations(bets: Sequence[Sequence[Weight]], measure: BernoulliMeasure) -> list[str]:
    problems: list[str] = []
    mu = measure.probabilities
    exact = measure.exact and all(isinstance(b, Fraction) for row in bets for b in row)
    for q, row in enumerate(bets):
        if len(row) != len(mu):
            problems.append(f"state {q}: {len(row)} bets for {len(mu)} letters")
            continue
        if any(b < 0 for b in row):
            problems.append(f"state {q}: negative bet")
        if exact:
            total = sum(m * b for m, b in zip(mu, row))
            if total != 1:
                problems.append(f"state {q}: Σ μ(a)γ(q,a) = {total}, expected exactly 1")
        else:
            total = math.fsum(float(m) * float(b) for m, b in zip(mu, row))
            if abs(total - 1.0) > PROBABILITY_TOLERANCE:
                problems.append(f"state {q}: Σ μ(a)γ(q,a) = {total!r}, expected 1")
    return problems


def log_capital_trajectory(g: Gambler, s: SymbolStream, n: int) -> np.ndarray:
    """Natural-log capital after each of the first n symbols; -inf once a zero bet is hit."""
    logs = g.log_bets()
    parts: list[np.ndarray] = []
    q = g.dfa.initial
    offset = 0.0
    for chunk in s.chunks(n, CHUNK):
        states, q = g.dfa.trace(chunk, q)
        steps = logs[states, chunk]
        cum = np.cumsum(steps) + offset
        parts.append(cum)
        offset = float(cum[-1])
    if not parts:
        return np.empty(0, dtype=np.float64)
    return np.concatenate(parts)


def capital_trajectory_exact(g: Gambler, w: Word | Sequence[int], initial: Weight = Fraction(1)) -> list[Fraction]:
    """Exact capital after each letter, starting from `initial` (rational mode)."""
    letters = w.letters if isinstance(w, Word) else list(w)
    capital = to_fraction(initial)
    q = g.dfa.initial
    out: list[Fraction] = []
    for a in letters:
        capital *= to_fraction(g.bets[q][a])
        q = g.dfa.delta[q][a]
        out.append(capital)
    return out


def capital(g: Gambler, w: Word | Sequence[int], initial: Weight = 1.0) -> Weight:
    """capital(G, w) scaled by the initial capital; exact when the gambler is exact."""
    letters = w.letters if isinstance(w, Word) else list(w)
    if g.exact:
        trajectory = capital_trajectory_exact(g, letters, initial)
        return trajectory[-1] if trajectory else to_fraction(initial)
    value = float(initial)
    q = g.dfa.initial
    for a in letters:
        value *= float(g.bets[q][a])
        q = g.dfa.delta[q][a]
    return value


def neutralize_except(g: Gambler, q: int) -> Gambler:
    """G^{[q]}: keep the bets of state q, bet 1 everywhere else."""
    if not 0 <= q < g.dfa.num_states:
        raise ValidationError(f"State {q} out of range")
    one: Weight = Fraction(1) if g.exact else 1.0
    bets = tuple(row if r == q else tuple([one] * len(row)) for r, row in enumerate(g.bets))
    return Gambler(g.dfa, bets, g.measure)


def single_state_gambler(alphabet: Alphabet, bets: Sequence[Weight], mu: BernoulliMeasure) -> Gambler:
    dfa = Dfa(alphabet, 1, 0, (tuple([0] * alphabet.size),))
    return Gambler(dfa, (tuple(bets),), mu)


# ---------------------------------------------------------------------------
# Joins and projections
# ---------------------------------------------------------------------------

class JoinedStream(SymbolStream):
    """Z(n) = (X(n), Y(n)) over the product alphabet."""

    def __init__(self, x: SymbolStream, y: SymbolStream) -> None:
        super().__init__(ProductAlphabet.of(x.alphabet, y.alphabet))
        self._x = x
        self._y = y

    def _produce(self, count: int) -> np.ndarray:
        return self._x.take(count) * self._y.alphabet.size + self._y.take(count)


class ProjectedStream(SymbolStream):
    def __init__(self, z: SymbolStream, side: int) -> None:
        if not isinstance(z.alphabet, ProductAlphabet):
            raise ValidationError("Projection needs a stream over a product alphabet")
        if side not in (0, 1):
            raise ValidationError(f"Projection side must be 0 or 1, got {side}")
        product = z.alphabet
        super().__init__(product.left if side == 0 else product.right)
        self._z = z
        self._side = side
        self._width = product.right.size

    def _produce(self, count: int) -> np.ndarray:
        z = self._z.take(count)
        return z // self._width if self._side == 0 else z % self._width


def join_streams(x: SymbolStream, y: SymbolStream) -> JoinedStream:
    return JoinedStream(x, y)


def project(z: SymbolStream, side: int) -> ProjectedStream:
    return ProjectedStream(z, side)


def join_words(v: Word, w: Word) -> Word:
    if len(v) != len(w):
        raise ValidationError("Joined words must have the same length")
    product = ProductAlphabet.of(v.alphabet, w.alphabet)
    return Word(product, tuple(product.pair(a, b) for a, b in zip(v.letters, w.letters)))


def project_word(z: Word, side: int) -> Word:
    product = z.alphabet
    if not isinstance(product, ProductAlphabet):
        raise ValidationError("Projection needs a word over a product alphabet")
    parts = [product.unpair(c)[side] for c in z.letters]
    return Word(product.left if side == 0 else product.right, tuple(parts))


def join_measure(mu: BernoulliMeasure, nu: BernoulliMeasure) -> BernoulliMeasure:
    """ξ(a, b) = μ(a)·ν(b) over A × B."""
    product = ProductAlphabet.of(mu.alphabet, nu.alphabet)
    weights = tuple(p * r for p in mu.probabilities for r in nu.probabilities)
    return BernoulliMeasure(product, weights)


def marginals(xi: BernoulliMeasure) -> tuple[tuple[Weight, ...], tuple[Weight, ...]]:
    product = xi.alphabet
    if not isinstance(product, ProductAlphabet):
        raise ValidationError("Marginals need a measure over a product alphabet")
    left = [0 * xi.probabilities[0]] * product.left.size
    right = [0 * xi.probabilities[0]] * product.right.size
    for z, p in enumerate(xi.probabilities):
        a, b = product.unpair(z)
        left[a] += p
        right[b] += p
    return tuple(left), tuple(right)


# ---------------------------------------------------------------------------
# Suffix trackers
# ---------------------------------------------------------------------------

def suffix_states(alphabet_size: int, depth: int) -> list[tuple[int, ...]]:
    """All words of length 0..depth, by length then lexicographic; index = state number."""
    states: list[tuple[int, ...]] = [()]
    layer: list[tuple[int, ...]] = [()]
    for _ in range(depth):
        layer = [v + (a,) for v in layer for a in range(alphabet_size)]
        states.extend(layer)
    return states


def suffix_tracker_dfa(alphabet: Alphabet, depth: int) -> tuple[Dfa, list[tuple[int, ...]]]:
    """State q_v holds the last min(depth, n) letters read; starts at q_ε."""
    states = suffix_states(alphabet.size, depth)
    index = {v: i for i, v in enumerate(states)}

    def step(v: tuple[int, ...], a: int) -> int:
        nxt = v + (a,)
        return index[nxt if len(nxt) <= depth else nxt[1:]]

    delta = tuple(tuple(step(v, a) for a in range(alphabet.size)) for v in states)
    return Dfa(alphabet, len(states), 0, delta), states
