"""Probabilistic finite automata, their Monte Carlo runs, and derandomization over A × 𝒯.

A PFA run on X has the same law as a deterministic run on X ⊗ T, where T is
IID from τ, the product over (q, a) of the transition distributions δ(q, a),
viewed as a measure on function tables t: Q × A → Q.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import cached_property, partial
from fractions import Fraction
from typing import Sequence

import numpy as np

from .automata import (
    CHUNK,
    Dfa,
    Gambler,
    ProductAlphabet,
    Selection,
    Selector,
    TableAlphabet,
    bet_table_violations,
    join_measure,
    join_streams,
    select,
)
from .core import (
    Alphabet,
    BernoulliMeasure,
    GuardError,
    RandomSource,
    SymbolStream,
    SYMBOL_DTYPE,
    ValidationError,
    Weight,
    Word,
    cdf_table,
    check_distribution,
    check_memory,
    cumulative,
    follow_maps,
    map_span,
    sample_index,
    sampled_maps,
)
from .trials import run_trials

logger = logging.getLogger(__name__)

DEFAULT_FUNCTION_TABLE_CAP = 10 ** 6
EXACT_MAX_WORD_LENGTH = 16
EXACT_MAX_STATES = 8
LIFTED_ENUMERATION_CAP = 10 ** 5
# Sampled runs build a (states x states) map per step; above this they step one symbol at a time.
SAMPLED_MAP_STATE_LIMIT = 64


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pfa:
    """delta[q][a][q'] is the probability of moving q -> q' on letter a."""

    alphabet: Alphabet
    num_states: int
    initial: int
    delta: tuple[tuple[tuple[Weight, ...], ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", tuple(tuple(tuple(row) for row in per_state) for per_state in self.delta))
        if self.num_states < 1:
            raise ValidationError("A PFA needs at least one state")
        if not 0 <= self.initial < self.num_states:
            raise ValidationError(f"Initial state {self.initial} out of range 0..{self.num_states - 1}")
        if len(self.delta) != self.num_states:
            raise ValidationError(f"delta has {len(self.delta)} rows for {self.num_states} states")
        for q, per_state in enumerate(self.delta):
            if len(per_state) != self.alphabet.size:
                raise ValidationError(f"delta[{q}] has {len(per_state)} letters, expected {self.alphabet.size}")
            for a, row in enumerate(per_state):
                if len(row) != self.num_states:
                    raise ValidationError(f"delta[{q}][{a}] has {len(row)} targets, expected {self.num_states}")
                check_distribution(row, f"delta[{q}][{a}]")

    @classmethod
    def from_dfa(cls, d: Dfa) -> Pfa:
        def point(target: int) -> tuple[Fraction, ...]:
            return tuple(Fraction(1) if j == target else Fraction(0) for j in range(d.num_states))

        return cls(d.alphabet, d.num_states, d.initial, tuple(tuple(point(t) for t in row) for row in d.delta))

    @property
    def exact(self) -> bool:
        return all(isinstance(p, Fraction) for per_state in self.delta for row in per_state for p in row)

    def support(self, q: int, a: int) -> list[tuple[int, Weight]]:
        return [(j, p) for j, p in enumerate(self.delta[q][a]) if p > 0]

    @property
    def is_deterministic(self) -> bool:
        return all(len(self.support(q, a)) == 1 for q in range(self.num_states) for a in range(self.alphabet.size))

    def cdf_rows(self) -> list[list[list[float]]]:
        return [[cumulative(row).tolist() for row in per_state] for per_state in self.delta]

    @cached_property
    def _cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        return cdf_table(np.asarray([[[float(p) for p in row] for row in per_state] for per_state in self.delta]))

    def sampled_trace(self, symbols: np.ndarray, u: np.ndarray, start: int) -> tuple[np.ndarray, int]:
        """States before each symbol when step i draws its target with uniform u[i], and the final state."""
        if len(symbols) == 0:
            return np.empty(0, dtype=SYMBOL_DTYPE), start
        q = start
        if self.num_states > SAMPLED_MAP_STATE_LIMIT:
            cdfs = self.cdf_rows()
            states = [0] * len(symbols)
            for i, (a, x) in enumerate(zip(symbols.tolist(), u.tolist())):
                states[i] = q
                q = sample_index(cdfs[q][a], x)
            return np.asarray(states, dtype=SYMBOL_DTYPE), q
        cdf, last = self._cdf_table
        span = map_span(self.num_states ** 2)
        parts = []
        for lo in range(0, len(symbols), span):
            maps = sampled_maps(cdf, last, symbols[lo:lo + span], u[lo:lo + span])
            after = follow_maps(maps, q)
            parts.append(np.concatenate(([q], after[:-1])).astype(SYMBOL_DTYPE))
            q = int(after[-1])
        return np.concatenate(parts), q

    def transition_matrix(self, mu: BernoulliMeasure) -> np.ndarray:
        """P[i, j] = Σ_a μ(a)·δ(i, a)(j)."""
        p = mu.as_array()
        d = np.asarray([[[float(x) for x in row] for row in per_state] for per_state in self.delta])
        return np.einsum("a,iaj->ij", p, d)


@dataclass(frozen=True)
class ProbabilisticSelector:
    pfa: Pfa
    select_states: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "select_states", frozenset(int(q) for q in self.select_states))
        bad = [q for q in self.select_states if not 0 <= q < self.pfa.num_states]
        if bad:
            raise ValidationError(f"Select states {sorted(bad)} are not states of the automaton")


@dataclass(frozen=True)
class ProbabilisticGambler:
    pfa: Pfa
    bets: tuple[tuple[Weight, ...], ...]
    measure: BernoulliMeasure

    def __post_init__(self) -> None:
        object.__setattr__(self, "bets", tuple(tuple(row) for row in self.bets))
        if self.measure.alphabet.size != self.pfa.alphabet.size:
            raise ValidationError("Gambler measure and automaton alphabets differ in size")
        if len(self.bets) != self.pfa.num_states:
            raise ValidationError(f"bets has {len(self.bets)} rows for {self.pfa.num_states} states")
        violations = bet_table_violations(self.bets, self.measure)
        if violations:
            raise ValidationError("; ".join(violations))

    @property
    def exact(self) -> bool:
        return self.pfa.exact and self.measure.exact and all(isinstance(b, Fraction) for row in self.bets for b in row)

    def log_bets(self) -> np.ndarray:
        table = np.asarray([[float(b) for b in row] for row in self.bets], dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.log(table)


@dataclass(frozen=True)
class FunctionTable:
    """Deterministic resolution t: Q × A -> Q of a PFA's random transitions."""

    targets: tuple[tuple[int, ...], ...]

    def __call__(self, q: int, a: int) -> int:
        return self.targets[q][a]


@dataclass(frozen=True)
class TauMeasure:
    tables: tuple[FunctionTable, ...]
    weights: tuple[Weight, ...]

    def __post_init__(self) -> None:
        if len(self.tables) != len(self.weights) or not self.tables:
            raise ValidationError("τ needs one positive weight per function table")
        if any(w <= 0 for w in self.weights):
            raise ValidationError("τ weights must be positive; prune zero-weight tables")
        check_distribution(self.weights, "τ")

    @property
    def size(self) -> int:
        return len(self.tables)

    @property
    def exact(self) -> bool:
        return all(isinstance(w, Fraction) for w in self.weights)

    def alphabet(self) -> TableAlphabet:
        return TableAlphabet.of_count(len(self.tables))

    def measure(self) -> BernoulliMeasure:
        return BernoulliMeasure(self.alphabet(), self.weights)

    def marginal_violations(self, pfa: Pfa) -> list[str]:
        """Check Σ_{t: t(q,a)=q'} τ(t) = δ(q,a)(q') for every (q, a, q')."""
        problems: list[str] = []
        exact = self.exact and pfa.exact
        for q in range(pfa.num_states):
            for a in range(pfa.alphabet.size):
                marginal: list = [Fraction(0) if exact else 0.0] * pfa.num_states
                for table, w in zip(self.tables, self.weights):
                    marginal[table(q, a)] += w
                for j, expected in enumerate(pfa.delta[q][a]):
                    got = marginal[j]
                    if exact and got != expected:
                        problems.append(f"({q},{a})->{j}: τ marginal {got} != δ {expected}")
                    elif not exact and abs(float(got) - float(expected)) > 1e-9:
                        problems.append(f"({q},{a})->{j}: τ marginal {float(got)!r} != δ {float(expected)!r}")
        return problems


@dataclass(frozen=True)
class LiftedAutomaton:
    """Deterministic selector or gambler over A × 𝒯 with δ̂(q, (a, t)) = t(q, a)."""

    automaton: Selector | Gambler
    tau: TauMeasure
    product: ProductAlphabet

    @property
    def dfa(self) -> Dfa:
        return self.automaton.dfa


# ---------------------------------------------------------------------------
# Monte Carlo runs
# ---------------------------------------------------------------------------

def run_pfa_select(sel: ProbabilisticSelector, s: SymbolStream, n: int, rng: RandomSource) -> Selection:
    """One sampled run; one uniform per step picks the next state by inverse CDF."""
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    chosen = np.asarray(sorted(sel.select_states), dtype=SYMBOL_DTYPE)
    q = sel.pfa.initial
    picked: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for chunk in s.chunks(n, CHUNK):
        states, q = sel.pfa.sampled_trace(chunk, rng.random(len(chunk)), q)
        m = np.isin(states, chosen)
        masks.append(m)
        picked.append(chunk[m])
    if not masks:
        return Selection(s.alphabet, np.empty(0, dtype=SYMBOL_DTYPE), np.empty(0, dtype=bool))
    return Selection(s.alphabet, np.concatenate(picked), np.concatenate(masks))


def run_pfa_gamble(g: ProbabilisticGambler, s: SymbolStream, n: int, rng: RandomSource) -> np.ndarray:
    """Sampled log-capital trajectory (natural log, -inf once capital hits 0)."""
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    logs = g.log_bets()
    q = g.pfa.initial
    offset = 0.0
    parts: list[np.ndarray] = []
    for chunk in s.chunks(n, CHUNK):
        states, q = g.pfa.sampled_trace(chunk, rng.random(len(chunk)), q)
        cum = np.cumsum(logs[states, chunk]) + offset
        offset = float(cum[-1])
        parts.append(cum)
    if not parts:
        return np.empty(0, dtype=np.float64)
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Derandomization
# ---------------------------------------------------------------------------

def enumerate_function_tables(
    pfa: Pfa, cap: int = DEFAULT_FUNCTION_TABLE_CAP, memory_cap: int | None = None
) -> TauMeasure:
    """All positive-weight tables under τ = ⊗_{(q,a)} δ(q, a), in product order.

    memory_cap bounds the tables plus the lifted automaton's transitions, one Q × k block each.
    """
    k = pfa.alphabet.size
    supports = [pfa.support(q, a) for q in range(pfa.num_states) for a in range(k)]
    count = math.prod(len(s) for s in supports)
    if count > cap:
        raise GuardError(f"PFA has {count} function tables, above the cap of {cap}; use the Monte Carlo path")
    check_memory(2 * count * pfa.num_states * k, memory_cap, f"{count} function tables and their lifted transitions")
    one: Weight = Fraction(1) if pfa.exact else 1.0
    tables: list[FunctionTable] = []
    weights: list[Weight] = []
    for combo in itertools.product(*supports):
        weight = one
        flat = []
        for target, p in combo:
            flat.append(target)
            weight *= p
        tables.append(FunctionTable(tuple(tuple(flat[q * k:(q + 1) * k]) for q in range(pfa.num_states))))
        weights.append(weight)
    logger.debug(f"Enumerated {len(tables)} function tables for a {pfa.num_states}-state PFA")
    return TauMeasure(tuple(tables), tuple(weights))


def _lifted_dfa(pfa: Pfa, tau: TauMeasure) -> tuple[Dfa, ProductAlphabet]:
    product = ProductAlphabet.of(pfa.alphabet, tau.alphabet())
    rows = tuple(
        tuple(table(q, a) for a in range(pfa.alphabet.size) for table in tau.tables)
        for q in range(pfa.num_states)
    )
    return Dfa(product, pfa.num_states, pfa.initial, rows), product


def lift_selector(sel: ProbabilisticSelector, tau: TauMeasure) -> LiftedAutomaton:
    dfa, product = _lifted_dfa(sel.pfa, tau)
    return LiftedAutomaton(Selector(dfa, sel.select_states), tau, product)


def lift_gambler(g: ProbabilisticGambler, tau: TauMeasure) -> LiftedAutomaton:
    """γ̂(q, (a, t)) = γ(q, a); fair against μ ⊗ τ by construction."""
    dfa, product = _lifted_dfa(g.pfa, tau)
    bets = tuple(tuple(b for b in row for _ in tau.tables) for row in g.bets)
    return LiftedAutomaton(Gambler(dfa, bets, join_measure(g.measure, tau.measure())), tau, product)


def run_lifted_select(lifted: LiftedAutomaton, s: SymbolStream, n: int, rng: RandomSource) -> Selection:
    """select(Ŝ, X ⊗ T, n) with T drawn IID from τ, projected back onto A."""
    from .generators import IidStream

    tables = IidStream(lifted.tau.measure(), rng)
    selection = select(lifted.automaton, join_streams(s, tables), n)
    return Selection(s.alphabet, selection.symbols // lifted.tau.size, selection.mask)


def derandomized_select(
    sel: ProbabilisticSelector,
    s: SymbolStream,
    n: int,
    rng: RandomSource,
    cap: int = DEFAULT_FUNCTION_TABLE_CAP,
    memory_cap: int | None = None,
) -> Selection:
    """Lifted deterministic run when τ fits under the caps, direct Monte Carlo otherwise."""
    try:
        tau = enumerate_function_tables(sel.pfa, cap, memory_cap)
    except GuardError as e:
        logger.info(f"{e}; falling back to direct sampling")
        return run_pfa_select(sel, s, n, rng)
    return run_lifted_select(lift_selector(sel, tau), s, n, rng)


# ---------------------------------------------------------------------------
# Exact output distributions
# ---------------------------------------------------------------------------

def _letters(w: Word | Sequence[int]) -> tuple[int, ...]:
    return w.letters if isinstance(w, Word) else tuple(w)


def _guard_exact(num_states: int, length: int) -> None:
    if length > EXACT_MAX_WORD_LENGTH or num_states > EXACT_MAX_STATES:
        raise GuardError(
            f"Exact distribution limited to |w| <= {EXACT_MAX_WORD_LENGTH} and <= {EXACT_MAX_STATES} states "
            f"(got |w|={length}, states={num_states})"
        )


def _to_words(alphabet: Alphabet, dist: dict[tuple[int, ...], Weight]) -> dict[Word, Weight]:
    return {Word(alphabet, out): p for out, p in sorted(dist.items())}


def exact_select_distribution(sel: ProbabilisticSelector, w: Word | Sequence[int]) -> dict[Word, Weight]:
    """Law of the selected word on input w, by forward DP over (state, emitted word)."""
    letters = _letters(w)
    pfa = sel.pfa
    _guard_exact(pfa.num_states, len(letters))
    one: Weight = Fraction(1) if pfa.exact else 1.0
    layer: dict[tuple[int, tuple[int, ...]], Weight] = {(pfa.initial, ()): one}
    for a in letters:
        nxt: dict[tuple[int, tuple[int, ...]], Weight] = defaultdict(lambda: 0 * one)
        for (q, out), p in layer.items():
            emitted = out + (a,) if q in sel.select_states else out
            for target, pr in pfa.support(q, a):
                nxt[(target, emitted)] += p * pr
        layer = nxt
    totals: dict[tuple[int, ...], Weight] = defaultdict(lambda: 0 * one)
    for (_, out), p in layer.items():
        totals[out] += p
    return _to_words(pfa.alphabet, totals)


def lifted_select_distribution(lifted: LiftedAutomaton, w: Word | Sequence[int]) -> dict[Word, Weight]:
    """Law of π_0(select(Ŝ, w ⊗ T)) with T ~ τ^|w|, summing τ(t) per step over the lifted automaton."""
    letters = _letters(w)
    dfa = lifted.dfa
    _guard_exact(dfa.num_states, len(letters))
    chosen = lifted.automaton.select_states
    one: Weight = Fraction(1) if lifted.tau.exact else 1.0
    layer: dict[tuple[int, tuple[int, ...]], Weight] = {(dfa.initial, ()): one}
    for a in letters:
        nxt: dict[tuple[int, tuple[int, ...]], Weight] = defaultdict(lambda: 0 * one)
        for (q, out), p in layer.items():
            emitted = out + (a,) if q in chosen else out
            for t, weight in enumerate(lifted.tau.weights):
                nxt[(dfa.delta[q][lifted.product.pair(a, t)], emitted)] += p * weight
        layer = nxt
    totals: dict[tuple[int, ...], Weight] = defaultdict(lambda: 0 * one)
    for (_, out), p in layer.items():
        totals[out] += p
    return _to_words(lifted.product.left, totals)


def enumerate_lifted_selections(
    lifted: LiftedAutomaton,
    w: Word | Sequence[int],
    cap: int = LIFTED_ENUMERATION_CAP,
) -> dict[Word, Weight]:
    """Brute force: run Ŝ on w ⊗ T for every T-prefix and weight by τ^|w|(T)."""
    letters = _letters(w)
    tau = lifted.tau
    count = tau.size ** len(letters)
    if count > cap:
        raise GuardError(f"{count} table prefixes to enumerate, above the cap of {cap}")
    dfa = lifted.dfa
    chosen = lifted.automaton.select_states
    one: Weight = Fraction(1) if tau.exact else 1.0
    totals: dict[tuple[int, ...], Weight] = defaultdict(lambda: 0 * one)
    for prefix in itertools.product(range(tau.size), repeat=len(letters)):
        z = [lifted.product.pair(a, t) for a, t in zip(letters, prefix)]
        q = dfa.initial
        out: list[int] = []
        weight = one
        for symbol, t in zip(z, prefix):
            if q in chosen:
                out.append(lifted.product.unpair(symbol)[0])
            q = dfa.delta[q][symbol]
            weight *= tau.weights[t]
        totals[tuple(out)] += weight
    return _to_words(lifted.product.left, totals)


def exact_capital_distribution(
    g: ProbabilisticGambler,
    w: Word | Sequence[int],
    initial: Weight = 1,
) -> dict[Weight, Weight]:
    """Law of capital(G, w) by forward DP over (state, capital)."""
    letters = _letters(w)
    pfa = g.pfa
    _guard_exact(pfa.num_states, len(letters))
    exact = g.exact
    one: Weight = Fraction(1) if exact else 1.0
    start: Weight = Fraction(initial) if exact else float(initial)
    layer: dict[tuple[int, Weight], Weight] = {(pfa.initial, start): one}
    for a in letters:
        nxt: dict[tuple[int, Weight], Weight] = defaultdict(lambda: 0 * one)
        for (q, cap), p in layer.items():
            new_cap = cap * g.bets[q][a]
            for target, pr in pfa.support(q, a):
                nxt[(target, new_cap)] += p * pr
        layer = nxt
    totals: dict[Weight, Weight] = defaultdict(lambda: 0 * one)
    for (_, cap), p in layer.items():
        totals[cap] += p
    return dict(sorted(totals.items()))


def lifted_capital_distribution(
    lifted: LiftedAutomaton,
    w: Word | Sequence[int],
    initial: Weight = 1,
) -> dict[Weight, Weight]:
    """Law of capital(Ĝ, w ⊗ T) with T ~ τ^|w|."""
    letters = _letters(w)
    g = lifted.automaton
    if not isinstance(g, Gambler):
        raise ValidationError("lifted_capital_distribution needs a lifted gambler")
    dfa = lifted.dfa
    _guard_exact(dfa.num_states, len(letters))
    exact = g.exact
    one: Weight = Fraction(1) if exact else 1.0
    start: Weight = Fraction(initial) if exact else float(initial)
    layer: dict[tuple[int, Weight], Weight] = {(dfa.initial, start): one}
    for a in letters:
        nxt: dict[tuple[int, Weight], Weight] = defaultdict(lambda: 0 * one)
        for (q, cap), p in layer.items():
            for t, weight in enumerate(lifted.tau.weights):
                z = lifted.product.pair(a, t)
                nxt[(dfa.delta[q][z], cap * g.bets[q][z])] += p * weight
        layer = nxt
    totals: dict[Weight, Weight] = defaultdict(lambda: 0 * one)
    for (_, cap), p in layer.items():
        totals[cap] += p
    return dict(sorted(totals.items()))


def total_variation(p: dict, q: dict) -> Weight:
    """½ Σ |p(x) − q(x)| over the union of supports; exact when both are rational."""
    total: Weight = 0
    for key in set(p) | set(q):
        total += abs(p.get(key, 0) - q.get(key, 0))
    return total / 2


def _selected_once(_: int, rng: RandomSource, *, sel: ProbabilisticSelector, w: Word) -> tuple[int, ...]:
    from .seqfile import ArrayStream

    result = run_pfa_select(sel, ArrayStream(w.alphabet, w.as_array()), len(w), rng)
    return tuple(result.symbols.tolist())


def sample_select_distribution(
    sel: ProbabilisticSelector,
    w: Word,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> dict[Word, float]:
    """Empirical law of the selected word over seeded trials on the fixed input w."""
    counts = Counter(run_trials(partial(_selected_once, sel=sel, w=w), seed, trials, workers))
    return {Word(w.alphabet, out): c / trials for out, c in sorted(counts.items())}
