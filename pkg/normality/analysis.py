"""Markov-chain view of automaton runs, decay exponents, trajectory classification, balancedness."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.stats import binomtest

from .automata import Dfa, Gambler, Selector
from .core import (
    BernoulliMeasure,
    PROBABILITY_TOLERANCE,
    RandomSource,
    SymbolStream,
    ValidationError,
    Word,
)
from .probabilistic import Pfa, ProbabilisticGambler, ProbabilisticSelector, run_pfa_select
from .stats import window_codes
from .trials import run_trials

logger = logging.getLogger(__name__)

DIRECT_SOLVE_MAX_STATES = 64
POWER_ITERATION_TOLERANCE = 1e-12
POWER_ITERATION_MAX_STEPS = 1_000_000

CONSTANT = "ultimately-constant"
DECAY = "exponential-decay"
GROWTH = "io-exponential-growth"
INCONCLUSIVE = "inconclusive"

MIN_SERIES_LENGTH = 10_000
SLOPE_THRESHOLD = 1e-4
RANGE_THRESHOLD = 1.0

MIN_BALANCE_TRIALS = 100


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainModel:
    matrix: np.ndarray
    initial: int
    bsccs: tuple[tuple[int, ...], ...]
    transient: tuple[int, ...]
    reachable: frozenset[int]

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0]

    def is_recurrent(self, q: int) -> bool:
        return q not in self.transient


@dataclass(frozen=True)
class StationaryInfo:
    """Per-BSCC stationary vectors, absorption weights from the initial state, and their mix."""

    per_bscc: tuple[np.ndarray, ...]
    absorption: np.ndarray
    aggregate: np.ndarray
    input_dependent: bool

    def pi(self, q: int) -> float:
        return float(self.aggregate[q])


def build_chain(automaton: Dfa | Pfa, mu: BernoulliMeasure) -> ChainModel:
    """P[i, j] = Σ_a μ(a)·Pr(i -a-> j), with its bottom strongly connected components."""
    if automaton.alphabet.size != mu.alphabet.size:
        raise ValidationError("Automaton and measure are over different alphabets")
    if isinstance(automaton, Pfa):
        matrix = automaton.transition_matrix(mu)
    else:
        size = automaton.num_states
        matrix = np.zeros((size, size), dtype=np.float64)
        p = mu.as_array()
        for q, row in enumerate(automaton.delta):
            for a, target in enumerate(row):
                matrix[q, target] += p[a]
    sums = matrix.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROBABILITY_TOLERANCE * max(1, matrix.shape[0])):
        raise ValidationError(f"Chain rows do not sum to 1: {sums.tolist()}")

    graph = csr_matrix(matrix > 0)
    count, labels = connected_components(graph, directed=True, connection="strong")
    members: dict[int, list[int]] = {}
    for q, label in enumerate(labels.tolist()):
        members.setdefault(label, []).append(q)
    bottom = []
    for states in members.values():
        inside = set(states)
        leaves = any(target not in inside for q in states for target in np.nonzero(matrix[q] > 0)[0].tolist())
        if not leaves:
            bottom.append(tuple(states))
    bottom.sort()
    recurrent = {q for b in bottom for q in b}
    transient = tuple(q for q in range(matrix.shape[0]) if q not in recurrent)
    order = breadth_first_order(graph, automaton.initial, directed=True, return_predecessors=False)
    logger.debug(f"Chain with {matrix.shape[0]} states: {count} SCCs, {len(bottom)} bottom, {len(transient)} transient")
    return ChainModel(matrix, automaton.initial, tuple(bottom), transient, frozenset(int(q) for q in order))


def _solve_stationary(sub: np.ndarray) -> np.ndarray:
    size = sub.shape[0]
    if size <= DIRECT_SOLVE_MAX_STATES:
        system = np.vstack([sub.T - np.eye(size), np.ones((1, size))])
        rhs = np.zeros(size + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    else:
        # Lazy chain: same stationary law, aperiodic.
        lazy = 0.5 * (sub + np.eye(size))
        pi = np.full(size, 1.0 / size)
        for _ in range(POWER_ITERATION_MAX_STEPS):
            nxt = pi @ lazy
            if np.max(np.abs(nxt - pi)) < POWER_ITERATION_TOLERANCE:
                pi = nxt
                break
            pi = nxt
        else:
            logger.warning(f"Power iteration did not reach {POWER_ITERATION_TOLERANCE} on {size} states")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _absorption(c: ChainModel) -> np.ndarray:
    """Probability of ending in each BSCC when started from the initial state."""
    weights = np.zeros(len(c.bsccs))
    for i, b in enumerate(c.bsccs):
        if c.initial in b:
            weights[i] = 1.0
            return weights
    t = list(c.transient)
    pos = {q: i for i, q in enumerate(t)}
    p_tt = c.matrix[np.ix_(t, t)]
    into = np.stack([c.matrix[np.ix_(t, list(b))].sum(axis=1) for b in c.bsccs], axis=1)
    h = np.linalg.solve(np.eye(len(t)) - p_tt, into)
    return h[pos[c.initial]]


def stationary(c: ChainModel) -> StationaryInfo:
    """Solve πP = π on every BSCC; transient states get π = 0."""
    per_bscc = []
    for b in c.bsccs:
        idx = list(b)
        full = np.zeros(c.num_states)
        full[idx] = _solve_stationary(c.matrix[np.ix_(idx, idx)])
        per_bscc.append(full)
    absorption = _absorption(c)
    aggregate = np.zeros(c.num_states)
    for weight, pi in zip(absorption, per_bscc):
        aggregate += weight * pi
    input_dependent = int(np.count_nonzero(absorption > 0)) > 1
    if input_dependent:
        logger.warning(f"{int(np.count_nonzero(absorption > 0))} bottom components reachable; visit frequencies depend on the input")
    return StationaryInfo(tuple(per_bscc), absorption, aggregate, input_dependent)


def visit_frequencies(d: Dfa, s: SymbolStream, n: int) -> np.ndarray:
    """V_q(n)/n: fraction of the first n steps spent in each state (state before each symbol)."""
    if n < 1:
        raise ValidationError(f"visit_frequencies needs n >= 1, got {n}")
    counts = np.zeros(d.num_states, dtype=np.int64)
    q = d.initial
    for chunk in s.chunks(n):
        states, q = d.trace(chunk, q)
        counts += np.bincount(states, minlength=d.num_states)
    return counts / n


# ---------------------------------------------------------------------------
# Decay exponents
# ---------------------------------------------------------------------------

def alpha_per_state(g: Gambler | ProbabilisticGambler) -> np.ndarray:
    """α_r = Σ_a μ(a)·ln γ(r, a); -inf when some letter has a zero bet."""
    mu = g.measure.as_array()
    logs = g.log_bets()
    out = np.empty(logs.shape[0])
    for r, row in enumerate(logs):
        out[r] = float("-inf") if np.isneginf(row).any() else float(np.dot(mu, row))
    return out


def expected_decay_exponent(g: Gambler | ProbabilisticGambler, info: StationaryInfo) -> float:
    """Σ_r π_r·α_r over positively visited states; at most 0."""
    alphas = alpha_per_state(g)
    total = 0.0
    for pi, alpha in zip(info.aggregate.tolist(), alphas.tolist()):
        if pi <= 0:
            continue
        if alpha == float("-inf"):
            return float("-inf")
        total += pi * alpha
    return min(total, 0.0)


# ---------------------------------------------------------------------------
# Trajectory classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DichotomyVerdict:
    tag: str
    rate: float
    diagnostics: dict[str, Any] = field(default_factory=dict)


def _slope(series: np.ndarray, start: int) -> float:
    x = np.arange(start, start + len(series), dtype=np.float64)
    return float(np.polyfit(x, series, 1)[0])


def classify_trajectory(
    series: Sequence[float] | np.ndarray,
    min_length: int = MIN_SERIES_LENGTH,
    slope_threshold: float = SLOPE_THRESHOLD,
    range_threshold: float = RANGE_THRESHOLD,
) -> DichotomyVerdict:
    """Finite-horizon reading of the constant / decay / i.o.-growth trichotomy.

    Growth: a new running maximum in the last quarter with max/n above the threshold.
    Constant: trailing-half slope below the threshold in magnitude and range below range_threshold.
    Decay: trailing-half slope below -threshold.
    """
    y = np.asarray(series, dtype=np.float64)
    n = len(y)
    if n < min_length:
        return DichotomyVerdict(INCONCLUSIVE, float("nan"), {"reason": f"series shorter than {min_length}"})
    if np.isneginf(y[-1]):
        return DichotomyVerdict(DECAY, float("-inf"), {"reason": "capital reached 0", "zero_at": int(np.argmax(np.isneginf(y)))})

    running = np.maximum.accumulate(y)
    new_max = np.flatnonzero(np.diff(running) > 0) + 1
    last_max = int(new_max[-1]) if len(new_max) else 0
    peak = float(running[-1])
    half = n // 2
    tail = y[half:]
    slope = _slope(tail, half)
    windows = [_slope(part, half + i * len(part)) for i, part in enumerate(np.array_split(tail, 4)) if len(part) > 1]
    diagnostics: dict[str, Any] = {
        "slope": slope,
        "window_slopes": windows,
        "tail_range": float(tail.max() - tail.min()),
        "running_max": peak,
        "last_new_max": last_max,
        "new_max_events_last_quarter": int(np.count_nonzero(new_max >= (3 * n) // 4)),
    }

    if last_max >= (3 * n) // 4 and peak / n > slope_threshold:
        t = np.arange(half, n, dtype=np.float64) + 1.0
        return DichotomyVerdict(GROWTH, float(np.max(tail / t)), diagnostics)
    if abs(slope) < slope_threshold and diagnostics["tail_range"] < range_threshold:
        return DichotomyVerdict(CONSTANT, slope, diagnostics)
    if slope < -slope_threshold:
        return DichotomyVerdict(DECAY, slope, diagnostics)
    return DichotomyVerdict(INCONCLUSIVE, slope, diagnostics)


# ---------------------------------------------------------------------------
# Balancedness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateBalance:
    state: int
    successes: int
    trials: int
    estimate: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class BalancednessEstimate:
    """Monte Carlo estimate, per initial state, of P(good event | input = chunk)."""

    per_state: tuple[StateBalance, ...]
    lam: float
    m: int
    eps: float

    @property
    def minimum(self) -> float:
        return min(s.estimate for s in self.per_state)

    @property
    def maximum(self) -> float:
        return max(s.estimate for s in self.per_state)

    @property
    def balanced(self) -> bool:
        """Every initial state reaches the good event with probability at least 1 − ε."""
        return self.minimum >= 1.0 - self.eps


def select_rate(sel: ProbabilisticSelector, mu: BernoulliMeasure) -> float:
    """λ: stationary visit frequency of the select states in the synchronized chain."""
    info = stationary(build_chain(sel.pfa, mu))
    return float(sum(info.aggregate[q] for q in sel.select_states))


def good_event(
    selected: np.ndarray,
    input_length: int,
    mu: BernoulliMeasure,
    m: int,
    eps: float,
    lam: float,
) -> bool:
    """Every w of length m has |nbocc(w, Y)/|Y| − μ(w)| <= ε, and ||Y|/N − λ| <= ε."""
    size = len(selected)
    if size == 0 or abs(size / input_length - lam) > eps:
        return False
    k = mu.alphabet.size
    occurrences = np.bincount(window_codes(selected, m, k), minlength=k ** m) if size >= m else np.zeros(k ** m)
    return bool(np.all(np.abs(occurrences / size - mu.word_table(m)) <= eps))


def _good_event_trial(
    _: int, rng: RandomSource, *, sel: ProbabilisticSelector, chunk: Word, mu: BernoulliMeasure,
    m: int, eps: float, lam: float,
) -> bool:
    from .seqfile import ArrayStream

    symbols = chunk.as_array()
    result = run_pfa_select(sel, ArrayStream(chunk.alphabet, symbols), len(symbols), rng)
    return good_event(result.symbols, len(symbols), mu, m, eps, lam)


def balancedness_estimate(
    sel: ProbabilisticSelector | Selector,
    chunk: Word,
    m: int,
    eps: float,
    trials: int,
    seed: int,
    mu: BernoulliMeasure,
    lam: float | None = None,
    workers: int | None = None,
    confidence: float = 0.95,
) -> BalancednessEstimate:
    """Estimate the good-event probability for every initial state, with Clopper-Pearson intervals."""
    if trials < MIN_BALANCE_TRIALS:
        raise ValidationError(f"balancedness_estimate needs at least {MIN_BALANCE_TRIALS} trials, got {trials}")
    if len(chunk) < 1 or m < 1:
        raise ValidationError("balancedness_estimate needs a non-empty chunk and m >= 1")
    if isinstance(sel, Selector):
        sel = ProbabilisticSelector(Pfa.from_dfa(sel.dfa), sel.select_states)
    if lam is None:
        lam = select_rate(sel, mu)
    rows = []
    for q0 in range(sel.pfa.num_states):
        started = ProbabilisticSelector(dataclasses.replace(sel.pfa, initial=q0), sel.select_states)
        one = partial(_good_event_trial, sel=started, chunk=chunk, mu=mu, m=m, eps=eps, lam=lam)
        successes = sum(run_trials(one, seed, trials, workers))
        ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="exact")
        rows.append(StateBalance(q0, successes, trials, successes / trials, float(ci.low), float(ci.high)))
    return BalancednessEstimate(tuple(rows), float(lam), m, eps)


def ergodic_check(
    chain: ChainModel,
    info: StationaryInfo,
    visits: np.ndarray,
    n: int,
    tolerance: float = 0.01,
    transient_limit: int | None = None,
) -> list[str]:
    """Recurrent states within tolerance of π; transient states visited at most |Q| times by default.

    With several reachable bottom components a run settles in one of them, so
    visits are compared with the stationary law of the component that took the
    most visits rather than with the absorption-weighted mix.
    """
    limit = chain.num_states if transient_limit is None else transient_limit
    target = info.aggregate
    if info.input_dependent:
        entered = max(range(len(chain.bsccs)), key=lambda i: float(visits[list(chain.bsccs[i])].sum()))
        target = info.per_bscc[entered]
        logger.debug(f"Run settled in bottom component {chain.bsccs[entered]}")
    problems = []
    for q in range(chain.num_states):
        count = int(round(visits[q] * n))
        if q in chain.transient:
            if count > limit:
                problems.append(f"transient state {q} visited {count} times")
        elif target[q] > 0 and abs(visits[q] - target[q]) > tolerance:
            problems.append(f"state {q}: visit frequency {visits[q]:.4f} vs π {target[q]:.4f}")
    return problems
