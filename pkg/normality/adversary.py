"""Adversarial gambler construction against sequences that are not μ-normal.

Pipeline: find the shortest divergent word w = u·x, estimate the next-letter law
ν after the context u, then bet ν(a)/μ(a) every time the last |u| letters read
equal u. Each visit to that state wins D_KL(ν‖μ) in expectation, so the log
capital grows at rate about μ(u)·D_KL(ν‖μ) per symbol.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .automata import Gambler, log_capital_trajectory, suffix_tracker_dfa
from .core import (
    BernoulliMeasure,
    SymbolStream,
    ValidationError,
    Weight,
    Word,
    measure_of_word,
)
from .stats import conditional_profile, kl_divergence, stream_profile

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.02
DEFAULT_MAX_LENGTH = 4
REFERENCE_HORIZON = 10 ** 6
MIN_HORIZON = 1000

CLUSTER_MAX_KL = "max-kl"
CLUSTER_LAST = "last"


@dataclass(frozen=True)
class DivergenceWitness:
    word: Word
    context: Word
    letter: int
    observed: float
    target: float
    tolerance: float
    horizon: int

    @property
    def deviation(self) -> float:
        return abs(self.observed - self.target)


@dataclass(frozen=True)
class ClusterPointEstimate:
    context: Word
    nu: tuple[float, ...]
    checkpoint: int
    kl: float
    samples: int


@dataclass(frozen=True)
class AttackResult:
    witness: DivergenceWitness | None
    cluster: ClusterPointEstimate | None = None
    gambler: Gambler | None = None
    trajectory: np.ndarray | None = None
    predicted_rate: float = 0.0
    measured_rate: float = 0.0

    @property
    def attacked(self) -> bool:
        return self.gambler is not None


def scaled_tolerance(tol: float, n: int) -> float:
    """Widen tol at short horizons: tol·√(10^6 / n)."""
    return tol * math.sqrt(REFERENCE_HORIZON / n)


def find_minimal_divergent_word(
    s: SymbolStream,
    mu: BernoulliMeasure,
    n: int,
    tol: float = DEFAULT_TOLERANCE,
    max_length: int = DEFAULT_MAX_LENGTH,
    scale: bool = True,
) -> DivergenceWitness | None:
    """First word in (length, lexicographic) order with |freq(w) − μ(w)| > tol over the n-prefix."""
    if n < MIN_HORIZON:
        raise ValidationError(f"Divergence search needs n >= {MIN_HORIZON}, got {n}")
    if s.alphabet.size != mu.alphabet.size:
        raise ValidationError("Stream and measure are over different alphabets")
    effective = scaled_tolerance(tol, n) if scale else tol
    report = stream_profile(s, n, max_length)
    tables = {length: mu.word_table(length) for length in range(1, max_length + 1)}
    for w in report.words():
        observed = report.freq(w)
        target = float(tables[len(w)][w.code])
        if abs(observed - target) > effective:
            witness = DivergenceWitness(w, w[:-1], w[len(w) - 1], observed, target, effective, n)
            logger.info(f"Divergent word {str(w)!r}: freq {observed:.6f} vs μ {target:.6f} (tol {effective:.4f})")
            return witness
    logger.info(f"No divergent word up to length {max_length} at n={n} (tol {effective:.4f})")
    return None


def _floor_distribution(nu: Sequence[float], floor: float) -> tuple[float, ...]:
    if floor <= 0:
        return tuple(nu)
    raised = [max(x, floor) for x in nu]
    total = math.fsum(raised)
    return tuple(x / total for x in raised)


def estimate_cluster_point(
    s: SymbolStream,
    u: Word,
    mu: BernoulliMeasure,
    n: int,
    choice: str = CLUSTER_MAX_KL,
    floor: float = 0.0,
) -> ClusterPointEstimate | None:
    """Pick a checkpoint of the conditional profile after u as the estimate of ν.

    max-kl takes the checkpoint whose law is furthest from μ. Early checkpoints
    carry sampling noise, so on a finite prefix its KL sits above the limit
    (a 2/3 Markov source at 10^6 symbols predicts a rate near 0.036
    against the limit 0.0283);
    last takes the final checkpoint and is close to unbiased.

    Returns None when the chosen ν equals μ (no exploitable divergence).
    """
    profile = conditional_profile(s, u, n)
    if not profile.found:
        raise ValidationError(f"Context {str(u)!r} never occurs in the first {n} symbols")
    mu_weights = mu.as_array()
    if choice == CLUSTER_LAST:
        checkpoint, f = profile.history[-1]
        best = (checkpoint, f, kl_divergence(_floor_distribution(f, floor), mu_weights))
    elif choice == CLUSTER_MAX_KL:
        best = None
        for checkpoint, f in profile.history:
            kl = kl_divergence(_floor_distribution(f, floor), mu_weights)
            if best is None or kl > best[2]:
                best = (checkpoint, f, kl)
    else:
        raise ValidationError(f"Unknown cluster point choice {choice!r}")
    checkpoint, f, kl = best
    if kl <= 0:
        logger.warning(f"Conditional law after {str(u)!r} matches μ; nothing to exploit")
        return None
    return ClusterPointEstimate(u, _floor_distribution(f, floor), checkpoint, kl, profile.samples)


def build_suffix_gambler(u: Word, nu: Sequence[Weight], mu: BernoulliMeasure) -> Gambler:
    """States q_v for |v| <= |u| track the last |u| letters; only q_u bets, with γ(q_u, a) = ν(a)/μ(a)."""
    k = mu.alphabet.size
    if len(nu) != k:
        raise ValidationError(f"ν has {len(nu)} entries for an alphabet of size {k}")
    dfa, states = suffix_tracker_dfa(mu.alphabet, len(u))
    exact = mu.exact and all(isinstance(x, Fraction) for x in nu)
    one: Weight = Fraction(1) if exact else 1.0
    betting = states.index(u.letters)
    if exact:
        bet_row = tuple(x / p for x, p in zip(nu, mu.probabilities))
    else:
        bet_row = tuple(float(x) / float(p) for x, p in zip(nu, mu.probabilities))
    bets = tuple(bet_row if i == betting else tuple([one] * k) for i in range(len(states)))
    return Gambler(dfa, bets, mu)


def measured_growth_rate(trajectory: np.ndarray) -> float:
    """max over the trailing half of log_capital[t] / (t + 1)."""
    n = len(trajectory)
    if n == 0:
        return 0.0
    start = n // 2
    t = np.arange(start, n, dtype=np.float64) + 1.0
    return float(np.max(trajectory[start:] / t))


def attack(
    make_stream: Callable[[], SymbolStream],
    mu: BernoulliMeasure,
    n: int,
    tol: float = DEFAULT_TOLERANCE,
    max_length: int = DEFAULT_MAX_LENGTH,
    choice: str = CLUSTER_MAX_KL,
    floor: float = 0.0,
) -> AttackResult:
    """Witness, cluster point and suffix gambler, then a fresh gambling run on the same source.

    make_stream must return a new stream over the same source configuration on every call.
    """
    witness = find_minimal_divergent_word(make_stream(), mu, n, tol, max_length)
    if witness is None:
        return AttackResult(None)
    cluster = estimate_cluster_point(make_stream(), witness.context, mu, n, choice, floor)
    if cluster is None:
        return AttackResult(witness)
    gambler = build_suffix_gambler(witness.context, cluster.nu, mu)
    trajectory = log_capital_trajectory(gambler, make_stream(), n)
    predicted = float(measure_of_word(mu, witness.context)) * cluster.kl
    measured = measured_growth_rate(trajectory)
    logger.info(f"Attack on context {str(witness.context)!r}: predicted rate {predicted:.6f}, measured {measured:.6f}")
    return AttackResult(witness, cluster, gambler, trajectory, predicted, measured)
