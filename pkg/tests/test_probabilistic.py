"""PFA runs, function-table enumeration, lifted automata and exact output laws."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from normality import core
from normality.automata import CHUNK, Dfa, ProductAlphabet
from normality.core import Alphabet, GuardError, RandomSource, ValidationError, uniform_measure
from normality.generators import IidStream, PeriodicStream
from normality.probabilistic import (
    SAMPLED_MAP_STATE_LIMIT,
    FunctionTable,
    Pfa,
    ProbabilisticGambler,
    ProbabilisticSelector,
    TauMeasure,
    derandomized_select,
    enumerate_function_tables,
    enumerate_lifted_selections,
    exact_capital_distribution,
    exact_select_distribution,
    lift_gambler,
    lift_selector,
    lifted_capital_distribution,
    lifted_select_distribution,
    run_lifted_select,
    run_pfa_gamble,
    run_pfa_select,
    sample_select_distribution,
    total_variation,
)

from tests.fakes import (
    ListStream,
    coin_gambler,
    coin_pfa,
    coin_selector,
    exact_uniform,
    parity,
    random_pfa,
    stepwise_states,
)

HALF = Fraction(1, 2)


class TestPfa:
    def test_rows_must_be_distributions(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            Pfa(binary, 1, 0, (((HALF,), (Fraction(1),)),))

    def test_from_dfa_is_deterministic(self, binary: Alphabet) -> None:
        pfa = Pfa.from_dfa(parity(binary))
        assert pfa.is_deterministic
        assert pfa.exact
        assert pfa.support(0, 1) == [(1, Fraction(1))]

    def test_coin_is_not_deterministic(self, binary: Alphabet) -> None:
        assert not coin_pfa(binary).is_deterministic

    def test_transition_matrix(self, binary: Alphabet) -> None:
        matrix = coin_pfa(binary, Fraction(3, 4)).transition_matrix(uniform_measure(binary))
        assert matrix == pytest.approx(np.asarray([[0.75, 0.25], [0.25, 0.75]]))

    def test_bad_select_state(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            ProbabilisticSelector(coin_pfa(binary), frozenset({5}))

    def test_gambler_fairness(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            coin_gambler(binary, exact_uniform(binary), (Fraction(2), Fraction(1)))


class TestMonteCarlo:
    def test_deterministic_pfa_matches_dfa(self, binary: Alphabet) -> None:
        sel = ProbabilisticSelector(Pfa.from_dfa(parity(binary)), frozenset({1}))
        symbols = [1, 0, 1, 1, 0, 0, 1]
        result = run_pfa_select(sel, ListStream(binary, symbols), 7, RandomSource(0))
        # state before each symbol: 0 1 1 0 1 1 1
        assert result.mask.tolist() == [False, True, True, False, True, True, True]

    def test_seeded(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        a = run_pfa_select(sel, PeriodicStream(binary.word("01")), 500, RandomSource(3, 0, lane=1))
        b = run_pfa_select(sel, PeriodicStream(binary.word("01")), 500, RandomSource(3, 0, lane=1))
        assert np.array_equal(a.mask, b.mask)

    def test_selection_rate(self, binary: Alphabet) -> None:
        result = run_pfa_select(coin_selector(binary), PeriodicStream(binary.word("01")), 100_000, RandomSource(1))
        assert result.mask.mean() == pytest.approx(0.5, abs=0.01)

    def test_gamble_trajectory_length(self, binary: Alphabet) -> None:
        g = coin_gambler(binary, exact_uniform(binary), (Fraction(3, 2), HALF))
        trajectory = run_pfa_gamble(g, PeriodicStream(binary.word("0")), 1000, RandomSource(2))
        assert len(trajectory) == 1000
        assert np.all(np.diff(trajectory) >= 0)

    def test_select_matches_stepwise_draws(self, ternary: Alphabet, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(core, "MAP_BUDGET", 200)
        pfa = random_pfa(ternary, 4, seed=3)
        sel = ProbabilisticSelector(pfa, frozenset({1, 2}))
        n = CHUNK + 4000
        symbols = np.random.default_rng(4).integers(0, 3, size=n).tolist()
        result = run_pfa_select(sel, ListStream(ternary, symbols), n, RandomSource(9))
        states, _ = stepwise_states(pfa, symbols, RandomSource(9).random(n), pfa.initial)
        mask = np.isin(states, [1, 2])
        assert np.array_equal(result.mask, mask)
        assert result.symbols.tolist() == np.asarray(symbols)[mask].tolist()

    def test_gamble_matches_stepwise_draws(self, ternary: Alphabet) -> None:
        pfa = random_pfa(ternary, 3, seed=6)
        bets = ((HALF, Fraction(3, 2), Fraction(1)), (Fraction(1),) * 3, (Fraction(1, 4), Fraction(5, 4), Fraction(3, 2)))
        g = ProbabilisticGambler(pfa, bets, exact_uniform(ternary))
        symbols = np.random.default_rng(7).integers(0, 3, size=5000).tolist()
        trajectory = run_pfa_gamble(g, ListStream(ternary, symbols), 5000, RandomSource(1, 2))
        states, _ = stepwise_states(pfa, symbols, RandomSource(1, 2).random(5000), pfa.initial)
        expected = np.cumsum([math.log(bets[q][a]) for q, a in zip(states, symbols)])
        assert np.allclose(trajectory, expected)

    def test_large_pfa_steps_one_symbol_at_a_time(self, binary: Alphabet) -> None:
        pfa = random_pfa(binary, SAMPLED_MAP_STATE_LIMIT + 1, seed=2)
        symbols = np.random.default_rng(3).integers(0, 2, size=300)
        states, last = pfa.sampled_trace(symbols, RandomSource(5).random(300), 4)
        expected, q = stepwise_states(pfa, symbols.tolist(), RandomSource(5).random(300), 4)
        assert states.tolist() == expected
        assert last == q

    def test_negative_n(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            run_pfa_select(coin_selector(binary), PeriodicStream(binary.word("0")), -1, RandomSource(0))


class TestFunctionTables:
    def test_coin_table_count(self, binary: Alphabet) -> None:
        tau = enumerate_function_tables(coin_pfa(binary))
        # 2 states x 2 letters, two targets each
        assert tau.size == 16
        assert all(w == Fraction(1, 16) for w in tau.weights)
        assert tau.exact

    def test_memory_cap(self, binary: Alphabet) -> None:
        # 16 tables, each with a 2 x 2 table and a 2 x 2 block of lifted transitions
        assert enumerate_function_tables(coin_pfa(binary), memory_cap=16 * 8 * 8).size == 16
        with pytest.raises(GuardError):
            enumerate_function_tables(coin_pfa(binary), memory_cap=16 * 8 * 8 - 1)

    def test_derandomized_run_falls_back_under_memory_cap(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        direct = run_pfa_select(sel, PeriodicStream(binary.word("01")), 300, RandomSource(4))
        capped = derandomized_select(sel, PeriodicStream(binary.word("01")), 300, RandomSource(4), memory_cap=64)
        assert np.array_equal(direct.mask, capped.mask)

    def test_marginals_reproduce_pfa(self, binary: Alphabet) -> None:
        pfa = coin_pfa(binary, Fraction(1, 3))
        assert enumerate_function_tables(pfa).marginal_violations(pfa) == []

    def test_deterministic_pfa_has_one_table(self, binary: Alphabet) -> None:
        tau = enumerate_function_tables(Pfa.from_dfa(parity(binary)))
        assert tau.size == 1
        assert tau.tables[0] == FunctionTable(((0, 1), (1, 0)))

    def test_cap(self, binary: Alphabet) -> None:
        with pytest.raises(GuardError):
            enumerate_function_tables(coin_pfa(binary), cap=15)

    def test_wrong_tau_is_reported(self, binary: Alphabet) -> None:
        pfa = coin_pfa(binary)
        stay = FunctionTable(((0, 0), (1, 1)))
        tau = TauMeasure((stay,), (Fraction(1),))
        assert tau.marginal_violations(pfa)

    def test_zero_weight_rejected(self) -> None:
        table = FunctionTable(((0, 0),))
        with pytest.raises(ValidationError):
            TauMeasure((table, table), (Fraction(1), Fraction(0)))


class TestLifting:
    def test_lifted_selector_shape(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        tau = enumerate_function_tables(sel.pfa)
        lifted = lift_selector(sel, tau)
        assert isinstance(lifted.product, ProductAlphabet)
        assert lifted.dfa.alphabet.size == 2 * 16
        assert lifted.automaton.select_states == sel.select_states

    def test_lifted_transitions_follow_tables(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        tau = enumerate_function_tables(sel.pfa)
        lifted = lift_selector(sel, tau)
        for t, table in enumerate(tau.tables):
            for q in range(2):
                for a in range(2):
                    assert lifted.dfa.delta[q][lifted.product.pair(a, t)] == table(q, a)

    def test_lifted_gambler_is_fair(self, binary: Alphabet) -> None:
        g = coin_gambler(binary, exact_uniform(binary), (Fraction(3, 2), HALF))
        lifted = lift_gambler(g, enumerate_function_tables(g.pfa))
        assert lifted.automaton.exact

    @pytest.mark.parametrize("word", ["0", "01", "110", "0110"])
    def test_select_laws_agree(self, binary: Alphabet, word: str) -> None:
        sel = coin_selector(binary, Fraction(1, 3))
        lifted = lift_selector(sel, enumerate_function_tables(sel.pfa))
        w = binary.word(word)
        direct = exact_select_distribution(sel, w)
        assert lifted_select_distribution(lifted, w) == direct
        assert enumerate_lifted_selections(lifted, w) == direct
        assert sum(direct.values()) == 1

    @pytest.mark.parametrize("word", ["0", "10", "011"])
    def test_capital_laws_agree(self, binary: Alphabet, word: str) -> None:
        g = coin_gambler(binary, exact_uniform(binary), (Fraction(3, 2), HALF))
        lifted = lift_gambler(g, enumerate_function_tables(g.pfa))
        w = binary.word(word)
        assert total_variation(exact_capital_distribution(g, w), lifted_capital_distribution(lifted, w)) == 0

    def test_known_select_law(self, binary: Alphabet) -> None:
        # coin selector starts unselecting; each step moves to the selecting state with probability 1/2
        dist = exact_select_distribution(coin_selector(binary), binary.word("01"))
        assert dist == {binary.word(""): HALF, binary.word("1"): HALF}

    def test_known_capital_law(self, binary: Alphabet) -> None:
        g = coin_gambler(binary, exact_uniform(binary), (Fraction(3, 2), HALF))
        dist = exact_capital_distribution(g, binary.word("00"))
        assert dist == {Fraction(3, 2): HALF, Fraction(9, 4): HALF}

    def test_enumeration_cap(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        lifted = lift_selector(sel, enumerate_function_tables(sel.pfa))
        with pytest.raises(GuardError):
            enumerate_lifted_selections(lifted, binary.word("00000"), cap=1000)

    def test_exact_guard(self, binary: Alphabet) -> None:
        with pytest.raises(GuardError):
            exact_select_distribution(coin_selector(binary), binary.word("0" * 17))

    def test_lifted_capital_needs_gambler(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        lifted = lift_selector(sel, enumerate_function_tables(sel.pfa))
        with pytest.raises(ValidationError):
            lifted_capital_distribution(lifted, binary.word("0"))


class TestTotalVariation:
    def test_disjoint(self) -> None:
        assert total_variation({"a": 1}, {"b": 1}) == 1

    def test_exact(self) -> None:
        assert total_variation({"a": HALF, "b": HALF}, {"a": Fraction(1, 4), "b": Fraction(3, 4)}) == Fraction(1, 4)


class TestDerandomizedRuns:
    def test_lifted_run_selects_from_input(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        lifted = lift_selector(sel, enumerate_function_tables(sel.pfa))
        symbols = IidStream(uniform_measure(binary), RandomSource(5)).take(2000)
        result = run_lifted_select(lifted, ListStream(binary, symbols.tolist()), 2000, RandomSource(5, 0, lane=1))
        assert result.symbols.tolist() == symbols[result.mask].tolist()
        assert result.mask.mean() == pytest.approx(0.5, abs=0.05)

    def test_fallback_to_direct_sampling(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        direct = run_pfa_select(sel, PeriodicStream(binary.word("01")), 300, RandomSource(1))
        fallback = derandomized_select(sel, PeriodicStream(binary.word("01")), 300, RandomSource(1), cap=1)
        assert np.array_equal(direct.mask, fallback.mask)

    def test_sampled_law_close_to_exact(self, binary: Alphabet) -> None:
        sel = coin_selector(binary)
        w = binary.word("0110")
        exact = exact_select_distribution(sel, w)
        sampled = sample_select_distribution(sel, w, trials=4000, seed=0, workers=1)
        assert float(total_variation(exact, sampled)) < 0.05

    def test_single_symbol_table_alphabet(self, binary: Alphabet) -> None:
        tau = enumerate_function_tables(Pfa.from_dfa(Dfa(binary, 1, 0, ((0, 0),))))
        assert tau.alphabet().size == 1
        assert tau.measure().probabilities == (Fraction(1),)
