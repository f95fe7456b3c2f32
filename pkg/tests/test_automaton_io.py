"""Automaton files and the bundled batteries."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import pytest

from normality.automata import Gambler, Selector, delta_star
from normality.automaton_io import (
    KINDS,
    bounded_suffix_tracker,
    dump_automaton,
    list_batteries,
    load_automaton,
    load_battery,
    noisy_parity_pfa,
    parse_automaton,
    random_dfa,
    random_select_states,
    stay_leave_pfa,
    write_automaton,
)
from normality.core import Alphabet, BernoulliMeasure, ValidationError, uniform_measure
from normality.probabilistic import ProbabilisticGambler, ProbabilisticSelector, enumerate_function_tables

from tests.fakes import coin_gambler, exact_uniform, parity

THREE_LETTER_GAMBLER = {
    "alphabet": ["a", "b", "c"],
    "states": 1,
    "delta": [[0, 0, 0]],
    "bets": [["7/10", "11/10", "12/10"]],
}


class TestParse:
    def test_selector(self) -> None:
        sel = parse_automaton({"alphabet": ["0", "1"], "states": 2, "delta": [[0, 1], [1, 0]], "select_states": [1]})
        assert isinstance(sel, Selector)
        assert sel.select_states == frozenset({1})
        assert delta_star(sel.dfa, 0, sel.dfa.alphabet.word("101")) == 0

    def test_gambler_fraction_strings_are_exact(self) -> None:
        g = parse_automaton(THREE_LETTER_GAMBLER)
        assert isinstance(g, Gambler)
        assert g.exact
        assert g.bets[0] == (Fraction(7, 10), Fraction(11, 10), Fraction(6, 5))
        assert g.measure.probabilities == (Fraction(1, 3),) * 3

    def test_float_gambler(self) -> None:
        g = parse_automaton({"alphabet": ["0", "1"], "states": 1, "delta": [[0, 0]], "bets": [[1.5, 0.5]]})
        assert not g.exact

    def test_forced_exact(self) -> None:
        g = parse_automaton({"alphabet": ["0", "1"], "states": 1, "delta": [[0, 0]], "bets": [[1.5, 0.5]]}, exact=True)
        assert g.bets[0] == (Fraction(3, 2), Fraction(1, 2))

    def test_explicit_measure(self) -> None:
        g = parse_automaton({"alphabet": ["0", "1"], "states": 1, "delta": [[0, 0]],
                             "bets": [["2", "0"]], "measure": ["1/2", "1/2"]})
        assert g.bets[0] == (Fraction(2), Fraction(0))

    def test_unfair_gambler(self) -> None:
        with pytest.raises(ValidationError):
            parse_automaton({"alphabet": ["0", "1"], "states": 1, "delta": [[0, 0]], "bets": [["2", "1"]]})

    def test_pfa_selector(self) -> None:
        sel = parse_automaton({
            "alphabet": ["0", "1"],
            "states": 2,
            "delta": [
                [[{"target": 0, "probability": "1/2"}, {"target": 1, "probability": "1/2"}], [{"target": 1, "probability": 1}]],
                [[{"target": 0, "probability": 1}], [{"target": 1, "probability": 1}]],
            ],
            "select_states": [0],
        })
        assert isinstance(sel, ProbabilisticSelector)
        assert sel.pfa.exact
        assert sel.pfa.delta[0][0] == (Fraction(1, 2), Fraction(1, 2))

    def test_pfa_gambler(self) -> None:
        g = parse_automaton({
            "alphabet": ["0", "1"],
            "states": 1,
            "delta": [[[{"target": 0, "probability": 1}], [{"target": 0, "probability": 1}]]],
            "bets": [["1/2", "3/2"]],
        })
        assert isinstance(g, ProbabilisticGambler)

    def test_missing_field(self) -> None:
        with pytest.raises(ValidationError, match="states"):
            parse_automaton({"alphabet": ["0", "1"], "delta": [[0, 0]], "select_states": []})

    def test_neither_select_nor_bets(self) -> None:
        with pytest.raises(ValidationError):
            parse_automaton({"alphabet": ["0", "1"], "states": 1, "delta": [[0, 0]]})

    def test_row_count(self) -> None:
        with pytest.raises(ValidationError):
            parse_automaton({"alphabet": ["0", "1"], "states": 2, "delta": [[0, 0]], "select_states": []})

    def test_pfa_entry_shape(self) -> None:
        with pytest.raises(ValidationError, match="target"):
            parse_automaton({"alphabet": ["0", "1"], "states": 1,
                             "delta": [[[{"to": 0}], [{"target": 0, "probability": 1}]]], "select_states": [0]})

    def test_pfa_row_not_stochastic(self) -> None:
        with pytest.raises(ValidationError):
            parse_automaton({"alphabet": ["0", "1"], "states": 1,
                             "delta": [[[{"target": 0, "probability": "1/2"}], [{"target": 0, "probability": 1}]]],
                             "select_states": [0]})


class TestFiles:
    def test_json_file(self, tmp_path: Path) -> None:
        path = tmp_path / "g.json"
        path.write_text(json.dumps(THREE_LETTER_GAMBLER))
        assert load_automaton(path).exact

    def test_toml_file(self, tmp_path: Path) -> None:
        path = tmp_path / "s.toml"
        path.write_text('alphabet = ["0", "1"]\nstates = 1\ndelta = [[0, 0]]\nselect_states = [0]\n')
        assert isinstance(load_automaton(path), Selector)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ValidationError, match="not found"):
            load_automaton(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ValidationError, match="Cannot parse"):
            load_automaton(path)

    def test_write_then_load_pfa_gambler(self, tmp_path: Path, binary: Alphabet) -> None:
        g = coin_gambler(binary, exact_uniform(binary), (Fraction(3, 2), Fraction(1, 2)))
        path = tmp_path / "g.json"
        write_automaton(path, g)
        assert load_automaton(path) == g

    def test_dump_selector(self, binary: Alphabet) -> None:
        out = dump_automaton(Selector(parity(binary), frozenset({1, 0})))
        assert out == {"alphabet": ["0", "1"], "states": 2, "initial": 0, "delta": [[0, 1], [1, 0]],
                       "select_states": [0, 1]}

    def test_dump_writes_fractions_as_strings(self) -> None:
        out = dump_automaton(parse_automaton(THREE_LETTER_GAMBLER))
        assert out["bets"] == [["7/10", "11/10", "6/5"]]
        assert out["measure"] == ["1/3", "1/3", "1/3"]


class TestGenerators:
    def test_suffix_depth_limit(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            bounded_suffix_tracker(binary, 4)

    def test_random_dfa_is_seeded(self, binary: Alphabet) -> None:
        assert random_dfa(binary, 5, 3) == random_dfa(binary, 5, 3)
        assert random_dfa(binary, 5, 3).num_states == 5

    def test_random_select_states_never_empty(self) -> None:
        for seed in range(20):
            chosen = random_select_states(3, seed)
            assert chosen
            assert chosen <= {0, 1, 2}

    def test_stay_leave(self, binary: Alphabet) -> None:
        pfa = stay_leave_pfa(binary, Fraction(1, 3))
        assert pfa.delta[1][0] == (Fraction(2, 3), Fraction(1, 3))

    def test_noisy_parity(self, binary: Alphabet) -> None:
        pfa = noisy_parity_pfa(binary, Fraction(1, 4))
        # from state 0, letter 1 should flip to state 1 with probability 3/4
        assert pfa.delta[0][1] == (Fraction(1, 4), Fraction(3, 4))
        assert enumerate_function_tables(pfa).size == 16


class TestBatteries:
    def test_bundled_batteries(self) -> None:
        names = [p.stem for p in list_batteries()]
        assert "default" in names
        assert "derand" in names

    def test_default_battery_builds_against_uniform(self, binary: Alphabet) -> None:
        battery = load_battery("default")
        assert battery.version >= 1
        mu = uniform_measure(binary, exact=True)
        for entry in battery.entries:
            assert entry.kind in KINDS
            automaton = entry.build(mu)
            if entry.is_gambler:
                assert automaton.measure == mu

    def test_battery_builds_against_biased_measure(self, binary: Alphabet) -> None:
        mu = BernoulliMeasure(binary, (Fraction(2, 3), Fraction(1, 3)))
        for entry in load_battery("default").of_kind("gambler", "pfa-gambler"):
            assert entry.build(mu).measure == mu

    def test_suffix_selector_names_states_by_word(self, binary: Alphabet) -> None:
        entry = next(e for e in load_battery("default").entries if e.name == "after-zero")
        sel = entry.build(uniform_measure(binary))
        q = delta_star(sel.dfa, 0, binary.word("10"))
        assert q in sel.select_states

    def test_gambler_bets_follow_nu(self, binary: Alphabet) -> None:
        entry = next(e for e in load_battery("default").entries if e.name == "parity-bettor")
        g = entry.build(uniform_measure(binary, exact=True))
        assert g.bets[1] == (Fraction(3, 2), Fraction(1, 2))
        assert g.bets[0] == (1, 1)

    def test_derand_battery_is_probabilistic(self) -> None:
        assert all(e.probabilistic for e in load_battery("derand").entries)

    def test_load_by_path(self, tmp_path: Path) -> None:
        path = tmp_path / "mine.toml"
        path.write_text('version = 3\n[[automaton]]\nname = "p"\ngenerator = "parity"\nselect_states = [0]\n')
        battery = load_battery(path)
        assert battery.name == "mine"
        assert battery.version == 3
        assert battery.entries[0].kind == "selector"

    def test_unknown_kind(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.toml"
        path.write_text('[[automaton]]\nname = "p"\nkind = "oracle"\n')
        with pytest.raises(ValidationError, match="unknown kind"):
            load_battery(path)

    def test_unnamed_entry(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.toml"
        path.write_text('[[automaton]]\nkind = "selector"\n')
        with pytest.raises(ValidationError, match="name"):
            load_battery(path)

    def test_empty_battery(self, tmp_path: Path) -> None:
        path = tmp_path / "empty.toml"
        path.write_text('name = "empty"\n')
        with pytest.raises(ValidationError, match="at least one"):
            load_battery(path)

    def test_unknown_generator(self, tmp_path: Path, binary: Alphabet) -> None:
        path = tmp_path / "b.toml"
        path.write_text('[[automaton]]\nname = "p"\ngenerator = "magic"\n')
        with pytest.raises(ValidationError, match="unknown generator"):
            load_battery(path).entries[0].build(uniform_measure(binary))
