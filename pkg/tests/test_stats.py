"""Occurrence counting, frequency profiles, deviation scores, KL divergence and conditional profiles."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normality.core import Alphabet, BernoulliMeasure, GuardError, RandomSource, ValidationError, uniform_measure
from normality.generators import IidStream, MarkovStream, PeriodicStream, correlated_binary_source, thue_morse_stream
from normality.stats import (
    BlockCounter,
    OccurrenceCounter,
    balance_deviation,
    bfreq,
    conditional_profile,
    default_max_length,
    freq,
    geometric_checkpoints,
    kl_divergence,
    nbocc,
    normality_deviation,
    profile_symbols,
    stream_profile,
)

from tests.fakes import ListStream


def bits(text: str) -> list[int]:
    return [int(c) for c in text]


class TestNbocc:
    def test_overlapping(self) -> None:
        assert nbocc(bits("00"), bits("0001000")) == 4

    def test_whole_word(self) -> None:
        assert nbocc(bits("01"), bits("01")) == 1

    def test_absent(self) -> None:
        assert nbocc(bits("111"), bits("0110100110")) == 0

    def test_pattern_longer_than_text(self) -> None:
        assert nbocc(bits("0101"), bits("01")) == 0

    def test_empty_pattern(self) -> None:
        with pytest.raises(ValidationError):
            nbocc([], bits("01"))

    def test_accepts_words(self, binary: Alphabet) -> None:
        assert nbocc(binary.word("1"), binary.word("0110")) == 2


class TestFreq:
    def test_letter(self) -> None:
        assert freq(bits("0"), bits("0101")) == 0.5

    def test_pair_uses_window_count(self) -> None:
        assert freq(bits("01"), bits("0101")) == pytest.approx(2 / 3)

    def test_too_short(self) -> None:
        with pytest.raises(ValidationError):
            freq(bits("011"), bits("01"))


class TestOccurrenceCounter:
    @settings(max_examples=50, deadline=None)
    @given(
        symbols=st.lists(st.integers(min_value=0, max_value=2), min_size=0, max_size=60),
        cut=st.integers(min_value=0, max_value=60),
    )
    def test_split_updates_match_single_update(self, symbols: list[int], cut: int) -> None:
        alphabet = Alphabet.of_size(3)
        whole = OccurrenceCounter(alphabet, 3)
        whole.update_many(np.asarray(symbols, dtype=np.int64))
        split = OccurrenceCounter(alphabet, 3)
        split.update_many(np.asarray(symbols[:cut], dtype=np.int64))
        split.update_many(np.asarray(symbols[cut:], dtype=np.int64))
        for length in range(1, 4):
            assert np.array_equal(whole.counts[length], split.counts[length])

    @settings(max_examples=50, deadline=None)
    @given(symbols=st.lists(st.integers(min_value=0, max_value=1), min_size=3, max_size=40))
    def test_counts_match_nbocc(self, symbols: list[int]) -> None:
        alphabet = Alphabet.of_size(2)
        counter = OccurrenceCounter(alphabet, 3)
        for a in symbols:
            counter.update(a)
        for code in range(8):
            w = alphabet.word_from_code(code, 3)
            assert counter.count(w) == nbocc(w, symbols)

    def test_frequency(self, binary: Alphabet) -> None:
        counter = OccurrenceCounter(binary, 2)
        counter.update_many(np.asarray(bits("0101")))
        assert counter.frequency(binary.word("01")) == pytest.approx(2 / 3)

    def test_table_cap(self, binary: Alphabet) -> None:
        with pytest.raises(GuardError):
            OccurrenceCounter(binary, 21, table_cap=1 << 20)

    def test_memory_cap_counts_every_length(self, binary: Alphabet) -> None:
        # 2 + 4 + 8 cells of 8 bytes
        OccurrenceCounter(binary, 3, memory_cap=112)
        with pytest.raises(GuardError):
            OccurrenceCounter(binary, 3, memory_cap=111)

    def test_memory_cap_on_blocks(self, ternary: Alphabet) -> None:
        with pytest.raises(GuardError):
            BlockCounter(ternary, 4, memory_cap=8 * 80)
        assert len(BlockCounter(ternary, 4, memory_cap=8 * 81).counts) == 81

    def test_length_out_of_range(self, binary: Alphabet) -> None:
        counter = OccurrenceCounter(binary, 2)
        with pytest.raises(ValidationError):
            counter.count(binary.word("011"))


class TestBlockCounter:
    def test_aligned_blocks_across_chunks(self, binary: Alphabet) -> None:
        counter = BlockCounter(binary, 2)
        counter.update_many(np.asarray(bits("011")))
        counter.update_many(np.asarray(bits("10001")))
        # blocks: 01 11 00 01
        assert counter.blocks == 4
        assert counter.counts.tolist() == [1, 2, 0, 1]


class TestCheckpoints:
    def test_geometric(self) -> None:
        points = geometric_checkpoints(5000)
        assert points[0] >= 1000
        assert points[-1] == 5000
        assert all(b > a for a, b in zip(points, points[1:]))
        assert all(b / a < 1.2 for a, b in zip(points, points[1:]))

    def test_short_run_has_single_checkpoint(self) -> None:
        assert geometric_checkpoints(10) == [10]

    @pytest.mark.parametrize("k, expected", [(2, 8), (10, 6), (255, 2)])
    def test_default_max_length(self, k: int, expected: int) -> None:
        assert default_max_length(k) == expected


class TestStreamProfile:
    def test_periodic(self, binary: Alphabet) -> None:
        report = stream_profile(PeriodicStream(binary.word("01")), 10_000, 2)
        assert report.freq(binary.word("00")) == 0
        assert report.freq(binary.word("01")) == pytest.approx(0.5, abs=1e-3)
        assert report.n == 10_000

    def test_thue_morse_misses_cubes(self, binary: Alphabet) -> None:
        report = stream_profile(thue_morse_stream(), 100_000, 3)
        assert report.freq(binary.word("000")) == 0
        assert report.freq(binary.word("111")) == 0
        assert report.freq(binary.word("00")) == pytest.approx(1 / 6, abs=0.005)

    def test_thue_morse_deviation(self, binary: Alphabet) -> None:
        report = stream_profile(thue_morse_stream(), 100_000, 3)
        assert normality_deviation(report, uniform_measure(binary)) >= 1 / 8

    def test_running_bounds_bracket_final(self, binary: Alphabet) -> None:
        report = stream_profile(IidStream(uniform_measure(binary), RandomSource(2)), 20_000, 2)
        assert len(report.checkpoints) > 1
        for w in report.words():
            assert report.freq_lower(w) <= report.freq(w) <= report.freq_upper(w)

    def test_words_in_scan_order(self, binary: Alphabet) -> None:
        report = profile_symbols(binary, np.asarray(bits("0110")), 2)
        assert [str(w) for w in report.words()] == ["0", "1", "00", "01", "10", "11"]

    def test_chunking_invariant(self, binary: Alphabet) -> None:
        symbols = bits("0110100110010110") * 100
        report = stream_profile(ListStream(binary, symbols), len(symbols), 3)
        direct = profile_symbols(binary, np.asarray(symbols), 3)
        for a, b in zip(report.counts, direct.counts):
            assert np.array_equal(a, b)

    def test_n_below_length(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            stream_profile(PeriodicStream(binary.word("01")), 2, 3)


class TestBfreq:
    def test_periodic_blocks(self, binary: Alphabet) -> None:
        assert bfreq(binary.word("01"), PeriodicStream(binary.word("01")), 10_000) == 1.0

    def test_shifted_periodic_blocks(self, binary: Alphabet) -> None:
        assert bfreq(binary.word("10"), PeriodicStream(binary.word("01")), 10_000) == 0.0

    def test_single_letter_matches_freq(self, binary: Alphabet) -> None:
        symbols = thue_morse_stream().take(999)
        block = bfreq(binary.word("1"), ListStream(binary, symbols.tolist()), 999)
        assert block == pytest.approx(freq([1], symbols))

    def test_iid_pairs(self, binary: Alphabet) -> None:
        value = bfreq(binary.word("00"), IidStream(uniform_measure(binary), RandomSource(8)), 200_000)
        assert value == pytest.approx(0.25, abs=0.01)


class TestDeviation:
    def test_constant_sequence(self, binary: Alphabet) -> None:
        report = stream_profile(PeriodicStream(binary.word("0")), 1000, 1)
        assert normality_deviation(report, uniform_measure(binary)) == 0.5

    def test_iid_is_close(self, binary: Alphabet) -> None:
        mu = BernoulliMeasure(binary, (0.3, 0.7))
        report = stream_profile(IidStream(mu, RandomSource(1)), 200_000, 3)
        assert normality_deviation(report, mu) < 0.01

    def test_balanced_but_not_normal(self, binary: Alphabet) -> None:
        report = stream_profile(PeriodicStream(binary.word("01")), 10_000, 2)
        mu = uniform_measure(binary)
        assert balance_deviation(report, mu) < 1e-3
        assert normality_deviation(report, mu) == pytest.approx(0.25, abs=1e-3)

    def test_alphabet_mismatch(self, binary: Alphabet, ternary: Alphabet) -> None:
        report = stream_profile(PeriodicStream(binary.word("01")), 100, 1)
        with pytest.raises(ValidationError):
            normality_deviation(report, uniform_measure(ternary))


class TestKlDivergence:
    def test_identity(self) -> None:
        assert kl_divergence((0.2, 0.8), (0.2, 0.8)) == 0

    def test_two_thirds_against_uniform(self) -> None:
        expected = (2 / 3) * math.log(4 / 3) + (1 / 3) * math.log(2 / 3)
        assert kl_divergence((2 / 3, 1 / 3), (0.5, 0.5)) == pytest.approx(expected)
        assert kl_divergence((2 / 3, 1 / 3), (0.5, 0.5)) == pytest.approx(0.0566, abs=1e-4)

    def test_point_mass(self) -> None:
        assert kl_divergence((1.0, 0.0), (0.5, 0.5)) == pytest.approx(math.log(2))

    def test_reference_must_be_positive(self) -> None:
        with pytest.raises(ValidationError):
            kl_divergence((0.5, 0.5), (1.0, 0.0))

    def test_length_mismatch(self) -> None:
        with pytest.raises(ValidationError):
            kl_divergence((1.0,), (0.5, 0.5))


class TestConditionalProfile:
    def test_periodic(self, binary: Alphabet) -> None:
        profile = conditional_profile(PeriodicStream(binary.word("01")), binary.word("0"), 100)
        assert profile.f == (0.0, 1.0)
        assert profile.found

    def test_empty_context_is_letter_frequency(self, binary: Alphabet) -> None:
        profile = conditional_profile(ListStream(binary, bits("0111")), binary.word(""), 4)
        assert profile.f == (0.25, 0.75)
        assert profile.samples == 4

    def test_context_never_seen(self, binary: Alphabet) -> None:
        profile = conditional_profile(PeriodicStream(binary.word("01")), binary.word("00"), 100)
        assert not profile.found
        assert profile.f == (0.0, 0.0)

    def test_markov(self, binary: Alphabet) -> None:
        stream = MarkovStream(correlated_binary_source(), RandomSource(6))
        profile = conditional_profile(stream, binary.word("0"), 200_000)
        assert profile.f[0] == pytest.approx(2 / 3, abs=0.01)
        assert profile.history[-1][0] == 200_000

    @pytest.mark.slow
    def test_iid_desk_scale(self, binary: Alphabet) -> None:
        stream = IidStream(uniform_measure(binary), RandomSource(0))
        profile = conditional_profile(stream, binary.word("0"), 1_000_000)
        assert profile.f == pytest.approx((0.5, 0.5), abs=0.01)
