"""Alphabets, words, measures, seeded randomness and the stream base class."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from normality.core import (
    Alphabet,
    BernoulliMeasure,
    RandomSource,
    ValidationError,
    Word,
    cdf_table,
    check_distribution,
    follow_maps,
    measure_from_text,
    measure_of_word,
    parse_weights,
    sample_index,
    sample_indices,
    sampled_maps,
    to_fraction,
    uniform_measure,
    validate_measure,
)

from tests.fakes import CountingStream, ListStream


class TestAlphabet:
    def test_of_size_labels(self) -> None:
        assert Alphabet.of_size(3).symbols == ("0", "1", "2")

    def test_single_symbol_rejected(self) -> None:
        with pytest.raises(ValidationError):
            Alphabet(("a",))

    def test_too_many_symbols_rejected(self) -> None:
        with pytest.raises(ValidationError):
            Alphabet.of_size(256)

    def test_duplicate_labels_rejected(self) -> None:
        with pytest.raises(ValidationError):
            Alphabet(("a", "a"))

    def test_unknown_label(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            binary.index("7")

    def test_word_from_plain_string(self, ternary: Alphabet) -> None:
        assert ternary.word("cab").letters == (2, 0, 1)

    def test_word_from_comma_list_for_long_labels(self) -> None:
        alphabet = Alphabet(("x0", "x1"))
        assert alphabet.word("x1,x0,x1").letters == (1, 0, 1)

    def test_word_from_code_inverts_code(self, ternary: Alphabet) -> None:
        w = ternary.word("bca")
        assert ternary.word_from_code(w.code, 3) == w


class TestWord:
    def test_str_joins_labels(self, ternary: Alphabet) -> None:
        assert str(ternary.word("abc")) == "abc"

    def test_code_first_letter_most_significant(self, binary: Alphabet) -> None:
        assert binary.word("110").code == 6

    def test_concatenation(self, binary: Alphabet) -> None:
        assert (binary.word("01") + binary.word("1")).letters == (0, 1, 1)

    def test_concatenation_across_alphabets_rejected(self, binary: Alphabet, ternary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            binary.word("0") + ternary.word("a")

    def test_out_of_range_symbol(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            Word(binary, (0, 2))

    def test_slice_is_word(self, binary: Alphabet) -> None:
        assert binary.word("0110")[1:3] == binary.word("11")

    def test_empty(self, binary: Alphabet) -> None:
        assert Word(binary).is_empty
        assert Word(binary).code == 0


class TestMeasures:
    def test_exact_measure(self, binary: Alphabet) -> None:
        mu = BernoulliMeasure(binary, (Fraction(1, 3), Fraction(2, 3)))
        assert mu.exact
        assert measure_of_word(mu, binary.word("011")) == Fraction(4, 27)

    def test_empty_word_has_measure_one(self, binary: Alphabet) -> None:
        assert measure_of_word(uniform_measure(binary, exact=True), Word(binary)) == 1

    def test_zero_weight_rejected(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError, match="positivity"):
            BernoulliMeasure(binary, (0.0, 1.0))

    def test_exact_normalization_is_strict(self) -> None:
        report = validate_measure((Fraction(1, 3), Fraction(1, 3)))
        assert not report.ok
        assert "normalization" in report.violations[0]

    def test_float_normalization_tolerance(self) -> None:
        assert validate_measure((0.1, 0.2, 0.7)).ok

    def test_wrong_arity(self, ternary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            BernoulliMeasure(ternary, (0.5, 0.5))

    def test_word_table_matches_products(self, binary: Alphabet) -> None:
        mu = BernoulliMeasure(binary, (0.25, 0.75))
        table = mu.word_table(2)
        assert table == pytest.approx([0.0625, 0.1875, 0.1875, 0.5625])

    def test_measure_from_text_uniform(self, ternary: Alphabet) -> None:
        mu = measure_from_text(ternary, "uniform", exact=True)
        assert mu.probabilities == (Fraction(1, 3),) * 3

    def test_measure_from_text_weights(self, binary: Alphabet) -> None:
        assert measure_from_text(binary, "1/3,2/3").probabilities == (Fraction(1, 3), Fraction(2, 3))

    def test_to_exact(self, binary: Alphabet) -> None:
        assert BernoulliMeasure(binary, (0.5, 0.5)).to_exact().probabilities == (Fraction(1, 2),) * 2


class TestParseWeights:
    def test_slash_is_exact(self) -> None:
        assert parse_weights("1/4,3/4") == (Fraction(1, 4), Fraction(3, 4))

    def test_decimal_is_float(self) -> None:
        assert parse_weights("0.25,0.75") == (0.25, 0.75)

    def test_exact_flag_converts_decimals(self) -> None:
        assert parse_weights("0.25,0.75", exact=True) == (Fraction(1, 4), Fraction(3, 4))

    def test_mixed_falls_back_to_float(self) -> None:
        weights = parse_weights("1/4,0.75")
        assert all(isinstance(w, float) for w in weights)

    def test_garbage_rejected(self) -> None:
        with pytest.raises(ValidationError):
            parse_weights("half,half")

    def test_to_fraction_uses_decimal_repr(self) -> None:
        assert to_fraction(0.1) == Fraction(1, 10)


class TestCheckDistribution:
    def test_negative_rejected(self) -> None:
        with pytest.raises(ValidationError):
            check_distribution((1.5, -0.5), "row")

    def test_exact_sum(self) -> None:
        check_distribution((Fraction(1, 3), Fraction(2, 3)), "row")

    def test_exact_sum_off_by_epsilon(self) -> None:
        with pytest.raises(ValidationError):
            check_distribution((Fraction(1, 3), Fraction(2, 3) + Fraction(1, 10 ** 30)), "row")


class TestRandomSource:
    def test_same_seed_same_draws(self) -> None:
        a = RandomSource(7, 3).random(100)
        b = RandomSource(7, 3).random(100)
        assert np.array_equal(a, b)

    def test_trials_are_distinct(self) -> None:
        assert not np.array_equal(RandomSource(7, 0).random(16), RandomSource(7, 1).random(16))

    def test_lane_is_distinct_from_source(self) -> None:
        assert not np.array_equal(RandomSource(7, 0).random(16), RandomSource(7, 0, lane=1).random(16))

    def test_chunking_does_not_change_sequence(self) -> None:
        whole = RandomSource(1).random(1000)
        rng = RandomSource(1)
        parts = np.concatenate([rng.random(1), rng.random(499), rng.random(500)])
        assert np.array_equal(whole, parts)

    def test_seed_out_of_range(self) -> None:
        with pytest.raises(ValidationError):
            RandomSource(-1)
        with pytest.raises(ValidationError):
            RandomSource(2 ** 64)

    def test_substream_matches_constructor(self) -> None:
        assert np.array_equal(RandomSource(5).substream(2).random(8), RandomSource(5, 2).random(8))

    def test_u64_dtype(self) -> None:
        values = RandomSource(0).u64(64)
        assert values.dtype == np.uint64


class TestSampling:
    def test_inverse_cdf(self) -> None:
        cdf = [0.25, 0.5, 1.0]
        assert sample_index(cdf, 0.0) == 0
        assert sample_index(cdf, 0.25) == 1
        assert sample_index(cdf, 0.99) == 2

    def test_rounding_gap_lands_on_last_positive(self) -> None:
        cdf = [0.5, 0.9999999999999999, 0.9999999999999999]
        assert sample_index(cdf, 0.9999999999999999) == 1

    def test_vectorized_matches_scalar(self) -> None:
        cdf = np.asarray([0.2, 0.7, 1.0])
        u = RandomSource(3).random(500)
        expected = [sample_index(cdf.tolist(), float(x)) for x in u]
        assert sample_indices(cdf, u).tolist() == expected


class TestStateMaps:
    def test_follow_matches_stepping(self) -> None:
        rng = np.random.default_rng(5)
        for n, size in [(1, 3), (7, 2), (1000, 5), (4097, 1), (2500, 9)]:
            maps = rng.integers(0, size, size=(n, size))
            q, expected = size - 1, []
            for row in maps.tolist():
                q = row[q]
                expected.append(q)
            assert follow_maps(maps, size - 1).tolist() == expected

    def test_follow_empty(self) -> None:
        assert follow_maps(np.empty((0, 3), dtype=np.int64), 2).size == 0

    def test_fallback_index_per_row(self) -> None:
        cdf, last = cdf_table(np.asarray([[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        assert cdf[0].tolist() == [0.5, 1.0, 1.0]
        assert last.tolist() == [1, 1, 2]

    def test_sampled_maps_match_scalar_draws(self) -> None:
        rng = np.random.default_rng(8)
        probs = rng.random((4, 3, 4))
        probs[probs < 0.3] = 0.0
        probs[..., 0] += 0.01
        probs /= probs.sum(axis=-1, keepdims=True)
        cdf, last = cdf_table(probs)
        symbols = rng.integers(0, 3, size=300)
        u = RandomSource(2).random(300)
        u[0] = 0.9999999999999999
        maps = sampled_maps(cdf, last, symbols, u)
        for i, a in enumerate(symbols.tolist()):
            for q in range(4):
                assert maps[i, q] == sample_index(cdf[q, a].tolist(), float(u[i]))


class TestSymbolStream:
    def test_next_and_take_interleave(self, ternary: Alphabet) -> None:
        s = CountingStream(ternary)
        assert s.next() == 0
        assert s.take(4).tolist() == [1, 2, 0, 1]
        assert s.next() == 2
        assert s.position == 6

    def test_chunks_cover_n(self, binary: Alphabet) -> None:
        s = ListStream(binary, [0, 1, 1])
        chunks = list(s.chunks(10, chunk_size=4))
        assert [len(c) for c in chunks] == [4, 4, 2]
        assert np.concatenate(chunks).tolist() == [0, 1, 1, 0, 1, 1, 0, 1, 1, 0]

    def test_negative_take(self, binary: Alphabet) -> None:
        with pytest.raises(ValidationError):
            CountingStream(binary).take(-1)

    def test_iteration(self, binary: Alphabet) -> None:
        s = CountingStream(binary)
        assert [next(s) for _ in range(4)] == [0, 1, 0, 1]
