import pytest
from hypothesis import given, settings, strategies as st

from lmxevo.backends import CompletionEngine, CompletionResponse, SamplingParams, make_umda_mock
from lmxevo.binary import (
    BinaryDomain,
    BitstringSpec,
    decode_underscore,
    encode_underscore,
    hamming,
    leading_ones,
    neighborhood,
    one_point_crossover_mutate,
    onemax,
    variation_metrics,
)
from lmxevo.core import Individual, RngStream
from lmxevo.operator import OffspringParser, PromptTemplate, lmx

bits = st.text(alphabet="01", min_size=1, max_size=16)


class TestCodec:
    def test_known_encoding(self):
        assert encode_underscore("0011") == "_0_0_1_1"

    def test_known_decoding(self):
        assert decode_underscore("_1_0") == "10"

    def test_empty_encodes_nothing_valid(self):
        assert decode_underscore("") == ""
        assert not BitstringSpec(1, "underscore").is_valid("")

    @pytest.mark.parametrize("text", ["_", "_2", "0_1", "__01", "_0_", "01"])
    def test_malformed_is_rejected(self, text):
        assert decode_underscore(text) is None

    @given(bits)
    def test_round_trip(self, b):
        assert decode_underscore(encode_underscore(b)) == b


class TestFitness:
    def test_onemax_examples(self):
        assert onemax("1111111111") == 10
        assert onemax("000000") == 0

    def test_leading_ones(self):
        assert leading_ones("110111") == 2
        assert leading_ones("0111") == 0
        assert leading_ones("111") == 3

    @given(bits)
    def test_leading_ones_never_exceeds_onemax(self, b):
        assert leading_ones(b) <= onemax(b)


class TestHamming:
    def test_examples(self):
        assert hamming("0101", "0101") == 0
        assert hamming("000", "111") == 3
        assert hamming("10", "01") == 2

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            hamming("01", "011")


class TestNeighborhood:
    def test_known_neighbors(self):
        assert set(neighborhood("11")) == {"01", "10"}

    @given(bits)
    def test_size_and_distance(self, b):
        near = neighborhood(b)
        assert len(near) == len(b)
        assert all(hamming(b, other) == 1 for other in near)


class TestOnePointCrossover:
    def test_identical_parents_no_flip(self):
        rng = RngStream(0, "x")
        assert one_point_crossover_mutate("1010", "1010", 0.0, rng) == "1010"

    def test_flip_probability_one_inverts(self):
        rng = RngStream(0, "x")
        assert one_point_crossover_mutate("0000", "0000", 1.0, rng) == "1111"

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            one_point_crossover_mutate("01", "011", 0.0, RngStream(0, "x"))

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(min_value=2, max_value=12).flatmap(
            lambda n: st.tuples(
                st.text(alphabet="01", min_size=n, max_size=n),
                st.text(alphabet="01", min_size=n, max_size=n),
            )
        ),
        st.integers(0, 2**31),
    )
    def test_no_new_alleles_without_mutation(self, parents, seed):
        p1, p2 = parents
        child = one_point_crossover_mutate(p1, p2, 0.0, RngStream(seed, "x"))
        assert all(c in (a, b) for c, a, b in zip(child, p1, p2))


class _GarbageEngine(CompletionEngine):
    def complete(self, req):
        return CompletionResponse(text="zzz\nqqq\nwww")


class TestVariationMetrics:
    def test_unanimous_parents_are_valid_but_never_novel(self):
        spec = BitstringSpec(2)
        engine = make_umda_mock(["11", "11", "11", "11"])
        pct, novel = variation_metrics(
            ["11", "11", "11", "11"], engine, trials=5, children_per_trial=3,
            spec=spec, rng=RngStream(0, "vm"),
        )
        assert pct == 100.0
        assert novel == 0

    def test_novel_count_bounded_by_total_offspring(self):
        spec = BitstringSpec(6)
        parents = ["101010", "010101", "110011", "001100"]
        engine = make_umda_mock(parents)
        pct, novel = variation_metrics(
            parents, engine, trials=20, children_per_trial=3,
            spec=spec, rng=RngStream(1, "vm"),
        )
        assert pct == 100.0
        assert novel <= 60

    def test_garbage_engine_scores_zero(self):
        spec = BitstringSpec(6)
        pct, novel = variation_metrics(
            ["101010", "010101"], _GarbageEngine(), trials=3, children_per_trial=3,
            spec=spec, rng=RngStream(2, "vm"),
        )
        assert pct == 0.0
        assert novel == 0


class TestHeritability:
    def test_offspring_track_their_parents_reference_string(self):
        length = 6
        all_ones = "1" * length
        all_zeros = "0" * length
        spec = BitstringSpec(length)
        parser = OffspringParser(validator=spec.is_valid, max_children=3)
        template = PromptTemplate(ordering="given")

        def mean_distance_to_zero(reference, label):
            rng = RngStream(99, label)
            parents = rng.sample(neighborhood(reference), 4)
            engine = make_umda_mock(parents)
            distances = []
            for trial in range(60):
                children = lmx(
                    [Individual(p) for p in parents],
                    engine,
                    template,
                    parser,
                    SamplingParams(rng_seed=rng.child(f"t{trial}").fresh_seed()),
                )
                distances += [hamming(c, all_zeros) for c in children]
            return sum(distances) / len(distances)

        near_ones = mean_distance_to_zero(all_ones, "ones")
        near_zeros = mean_distance_to_zero(all_zeros, "zeros")
        assert near_ones > near_zeros


class TestBinaryDomain:
    def test_fitness_accepts_canonical_and_codec_forms(self):
        domain = BinaryDomain(BitstringSpec(4, "underscore"))
        assert domain.fitness("1011") == 3.0
        assert domain.fitness("_1_0_1_1") == 3.0
        assert domain.fitness("10") is None
        assert domain.fitness("garbage") is None

    def test_validate_requires_codec_form(self):
        domain = BinaryDomain(BitstringSpec(4, "underscore"))
        assert domain.validate("_1_0_1_1")
        assert not domain.validate("1011")

    def test_init_is_deterministic_per_stream(self):
        domain = BinaryDomain(BitstringSpec(8))
        a = domain.init_genotypes(5, RngStream(3, "init"))
        b = domain.init_genotypes(5, RngStream(3, "init"))
        assert a == b
        assert all(len(g) == 8 and set(g) <= set("01") for g in a)

    def test_descriptor_is_fraction_of_ones(self):
        domain = BinaryDomain(BitstringSpec(4))
        assert domain.descriptor("1100") == (0.5,)
