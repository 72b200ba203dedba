import numpy as np
import pytest

from esglm.errors import EmptyDocument, InvalidConfig
from esglm.extract import (
    DanEmbedder,
    ExtractionConfig,
    cosine_similarity,
    dan_embed,
    extract_top_k,
    identity_dan_params,
    score_sentences,
    segment_sentences,
)
from esglm.tokenizer import Vocab, prepare_input

WORDS = ["climate", "carbon", "water", "waste", "energy", "revenue",
         "sales", "office", "team", "report"]
VOCAB = Vocab.from_tokens(
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", *WORDS, "."]
)


def fresh_embedder(seed=0, d=6):
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(len(VOCAB), d))
    return DanEmbedder.from_token_embeddings(VOCAB, emb, seed=seed)


class TestSegmentation:
    def test_three_terminators(self):
        got = segment_sentences("It rained. We left! Why?")
        assert [s.text for s in got] == ["It rained.", "We left!", "Why?"]

    def test_decimal_number_not_a_boundary(self):
        got = segment_sentences("Revenue was 3.5 million. It grew.")
        assert [s.text for s in got] == ["Revenue was 3.5 million.", "It grew."]

    def test_empty_text(self):
        assert segment_sentences("") == []
        assert segment_sentences("   \n ") == []

    @pytest.mark.parametrize("abbrev", ["Inc", "Corp", "No", "Mr", "Dr"])
    def test_abbreviations_do_not_split(self, abbrev):
        got = segment_sentences(f"We asked {abbrev}. Smith about it. He agreed.")
        assert len(got) == 2
        assert got[0].text == f"We asked {abbrev}. Smith about it."

    def test_us_abbreviation(self):
        got = segment_sentences("Sales in the U.S. grew fast. Europe lagged.")
        assert [s.text for s in got] == [
            "Sales in the U.S. grew fast.", "Europe lagged.",
        ]

    def test_et_al_abbreviation(self):
        got = segment_sentences("See Smith et al. for details. We concur.")
        assert [s.text for s in got] == [
            "See Smith et al. for details.", "We concur.",
        ]

    def test_abbreviation_lookalike_still_splits(self):
        # lowercase "no" at sentence end is not the abbreviation "No"
        got = segment_sentences("He said no. We left.")
        assert [s.text for s in got] == ["He said no.", "We left."]

    def test_terminator_runs_collapse(self):
        # one boundary per run: no empty segments between ? and !
        got = segment_sentences("Really?! Wait!!! Ok.")
        assert [s.text for s in got] == ["Really?!", "Wait!!!", "Ok."]

    def test_ellipsis_followed_by_space_is_a_boundary(self):
        got = segment_sentences("Yes... definitely.")
        assert [s.text for s in got] == ["Yes...", "definitely."]

    def test_offsets_strictly_increasing_and_point_at_text(self):
        text = "  One here. Two there!  Three. "
        got = segment_sentences(text)
        offsets = [s.doc_offset for s in got]
        assert offsets == sorted(offsets)
        assert len(set(offsets)) == len(offsets)
        for s in got:
            assert text[s.doc_offset] == s.text[0]
        assert [s.index for s in got] == [0, 1, 2]

    def test_no_trailing_terminator(self):
        got = segment_sentences("First one. Second without end")
        assert [s.text for s in got] == ["First one.", "Second without end"]


class TestDanEmbed:
    def test_single_token_average_is_that_embedding(self):
        emb = np.zeros((len(VOCAB), 6))
        emb[VOCAB.id("carbon")] = np.arange(6, dtype=float)
        e = fresh_embedder()
        avg = emb[[VOCAB.id("carbon")]].mean(axis=0)
        np.testing.assert_array_equal(avg, emb[VOCAB.id("carbon")])

    def test_word_order_irrelevant(self):
        e = fresh_embedder(seed=1)
        a = e.embed("climate carbon water report")
        b = e.embed("report water carbon climate")
        np.testing.assert_allclose(a.vector, b.vector, atol=1e-12)

    def test_two_dim_toy_normalized_average(self):
        vocab = Vocab.from_tokens(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "alpha", "beta"]
        )
        emb = np.zeros((7, 2))
        emb[5] = [1.0, 0.0]
        emb[6] = [0.0, 1.0]
        out = dan_embed("alpha beta", vocab, emb, identity_dan_params(2))
        np.testing.assert_allclose(out.vector, [0.7071, 0.7071], atol=1e-4)
        assert not out.is_zero

    def test_unknown_only_sentence_flagged_zero(self):
        e = fresh_embedder()
        out = e.embed("zzzqqq xxxyyy")
        assert out.is_zero
        assert np.all(out.vector == 0.0)

    def test_unit_norm(self):
        e = fresh_embedder(seed=2)
        out = e.embed("waste water energy")
        assert abs(np.linalg.norm(out.vector) - 1.0) < 1e-6

    def test_deterministic(self):
        e = fresh_embedder(seed=3)
        a = e.embed("climate waste")
        b = e.embed("climate waste")
        np.testing.assert_array_equal(a.vector, b.vector)


class TestCosine:
    def test_self_similarity_is_one(self):
        v = np.array([0.3, -1.2, 4.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_is_zero(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(0)
        u, v = rng.normal(size=5), rng.normal(size=5)
        base = cosine_similarity(u, v)
        for a, b in [(2.0, 3.0), (0.1, 7.5), (1e6, 1e-6)]:
            assert cosine_similarity(a * u, b * v) == pytest.approx(base, abs=1e-12)

    def test_zero_vector_ranks_last(self):
        assert cosine_similarity([0.0, 0.0], [1.0, 0.0]) == float("-inf")

    def test_range(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            u, v = rng.normal(size=4), rng.normal(size=4)
            assert -1.0 - 1e-12 <= cosine_similarity(u, v) <= 1.0 + 1e-12


def brute_force_top_k(sentences, scores, k):
    ranked = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))
    return ranked[:k]


class TestExtractTopK:
    def test_k_capped_at_sentence_count(self):
        e = fresh_embedder()
        out = extract_top_k("Carbon fell. Water rose.", ExtractionConfig(top_k=3), e)
        assert len(out.sentences) == 2

    def test_matches_brute_force_oracle(self):
        e = fresh_embedder(seed=4)
        rng = np.random.default_rng(9)
        for trial in range(30):
            n = int(rng.integers(1, 20))
            sents = [
                " ".join(rng.choice(WORDS, size=rng.integers(1, 6)).tolist()) + "."
                for _ in range(n)
            ]
            doc = " ".join(sents)
            segmented = segment_sentences(doc)
            scores = score_sentences(segmented, ExtractionConfig(), e)
            expect = brute_force_top_k(segmented, scores, 3)
            got = extract_top_k(doc, ExtractionConfig(top_k=3), e)
            assert [s.index for s in got.sentences] == expect

    def test_tie_break_prefers_earlier_sentence(self):
        e = fresh_embedder()
        bench = ExtractionConfig().benchmark_sentences[0]
        doc = " ".join(["Climate carbon water waste."] * 5)
        out = extract_top_k(doc, ExtractionConfig(top_k=3), e)
        assert [s.index for s in out.sentences] == [0, 1, 2]

    def test_selection_invariant_under_embedding_rescale(self):
        # cosine only sees directions, so globally scaling every sentence
        # embedding by a positive factor must not move the ranking
        class Scaled:
            def __init__(self, inner, factor):
                self.inner, self.factor = inner, factor
                self.vocab = inner.vocab

            def embed(self, text):
                e = self.inner.embed(text)
                e.vector = e.vector * self.factor
                return e

        doc = ("Carbon emissions rose. Revenue was flat. Water waste fell. "
               "The office moved. Energy costs doubled.")
        cfg = ExtractionConfig(top_k=3)
        inner = fresh_embedder(seed=5)
        base = extract_top_k(doc, cfg, inner)
        assert base.token_ids
        for factor in (0.001, 42.0):
            scaled = extract_top_k(doc, cfg, Scaled(inner, factor))
            assert [s.index for s in scaled.sentences] == [
                s.index for s in base.sentences
            ]

    def test_output_feeds_prepare_input_at_512(self):
        e = fresh_embedder(seed=6)
        doc = " ".join(["Climate and water and waste and energy report."] * 40)
        out = extract_top_k(doc, ExtractionConfig(), e)
        enc = prepare_input(out.token_ids, max_seq_len=512)
        assert len(enc.ids) == 512

    def test_empty_document_rejected(self):
        with pytest.raises(EmptyDocument):
            extract_top_k("   ", ExtractionConfig(), fresh_embedder())

    def test_config_validation(self):
        with pytest.raises(InvalidConfig):
            ExtractionConfig(top_k=0)
        with pytest.raises(InvalidConfig):
            ExtractionConfig(benchmark_sentences=())
