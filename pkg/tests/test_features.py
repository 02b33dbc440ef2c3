import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engagepred.corpus import (
    CommentRecord,
    CommunityCorpus,
    CommunityMeta,
    SubmissionRecord,
)
from engagepred.features import (
    META_FEATURES,
    AssemblyError,
    FeatureVector,
    MissingMetadataError,
    Vocabulary,
    assemble_matrix,
    build_vocabulary,
    community_document,
    compute_meta_features,
    featurize,
    linguistic_block,
    read_feature_csv,
    tfidf_vector,
    write_feature_csv,
)

CUTOFF = 1_600_000_000
DAY = 86_400


def sub(id, author, title, body, score, created=CUTOFF - 10):
    return SubmissionRecord(id, "x", author, title, body, score, created)


def com(id, author, body, score, link, parent=None, created=CUTOFF - 5):
    return CommentRecord(id, "x", author, body, score, created, parent or link, link)


def corpus(name, subs, coms, subscribers, created):
    return CommunityCorpus(name, tuple(subs), tuple(coms), CommunityMeta(name, subscribers, created),
                           (0, CUTOFF))


def toy_corpora():
    alpha = corpus("alpha", [
        sub("s1", "a", "Hello world", "", 10),
        sub("s2", "a", "Vote now", "please vote", 2),
        sub("s3", "b", "Hi", "[deleted]", 0),
        sub("s4", "[deleted]", "Gone", "[removed]", 4),
    ], [
        com("c1", "b", "hello there", 1, "t3_s1"),
        com("c2", "c", "world peace", 3, "t3_s1", parent="t1_c1"),
        com("c3", "[deleted]", "[deleted]", 0, "t3_s2"),
        com("c4", "c", "vote", 8, "t3_s2"),
        com("c5", "b", "hello", -2, "t3_zzz"),
    ], 100, CUTOFF - 100 * DAY - 5)
    beta = corpus("beta", [sub("s9", "x", "abc", "text here", 5)], [], 0, CUTOFF - 2 * DAY + 1)
    gamma = corpus("gamma", [], [com("d1", "d", "Hi!", 2, "t3_q"), com("d2", "e", "hi", 4, "t3_q")],
                   10, CUTOFF)
    return {"alpha": alpha, "beta": beta, "gamma": gamma}


# Worked by hand from the toy records above.
EXPECTED = {
    "alpha": [4, 0.04, 4.0, 3.0, 2.0, 1.0, 1.25, 0.5, 0.5, 0.4, 100, 2, 1.5, 1.5, 1.0, 0.5, 0.0,
              2 / 3, 6.25, 6.0, 7.25, 9.0, 0.25, 5 / 7, 100],
    "beta": [1, 0, 5, 5, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 3, 3, 9, 9, 0, 0, 1],
    "gamma": [0, 0, 0, 0, 3, 3, 0, 0, 0, 0, 10, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
}
EXPECTED_FLAGS = {
    "alpha": set(),
    "beta": {"submission_amount_normalized", "comments_average_score", "comments_median_score",
             "distinct_comments_to_comments_ratio", "comments_users_std"},
    "gamma": {"submission_average_score", "submission_median_score", "comments_submission_ratio",
              "deleted_removed_submission_ratio", "distinct_comments_to_submission_ratio",
              "average_submission_per_user", "median_submission_per_user",
              "submission_to_comments_users_ratio", "submission_users_std",
              "submission_title_length", "median_submission_title_length",
              "submission_selftext_length", "median_submission_selftext_length",
              "empty_selftext_ratio", "submissions2comments_words_used"},
}


class TestMeta:
    @pytest.mark.parametrize("name", sorted(EXPECTED))
    def test_hand_computed_oracle(self, name):
        m = compute_meta_features(toy_corpora()[name], CUTOFF)
        assert len(m.values) == 25 == len(META_FEATURES)
        for feat, got, want in zip(META_FEATURES, m.values, EXPECTED[name]):
            assert got == pytest.approx(want, abs=1e-15), feat
        assert set(m.degenerate) == EXPECTED_FLAGS[name]

    def test_comment_ratio_and_age(self):
        subs = [sub(f"s{i}", "a", "t", "b", 1) for i in range(10)]
        coms = [com(f"c{i}", "b", "x", 1, "t3_s0") for i in range(50)]
        m = compute_meta_features(corpus("x", subs, coms, 5, CUTOFF - 100 * DAY), CUTOFF).as_dict()
        assert m["comments_submission_ratio"] == 5.0
        assert m["age_days"] == 100

    def test_missing_metadata_and_empty(self):
        c = toy_corpora()["alpha"]
        with pytest.raises(MissingMetadataError):
            compute_meta_features(CommunityCorpus("alpha", c.submissions, c.comments, None, c.window), CUTOFF)
        with pytest.raises(ValueError):
            compute_meta_features(corpus("e", [], [], 1, 0), CUTOFF)

    def test_ratio_ranges(self):
        for c in toy_corpora().values():
            m = compute_meta_features(c, CUTOFF).as_dict()
            assert 0 <= m["empty_selftext_ratio"] <= 1
            assert 0 <= m["deleted_removed_submission_ratio"] <= 1
            assert 0 <= m["distinct_comments_to_submission_ratio"] <= 1
            assert all(math.isfinite(v) for v in m.values())


class TestVocabulary:
    def test_truncation_order_and_ties(self):
        assert build_vocabulary([Counter("a a b".split())]).tokens == ("a", "b")
        assert build_vocabulary([Counter({"x": 2, "w": 2, "z": 5})]).tokens == ("z", "w", "x")
        v = build_vocabulary([Counter("a a b c".split())], k=2)
        assert v.tokens == ("a", "b") and v.document_frequency == {"a": 1, "b": 1}

    def test_no_tokens(self):
        with pytest.raises(ValueError):
            build_vocabulary([Counter()])

    def test_submission_cap_most_recent_first(self):
        subs = [sub(f"s{i}", "a", f"w{i}", "", 1, created=100 + i) for i in range(5)]
        doc = community_document(corpus("x", subs, [], 1, 0), cap=2)
        assert doc == Counter({"w4": 1, "w3": 1})

    def test_comments_do_not_feed_documents(self):
        doc = community_document(toy_corpora()["gamma"])
        assert doc == Counter()


class TestTfidf:
    def test_ubiquitous_token_is_zero(self):
        docs = {"a": Counter("t t u".split()), "b": Counter("t".split())}
        vocab, vecs = linguistic_block(docs, docs)
        assert vocab.tokens[0] == "t" and vecs["a"][0] == 0.0 and vecs["b"][0] == 0.0

    def test_direct_formula(self):
        docs = {"a": Counter({"k": 1, "t": 1}), "b": Counter({"t": 3})}
        vocab, vecs = linguistic_block(docs, docs)
        j = vocab.tokens.index("k")
        assert vecs["a"][j] == pytest.approx(0.5 * math.log(2))
        assert vecs["a"].shape == (300,)

    def test_no_vocabulary_tokens(self):
        vocab = build_vocabulary([Counter("a b".split())])
        assert not tfidf_vector(Counter({"zzz": 4}), vocab).any()
        assert not tfidf_vector(Counter(), vocab).any()

    def test_accepts_corpus(self):
        c = toy_corpora()["alpha"]
        vocab = build_vocabulary([community_document(c)])
        assert np.array_equal(tfidf_vector(c, vocab), tfidf_vector(community_document(c), vocab))

    def test_training_fold_only(self):
        docs = {"a": Counter("p q".split()), "b": Counter("q r".split()), "c": Counter("leak leak leak".split())}
        vocab, vecs = linguistic_block(docs, ["a", "b"])
        assert "leak" not in vocab.tokens and vocab.n_documents == 2
        assert not vecs["c"].any()


counts = st.dictionaries(st.sampled_from("abcdefgh"), st.integers(1, 20), min_size=1)


@settings(max_examples=60)
@given(st.lists(counts, min_size=1, max_size=6), counts, st.integers(1, 7))
def test_tfidf_scale_invariance_and_nonnegative(train, doc, factor):
    vocab = build_vocabulary([Counter(d) for d in train])
    v = tfidf_vector(Counter(doc), vocab)
    scaled = tfidf_vector(Counter({k: c * factor for k, c in doc.items()}), vocab)
    np.testing.assert_allclose(v, scaled, rtol=1e-12, atol=0)
    assert np.all(v >= 0)


class TestAssembly:
    def vectors(self):
        return {c: FeatureVector(c, np.full(300, i), np.full(25, i + 0.5), np.full(32, -i), i % 2)
                for i, c in enumerate(["b", "a", "c"])}

    def test_widths_and_order(self):
        v = self.vectors()
        assert assemble_matrix(v, {"M"}).X.shape == (3, 25)
        full = assemble_matrix(v, {"N", "L", "M"})
        assert full.X.shape == (3, 357)
        assert full.communities == ["a", "b", "c"]
        assert full.columns[0].startswith("L_") and full.columns[300] == "M_submission_amount"
        assert full.columns[325].startswith("N_")
        assert full.X[0, 0] == 1 and full.X[0, 300] == 1.5 and full.y.tolist() == [1, 0, 0]

    def test_errors(self):
        v = self.vectors()
        with pytest.raises(AssemblyError):
            assemble_matrix(v, set())
        v["a"].N = None
        with pytest.raises(AssemblyError, match="'a'"):
            assemble_matrix(v, {"N"})

    def test_override_block(self):
        v = self.vectors()
        m = assemble_matrix(v, "L+M", overrides={"L": {c: np.zeros(300) for c in v}})
        assert not m.X[:, :300].any()


def test_featurize_and_csv_round_trip(tmp_path, caplog):
    corpora = toy_corpora()
    c = corpora["gamma"]
    corpora["gamma"] = CommunityCorpus("gamma", c.submissions, c.comments, None, c.window)
    fs = featurize(corpora, {"alpha": 1, "beta": 0, "gamma": 0, "ghost": 1}, CUTOFF)
    assert sorted(fs.vectors) == ["alpha", "beta"] and fs.dropped == ["gamma", "ghost"]
    assert isinstance(fs.vocabulary, Vocabulary)
    assert fs.vectors["alpha"].L.shape == (300,)
    write_feature_csv(tmp_path / "f.csv", fs)
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["community", "label"] and len(header) == 359
    back, cols = read_feature_csv(tmp_path / "f.csv")
    assert cols == header[2:]
    for name, v in fs.vectors.items():
        for b in "LMN":
            assert np.array_equal(back[name].block(b), v.block(b))
        assert back[name].label == v.label
