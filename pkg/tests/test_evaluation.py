from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engagepred.corpus import CommentRecord, CommunityCorpus, CommunityMeta, SubmissionRecord
from engagepred.evaluation import (
    EvalReport,
    FoldError,
    SettingResult,
    dataset_statistics,
    format_table,
    metrics,
    run_ablation,
    stratified_kfold,
    top_errors,
    train_fold,
    write_errors_csv,
    write_report_csv,
    write_table_csv,
)
from engagepred.features import FeatureVector


class TestFolds:
    def test_balanced(self):
        labels = {f"p{i}": 1 for i in range(10)} | {f"n{i}": 0 for i in range(10)}
        folds = stratified_kfold(labels, 5, seed=1)
        for f in range(5):
            members = [c for c, v in folds.items() if v == f]
            assert sorted(labels[c] for c in members) == [0, 0, 1, 1]

    def test_uneven(self):
        labels = {f"p{i}": 1 for i in range(11)} | {f"n{i}": 0 for i in range(9)}
        folds = stratified_kfold(labels, 5, seed=2)
        pos = Counter(folds[c] for c in labels if labels[c] == 1)
        assert set(pos.values()) <= {2, 3}

    def test_deterministic_and_order_free(self):
        labels = {f"c{i}": i % 2 for i in range(30)}
        shuffled = dict(sorted(labels.items(), reverse=True))
        assert stratified_kfold(labels, 5, 9) == stratified_kfold(shuffled, 5, 9)

    def test_small_class(self):
        with pytest.raises(FoldError):
            stratified_kfold({"a": 1, "b": 1, "c": 0, "d": 0, "e": 0}, k=3)


@settings(max_examples=100)
@given(st.integers(2, 40), st.integers(2, 40), st.integers(2, 6), st.integers(0, 2**31))
def test_fold_balance_property(n_pos, n_neg, k, seed):
    if min(n_pos, n_neg) < k:
        return
    labels = {f"p{i}": 1 for i in range(n_pos)} | {f"n{i}": 0 for i in range(n_neg)}
    folds = stratified_kfold(labels, k, seed)
    assert set(folds) == set(labels)
    for cls in (0, 1):
        per = Counter(folds[c] for c in labels if labels[c] == cls)
        assert len(per) == k and max(per.values()) - min(per.values()) <= 1


class TestMetrics:
    def test_counts(self):
        m = metrics([1, 1, 1, 0, 0], [0.9, 0.8, 0.1, 0.7, 0.2])
        assert m["precision"] == pytest.approx(2 / 3) and m["recall"] == pytest.approx(2 / 3)
        assert m["f1"] == pytest.approx(2 / 3) and m["accuracy"] == pytest.approx(0.6)

    def test_perfect_and_degenerate(self):
        assert metrics([1, 0], [0.9, 0.1]) == {"precision": 1.0, "recall": 1.0, "f1": 1.0, "accuracy": 1.0}
        m = metrics([1, 0], [0.1, 0.1])
        assert m["recall"] == 0 and m["f1"] == 0
        with pytest.raises(ValueError):
            metrics([], [])


def toy_vectors(n=40, seed=0):
    rng = np.random.default_rng(seed)
    vectors, docs = {}, {}
    for i in range(n):
        y = i % 2
        name = f"c{i:02d}"
        vectors[name] = FeatureVector(name, np.zeros(300), rng.normal(y * 2.0, 1.0, 25),
                                      rng.normal(0, 1, 32), y)
        docs[name] = Counter({"vote": int(rng.poisson(3 + 6 * y)), "the": 10, f"rare{i}": 1})
    return vectors, docs


FAST = {"gbt": {"n_trees": 10}, "mlp": {"max_epochs": 2}}


class TestAblation:
    def test_shape(self):
        vectors, docs = toy_vectors()
        r = run_ablation(vectors, docs, models=["gbt"], params=FAST)
        assert len(r.settings) == 6 and r.n_models_fitted == 30
        for s in r.settings:
            assert sorted(s.probabilities) == sorted(vectors)
            assert s.mean("f1") == pytest.approx(np.mean([f["f1"] for f in s.folds]))
        assert r.get("gbt", "M").mean("f1") > r.get("gbt", "N").mean("f1")

    def test_both_models(self):
        vectors, docs = toy_vectors()
        r = run_ablation(vectors, docs, subsets=[("M",)], params=FAST)
        assert [s.model for s in r.settings] == ["gbt", "mlp"]

    def test_deletion_leaves_training_unchanged(self):
        vectors, docs = toy_vectors()
        train = sorted(vectors)[:30]
        kept_v = {c: vectors[c] for c in train}
        kept_d = {c: docs[c] for c in train}
        probe = np.random.default_rng(5).normal(size=(7, 357))
        for model in ("gbt", "mlp"):
            a, va = train_fold(vectors, docs, train, model, "L+M+N", FAST[model])
            b, vb = train_fold(kept_v, kept_d, train, model, "L+M+N", FAST[model])
            assert va == vb
            assert np.array_equal(a.predict_proba(probe), b.predict_proba(probe))

    def test_test_documents_do_not_shape_vocabulary(self):
        vectors, docs = toy_vectors()
        train = sorted(vectors)[:30]
        _, vocab = train_fold(vectors, docs, train, "gbt", "L", FAST["gbt"])
        assert "rare35" not in vocab.tokens and vocab.n_documents == 30

    def test_reproducible_report_bytes(self, tmp_path):
        vectors, docs = toy_vectors()
        for i in (1, 2):
            r = run_ablation(vectors, docs, params=FAST, subsets=[("L", "M"), ("N",)], seed=3)
            write_report_csv(tmp_path / f"r{i}.csv", r)
        assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()

    def test_workers_do_not_change_results(self):
        vectors, docs = toy_vectors()
        a = run_ablation(vectors, docs, models=["gbt"], subsets=[("M",)], params=FAST)
        b = run_ablation(vectors, docs, models=["gbt"], subsets=[("M",)], params=FAST, workers=2)
        assert a.to_dict() == b.to_dict()

    def test_unlabeled_rejected(self):
        vectors, docs = toy_vectors()
        vectors["c00"].label = None
        with pytest.raises(ValueError):
            run_ablation(vectors, docs)


def report_with(probs, labels):
    s = SettingResult("gbt", ("L", "M", "N"), [metrics(list(labels.values()), list(probs.values()))], probs)
    return EvalReport(1, 0, labels, {c: 0 for c in labels}, [s])


class TestErrors:
    def test_ranking(self):
        r = report_with({"a": 0.97, "b": 0.6, "c": 0.3, "d": 0.1, "e": 0.45},
                        {"a": 0, "b": 0, "c": 0, "d": 1, "e": 1})
        err = top_errors(r, n=10)
        assert err["false_positives"] == [("a", 0.97), ("b", 0.6)]
        assert err["false_negatives"] == [("d", 0.1), ("e", 0.45)]
        assert top_errors(r, n=1)["false_positives"] == [("a", 0.97)]

    def test_csv(self, tmp_path):
        r = report_with({"a": 0.97, "d": 0.1}, {"a": 0, "d": 1})
        write_errors_csv(tmp_path / "e.csv", top_errors(r))
        assert (tmp_path / "e.csv").read_text().splitlines() == [
            "kind,community,probability", "FP,a,0.97", "FN,d,0.1"]


def test_report_outputs(tmp_path):
    vectors, docs = toy_vectors()
    r = run_ablation(vectors, docs, models=["gbt"], params=FAST)
    write_report_csv(tmp_path / "r.csv", r)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "model,blocks,fold,precision,recall,f1,accuracy"
    assert len(lines) == 1 + 30 + 12
    text = format_table(r)
    assert len(text.splitlines()) == 7 and "L+M+N" in text and "±" in text
    write_table_csv(tmp_path / "t.csv", r)
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 7
    assert EvalReport.from_dict(r.to_dict()).to_dict() == r.to_dict()


def test_dataset_statistics():
    day = 86_400

    def corp(name, n_sub, n_com, subs, created, last):
        s = tuple(SubmissionRecord(f"{name}s{i}", name, f"u{i}", "t", "", 1, last - i) for i in range(n_sub))
        c = tuple(CommentRecord(f"{name}c{i}", name, "[deleted]", "x", 1, last - i, "t3_x", "t3_x")
                  for i in range(n_com))
        return CommunityCorpus(name, s, c, CommunityMeta(name, subs, created), (0, 10**9))

    cutoff = 100 * day
    corpora = {"a": corp("a", 2, 4, 10, 0, cutoff - 3 * day), "b": corp("b", 4, 4, 30, 50 * day, cutoff),
               "z": corp("z", 1, 0, 5, 90 * day, cutoff - 1)}
    st_ = dataset_statistics(corpora, {"a": 1, "b": 0}, cutoff)
    assert st_["positive"]["count"] == 1 and st_["all"]["count"] == 3
    assert st_["all"]["subscribers"] == {"total": 45.0, "mean": 15.0, "median": 10.0,
                                         "std": pytest.approx(np.std([10, 30, 5]))}
    assert st_["positive"]["inactive"]["mean"] == 3.0 and st_["all"]["inactive"]["median"] == 0.0
    assert st_["positive"]["comments"]["mean"] == 2.0 and st_["all"]["comments"]["total"] is None
    assert st_["negative"]["age"]["mean"] == 50.0
    assert st_["all"]["active_users"]["total"] == 7.0
