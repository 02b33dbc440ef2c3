import numpy as np
import pytest

from engagepred.corpus import build_corpora, load_meta, load_records
from engagepred.evaluation import run_ablation
from engagepred.features import featurize
from engagepred.labeling import import_atlas, read_labels
from engagepred.synth import CUTOFF, DS1_START, DS2_END, FILES, SynthConfig, generate


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    cfg = SynthConfig(n_communities=30, seed=7)
    return cfg, generate(cfg, tmp_path_factory.mktemp("synth"))


def test_byte_identical(small, tmp_path):
    cfg, paths = small
    again = generate(cfg, tmp_path)
    for f in FILES:
        assert again[f].read_bytes() == paths[f].read_bytes(), f


def test_seed_changes_output(small, tmp_path):
    _, paths = small
    other = generate(SynthConfig(n_communities=30, seed=8), tmp_path)
    assert other["comments.jsonl"].read_bytes() != paths["comments.jsonl"].read_bytes()


def test_ingests_cleanly(small):
    _, paths = small
    subs = load_records(paths["submissions.jsonl"], "submission")
    coms = load_records(paths["comments.jsonl"], "comment")
    corpora = build_corpora(subs, coms, load_meta(paths["metadata.csv"]), (DS1_START, DS2_END))
    assert subs.skipped == 0 and coms.skipped == 0 and subs.parsed > 0
    assert len(corpora) == 30 and all(c.meta is not None for c in corpora.values())


def test_label_balance_and_atlas(small):
    cfg, paths = small
    labels = read_labels(paths["labels.csv"])
    assert len(labels) == 30
    assert abs(len(labels.positives) - cfg.positive_fraction * 30) <= 1
    atlas = import_atlas(paths["atlas.csv"]).positives
    assert atlas <= labels.positives


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_communities=3)
    with pytest.raises(ValueError):
        SynthConfig(delta_m=-1)
    with pytest.raises(ValueError):
        SynthConfig(positive_fraction=1.0)


def test_network_only_signal(tmp_path):
    cfg = SynthConfig(n_communities=160, delta_l=0, delta_m=0, delta_n=0.9, seed=11)
    paths = generate(cfg, tmp_path)
    corpora = build_corpora(load_records(paths["submissions.jsonl"], "submission"),
                            load_records(paths["comments.jsonl"], "comment"),
                            load_meta(paths["metadata.csv"]), (DS1_START, CUTOFF))
    fs = featurize(corpora, read_labels(paths["labels.csv"]).assignments, CUTOFF)
    r = run_ablation(fs.vectors, fs.documents, models=["gbt"], subsets=[("N",), ("L",)],
                     params={"gbt": {"n_trees": 50}}, seed=1)
    n, l = r.get("gbt", "N").mean("f1"), r.get("gbt", "L").mean("f1")
    assert n > l
    assert n > 0.6
