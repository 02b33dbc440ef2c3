"""
Growing a label set from a keyword search
=========================================

During the campaign window many communities mention it, but only some
take part.  Starting from a small hand-labeled seed, a classifier trained
on campaign-window features promotes the candidates it is confident
about, retrains and repeats.  Ground truth from the generator tells us how
precise each round was.  Finally every positive is paired with the unused
community closest to it in size, so the two classes end up alike in volume.

Run:  python3 demos/04_bootstrap_labeling.py
"""
import tempfile

from engagepred.corpus import build_corpora, load_meta, load_records
from engagepred.features import assemble_matrix, featurize
from engagepred.labeling import (
    BootstrapConfig,
    bootstrap_labels,
    community_sizes,
    match_negatives,
    read_labels,
    regex_candidates,
)
from engagepred.synth import CUTOFF, DS1_START, DS2_END, SynthConfig, generate

paths = generate(SynthConfig(n_communities=300, positive_fraction=0.3, seed=5),
                 tempfile.mkdtemp(prefix="engagepred-demo-"))
subs = list(load_records(paths["submissions.jsonl"], "submission"))
coms = list(load_records(paths["comments.jsonl"], "comment"))
meta = load_meta(paths["metadata.csv"])
ds1 = build_corpora(subs, coms, meta, (DS1_START, CUTOFF))
ds2 = build_corpora(subs, coms, meta, (CUTOFF, DS2_END))
truth = read_labels(paths["labels.csv"]).assignments
seed = read_labels(paths["seed_labels.csv"])

cfg = BootstrapConfig(("pixel", "canvas", "rplace"), confidence_threshold=0.95, max_iterations=3)
candidates = regex_candidates(ds2, cfg.patterns)
hits = sum(truth[c] for c in candidates)
print(f"keyword search: {len(candidates)} candidates, {hits} of them real participants")
print(f"seed: {len(seed.positives)} positives, {len(seed.negatives)} negatives")

wanted = {c: seed.assignments.get(c, 0) for c in candidates | set(seed.assignments)}
fs = featurize(ds2, wanted, DS2_END, workers=2)
grown = bootstrap_labels(seed, sorted(candidates), assemble_matrix(fs.vectors, "L+M+N", fs.vocabulary), cfg)

for it in range(1, cfg.max_iterations + 1):
    added = [c for c, p in grown.provenance.items() if p == f"bootstrap-iter-{it}"]
    if added:
        right = sum(truth[c] for c in added)
        print(f"round {it}: +{len(added)} positives, {right} correct")

positives = grown.positives & set(ds1)
sizes = community_sizes(ds1)
negatives = match_negatives({c: sizes[c] for c in positives},
                            {c: s for c, s in sizes.items() if c not in grown.assignments})
print(f"\n{len(positives)} positives matched to {len(negatives)} negatives")
for name, group in (("positives", positives), ("negatives", negatives.negatives)):
    v = sorted(sizes[c] for c in group)
    print(f"  {name:<9} submissions: min {v[0]}, median {v[len(v) // 2]}, max {v[-1]}")
