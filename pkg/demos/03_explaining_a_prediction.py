"""
Why does the model think a community will join?
===============================================

Trains the boosted trees on all labeled synthetic communities, then
splits every prediction into additive per-feature contributions.  The
first table ranks features by mean absolute contribution; the second walks
one community from the base rate to its final score.

Run:  python3 demos/03_explaining_a_prediction.py
"""
import tempfile

from engagepred.corpus import build_corpora, load_meta, load_records
from engagepred.explain import aggregate_shap, attribution_significance, explain_rows, waterfall
from engagepred.features import assemble_matrix, featurize
from engagepred.labeling import read_labels
from engagepred.models import gbt_train
from engagepred.synth import CUTOFF, DS1_START, SynthConfig, generate

paths = generate(SynthConfig(n_communities=200, seed=3), tempfile.mkdtemp(prefix="engagepred-demo-"))
corpora = build_corpora(load_records(paths["submissions.jsonl"], "submission"),
                        load_records(paths["comments.jsonl"], "comment"),
                        load_meta(paths["metadata.csv"]), (DS1_START, CUTOFF))
fs = featurize(corpora, read_labels(paths["labels.csv"]).assignments, CUTOFF, workers=2)
m = assemble_matrix(fs.vectors, "L+M+N", fs.vocabulary)
model = gbt_train(m.X, m.y, feature_names=m.columns)

attrs = explain_rows(model, m.X, m.communities)
summary = aggregate_shap(attrs)
summary.p_values = attribution_significance(summary.phi, m.y, n_permutations=500)

print(f"{'rank':>4}  {'feature':<40}{'mean|phi|':>10}{'spearman':>10}{'p':>8}")
for row in summary.table(top=12):
    print(f"{row['rank']:>4}  {row['feature']:<40}{row['mean_abs_shap']:>10.4f}"
          f"{row['spearman']:>10.3f}{row['p_value']:>8.3f}")

# the community the model is most sure about
top = max(attrs, key=lambda a: a.output_margin)
wf = waterfall(top, top_k=8)
print(f"\n{wf.community}: base {wf.base:.3f}")
for e in wf.entries:
    print(f"  {e['name']:<40}{e['phi']:+.3f}  -> {e['cumulative_probability']:.3f}")
print(f"  final {wf.final:.3f}")
