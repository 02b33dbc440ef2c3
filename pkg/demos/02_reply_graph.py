"""
From a Pushshift dump to a reply graph
======================================

Reads the 1000-line fixture shipped with the tests, builds each
community's author reply graph and prints a handful of its structural
features.  Edges point from the replying author to the author replied to;
deleted accounts and self-replies are left out.

Run:  python3 demos/02_reply_graph.py
"""
from pathlib import Path

from engagepred.corpus import build_corpora, load_records, normalize_text
from engagepred.graph import build_reply_graph, network_feature_vector

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "pushshift_1000"

subs = load_records(FIXTURE / "submissions.jsonl", "submission")
coms = load_records(FIXTURE / "comments.jsonl", "comment")
corpora = build_corpora(subs, coms, None, (0, 2**31))
print(f"parsed {subs.parsed + coms.parsed} records, skipped {subs.skipped + coms.skipped}")

sample = next(iter(corpora.values())).submissions[0]
print(f"\nraw title : {sample.title!r}")
print(f"normalized: {normalize_text(sample.text)[:15]}")

shown = ("num_nodes", "num_edges", "density", "num_triangles", "max_strongly_connected_component",
         "is_biconnected", "num_nodes_to_cut", "max_betweenness")
print(f"\n{'community':<20}" + "".join(f"{n[:12]:>13}" for n in shown))
for name, corpus in corpora.items():
    g = build_reply_graph(corpus)
    stats = network_feature_vector(g).as_dict()
    print(f"{name:<20}" + "".join(f"{stats[n]:>13.3g}" for n in shown))
