"""Resumable pipeline stages.

Every stage writes into ``<workdir>/<stage>/`` together with a
``manifest.json`` recording the content hashes of its inputs, the seed, the
package version and the configuration it read.  A stage whose manifest
would be unchanged and whose outputs are all present is skipped.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping


from . import __version__
from .config import ConfigError
from .corpus import build_corpora, load_meta, load_records, read_corpora, write_corpora
from .evaluation import (
    EvalReport,
    dataset_statistics,
    format_table,
    run_ablation,
    top_errors,
    write_errors_csv,
    write_report_csv,
    write_table_csv,
)
from .explain import aggregate_shap, attribution_significance, explain_rows, waterfall, write_beeswarm, write_waterfall
from .features import (
    assemble_matrix,
    featurize,
    read_feature_csv,
    write_feature_csv,
)
from .labeling import (
    BootstrapConfig,
    LabelSet,
    bootstrap_labels,
    community_sizes,
    import_atlas,
    match_negatives,
    read_labels,
    regex_candidates,
    write_labels,
)
from .models import gbt_train, load_model, mlp_train, save_model
from .models.gbt import TreeEnsemble
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)

STAGES = ("synth", "ingest", "label", "featurize", "train", "evaluate", "explain", "report")
PIPELINE = STAGES[1:]


class MissingPrerequisite(RuntimeError):
    """An upstream output or a configured input file is absent."""


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Context:
    cfg: dict
    workdir: Path
    force: bool = False

    @property
    def seed(self) -> int:
        return int(self.cfg["seed"])

    @property
    def workers(self) -> int:
        return int(self.cfg["workers"])

    def dir(self, stage: str) -> Path:
        return self.workdir / stage

    def upstream(self, stage: str, name: str) -> Path:
        p = self.dir(stage) / name
        if not p.exists():
            raise MissingPrerequisite(f"{p} is missing: run {stage} first")
        return p

    def configured(self, key: str, synth_name: str | None = None, required: bool = True) -> list[Path]:
        """Paths from ``paths.<key>``, falling back to the synth output."""
        value = self.cfg["paths"][key]
        if value is None:
            fallback = self.dir("synth") / synth_name if synth_name else None
            if fallback is not None and fallback.exists():
                return [fallback]
            if required:
                raise MissingPrerequisite(f"paths.{key} is not set: set it or run synth first")
            return []
        paths = [Path(v) for v in (value if isinstance(value, list) else [value])]
        for p in paths:
            if not p.exists():
                raise MissingPrerequisite(f"paths.{key}: {p} not found")
        return paths


@dataclass(frozen=True)
class Stage:
    name: str
    inputs: Callable[[Context], dict[str, Path]]
    config: Callable[[Context], dict]
    run: Callable[[Context, dict[str, Path]], list[str]]


def execute(stage: Stage, ctx: Context) -> bool:
    """Run ``stage`` unless an identical manifest says it is up to date."""
    inputs = stage.inputs(ctx)
    manifest = {
        "stage": stage.name,
        "version": __version__,
        "seed": ctx.seed,
        "config": stage.config(ctx),
        "inputs": {k: sha256(p) for k, p in sorted(inputs.items())},
    }
    out = ctx.dir(stage.name)
    mpath = out / "manifest.json"
    if not ctx.force and mpath.exists():
        old = json.loads(mpath.read_text(encoding="utf-8"))
        outputs = old.pop("outputs", [])
        if old == manifest and all((out / o).exists() for o in outputs):
            log.info("%s: up to date", stage.name)
            return False
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    manifest["outputs"] = sorted(stage.run(ctx, inputs))
    mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("%s: wrote %s", stage.name, ", ".join(manifest["outputs"]))
    return True


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ synth

def _synth_run(ctx: Context, _inputs) -> list[str]:
    cfg = SynthConfig(seed=ctx.seed, **ctx.cfg["synth"])
    paths = generate(cfg, ctx.dir("synth"))
    return [p.name for p in paths.values()]


SYNTH = Stage("synth", lambda ctx: {}, lambda ctx: dict(ctx.cfg["synth"]), _synth_run)


# ----------------------------------------------------------------- ingest

def _ingest_inputs(ctx: Context) -> dict[str, Path]:
    out = {}
    for key, name in (("submissions", "submissions.jsonl"), ("comments", "comments.jsonl")):
        for i, p in enumerate(ctx.configured(key, name)):
            out[f"{key}[{i}]"] = p
    out["metadata"] = ctx.configured("metadata", "metadata.csv")[0]
    return out


def _ingest_run(ctx: Context, inputs) -> list[str]:
    meta = load_meta(inputs["metadata"])
    streams = [load_records(p, "submission") for k, p in inputs.items() if k.startswith("submissions")]
    streams += [load_records(p, "comment") for k, p in inputs.items() if k.startswith("comments")]
    subs = [r for s in streams if s.kind == "submission" for r in s]
    coms = [r for s in streams if s.kind == "comment" for r in s]
    stats = {"files": {str(s.path): {"parsed": s.parsed, "skipped": s.skipped} for s in streams}}
    for name in ("ds1", "ds2"):
        w = ctx.cfg["windows"][name]
        corpora = build_corpora(subs, coms, meta, (w["start"], w["end"]))
        write_corpora(ctx.dir("ingest") / f"{name}.jsonl", corpora)
        stats[name] = {
            "communities": len(corpora),
            "submissions": sum(len(c.submissions) for c in corpora.values()),
            "comments": sum(len(c.comments) for c in corpora.values()),
        }
    _json(ctx.dir("ingest") / "stats.json", stats)
    return ["ds1.jsonl", "ds2.jsonl", "stats.json"]


INGEST = Stage("ingest", _ingest_inputs, lambda ctx: {"windows": ctx.cfg["windows"]}, _ingest_run)


# ------------------------------------------------------------------ label

def _label_inputs(ctx: Context) -> dict[str, Path]:
    out = {"ds1": ctx.upstream("ingest", "ds1.jsonl")}
    if ctx.cfg["paths"]["labels"] is not None:
        out["labels"] = ctx.configured("labels")[0]
        return out
    atlas = ctx.configured("atlas", required=False)
    if atlas:
        out["atlas"] = atlas[0]
    elif not ctx.cfg["labeling"]["bootstrap"]:
        out["labels"] = ctx.configured("labels", "labels.csv")[0]
        return out
    if ctx.cfg["labeling"]["bootstrap"]:
        out["ds2"] = ctx.upstream("ingest", "ds2.jsonl")
        out["seed_labels"] = ctx.configured("seed_labels", "seed_labels.csv")[0]
        out["patterns"] = ctx.configured("patterns", "patterns.txt")[0]
    return out


def _read_patterns(path: Path) -> tuple[str, ...]:
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    return tuple(ln for ln in lines if ln and not ln.startswith("#"))


def _label_run(ctx: Context, inputs) -> list[str]:
    out = ctx.dir("label")
    if "labels" in inputs:
        labels = read_labels(inputs["labels"])
    else:
        ds1 = read_corpora(inputs["ds1"])
        positives = import_atlas(inputs["atlas"]) if "atlas" in inputs else LabelSet()
        if ctx.cfg["labeling"]["bootstrap"]:
            positives = positives.merged(_bootstrap(ctx, inputs))
        lc = ctx.cfg["labeling"]
        sizes = community_sizes(ds1, lc["size_metric"])
        absent = sorted(c for c in positives.positives if c not in sizes)
        if absent:
            log.warning("%d positives have no %s in the feature window and are dropped", len(absent),
                        lc["size_metric"])
        positives = positives.restricted(set(sizes))
        pool = {c: s for c, s in sizes.items() if c not in positives}
        negatives = match_negatives({c: sizes[c] for c in positives.positives}, pool)
        labels = positives.merged(negatives)
    write_labels(out / "labels.csv", labels)
    _json(out / "summary.json", {"positives": len(labels.positives), "negatives": len(labels.negatives),
                                 "provenance": dict(sorted(Counter(labels.provenance.values()).items()))})
    return ["labels.csv", "summary.json"]


def _bootstrap(ctx: Context, inputs) -> LabelSet:
    lc = ctx.cfg["labeling"]
    bc = BootstrapConfig(_read_patterns(inputs["patterns"]), lc["confidence_threshold"], lc["max_iterations"],
                         dict(ctx.cfg["models"]["gbt"], seed=ctx.seed))
    ds2 = read_corpora(inputs["ds2"])
    candidates = regex_candidates(ds2, bc.patterns)
    seed = read_labels(inputs["seed_labels"])
    wanted = {c: seed.assignments.get(c, 0) for c in candidates | set(seed.assignments) if c in ds2}
    fs = featurize(ds2, wanted, ctx.cfg["windows"]["ds2"]["end"], workers=ctx.workers,
                   **_feature_kwargs(ctx))
    seed = seed.restricted(fs.vectors)
    matrix = assemble_matrix(fs.vectors, "L+M+N", fs.vocabulary)
    grown = bootstrap_labels(seed, [c for c in candidates if c in fs.vectors], matrix, bc)
    return LabelSet({c: 1 for c in grown.positives}, {c: grown.provenance[c] for c in grown.positives})


def _label_config(ctx: Context) -> dict:
    return {"labeling": ctx.cfg["labeling"], "gbt": ctx.cfg["models"]["gbt"]}


LABEL = Stage("label", _label_inputs, _label_config, _label_run)


# -------------------------------------------------------------- featurize

def _feature_kwargs(ctx: Context) -> dict:
    f = ctx.cfg["features"]
    return {"submission_cap": f["submission_cap"], "vocab_size": f["vocab_size"],
            "graph_kwargs": {"exact_limit": f["exact_betweenness_limit"], "pivots": f["sampled_pivots"],
                             "cut_limit": f["min_cut_limit"], "seed": ctx.seed}}


def _featurize_run(ctx: Context, inputs) -> list[str]:
    out = ctx.dir("featurize")
    corpora = read_corpora(inputs["ds1"])
    labels = read_labels(inputs["labels"]).assignments
    fs = featurize(corpora, labels, ctx.cfg["windows"]["ds1"]["end"], workers=ctx.workers,
                   **_feature_kwargs(ctx))
    if not fs.vectors:
        raise ConfigError("no labeled community has data in the feature window")
    write_feature_csv(out / "features.csv", fs)
    _json(out / "documents.json", {c: dict(sorted(d.items())) for c, d in sorted(fs.documents.items())})
    _json(out / "summary.json", {
        "communities": len(fs.vectors),
        "dropped": fs.dropped,
        "vocabulary": list(fs.vocabulary.tokens) if fs.vocabulary else [],
        "degenerate": {c: sorted(v.flags) for c, v in sorted(fs.vectors.items()) if v.flags},
    })
    return ["features.csv", "documents.json", "summary.json"]


FEATURIZE = Stage(
    "featurize",
    lambda ctx: {"ds1": ctx.upstream("ingest", "ds1.jsonl"), "labels": ctx.upstream("label", "labels.csv")},
    lambda ctx: {"features": ctx.cfg["features"], "cutoff": ctx.cfg["windows"]["ds1"]["end"]},
    _featurize_run,
)


def _load_features(path: Path) -> tuple[dict, list[str]]:
    vectors, cols = read_feature_csv(path)
    if any(v.label is None for v in vectors.values()):
        raise ConfigError(f"{path}: every row needs a label")
    return vectors, cols


def _load_documents(path: Path) -> dict[str, Counter]:
    return {c: Counter(d) for c, d in json.loads(path.read_text(encoding="utf-8")).items()}


def _model_params(ctx: Context, model: str) -> dict:
    return dict(ctx.cfg["models"][model], seed=ctx.seed)


# ------------------------------------------------------------------ train

def _train_run(ctx: Context, inputs) -> list[str]:
    vectors, cols = _load_features(inputs["features"])
    blocks = ctx.cfg["train"]["blocks"]
    m = assemble_matrix(vectors, blocks)
    names = [c for c in cols if c[0] in blocks]
    kind = ctx.cfg["train"]["model"]
    fit = gbt_train if kind == "gbt" else mlp_train
    model = fit(m.X, m.y, _model_params(ctx, kind), names)
    save_model(model, ctx.dir("train") / "model.json")
    return ["model.json"]


TRAIN = Stage(
    "train",
    lambda ctx: {"features": ctx.upstream("featurize", "features.csv")},
    lambda ctx: {"train": ctx.cfg["train"], "params": ctx.cfg["models"][ctx.cfg["train"]["model"]]},
    _train_run,
)


# --------------------------------------------------------------- evaluate

def _evaluate_run(ctx: Context, inputs) -> list[str]:
    out = ctx.dir("evaluate")
    vectors, _ = _load_features(inputs["features"])
    ev = ctx.cfg["evaluate"]
    report = run_ablation(vectors, _load_documents(inputs["documents"]), ev["models"],
                          [tuple(s) for s in ev["subsets"]], ev["k"], ctx.seed,
                          {m: _model_params(ctx, m) for m in ev["models"]}, ctx.workers)
    write_report_csv(out / "report.csv", report)
    write_table_csv(out / "table.csv", report)
    (out / "table.txt").write_text(format_table(report), encoding="utf-8")
    _json(out / "report.json", report.to_dict())
    s = _error_setting(ctx, report)
    write_errors_csv(out / "errors.csv", top_errors(report, s.model, s.blocks, ev["top_errors"]))
    return ["report.csv", "table.csv", "table.txt", "report.json", "errors.csv"]


def _error_setting(ctx: Context, report: EvalReport):
    try:
        return report.get(ctx.cfg["train"]["model"], ctx.cfg["train"]["blocks"])
    except KeyError:
        return report.settings[-1]


EVALUATE = Stage(
    "evaluate",
    lambda ctx: {"features": ctx.upstream("featurize", "features.csv"),
                 "documents": ctx.upstream("featurize", "documents.json")},
    lambda ctx: {"evaluate": ctx.cfg["evaluate"], "models": ctx.cfg["models"], "train": ctx.cfg["train"]},
    _evaluate_run,
)


# ---------------------------------------------------------------- explain

def _explain_run(ctx: Context, inputs) -> list[str]:
    out = ctx.dir("explain")
    model = load_model(inputs["model"])
    if not isinstance(model, TreeEnsemble):
        raise ConfigError("train.model: explanations need a gbt model")
    vectors, _ = _load_features(inputs["features"])
    m = assemble_matrix(vectors, ctx.cfg["train"]["blocks"])
    attrs = explain_rows(model, m.X, m.communities)
    summary = aggregate_shap(attrs)
    ex = ctx.cfg["explain"]
    summary.p_values = attribution_significance(summary.phi, m.y, ex["permutations"], ctx.seed)
    with open(out / "importance.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "rank", "mean_abs_shap", "spearman", "p_value"])
        for row in summary.table():
            w.writerow([row["feature"], row["rank"], f"{row['mean_abs_shap']:.10g}",
                        f"{row['spearman']:.6f}", f"{row['p_value']:.6f}"])
    write_beeswarm(out / "beeswarm.csv", summary)
    targets = ex["waterfall"] or [max(attrs, key=lambda a: (a.output_margin, a.community)).community]
    by_name = {a.community: a for a in attrs}
    written = ["importance.csv", "beeswarm.csv"]
    for c in targets:
        if c not in by_name:
            raise ConfigError(f"explain.waterfall: {c!r} is not a labeled community")
        name = f"waterfall_{c}.json"
        write_waterfall(out / name, waterfall(by_name[c], ex["top_k"]))
        written.append(name)
    return written


EXPLAIN = Stage(
    "explain",
    lambda ctx: {"model": ctx.upstream("train", "model.json"),
                 "features": ctx.upstream("featurize", "features.csv")},
    lambda ctx: {"explain": ctx.cfg["explain"], "blocks": ctx.cfg["train"]["blocks"]},
    _explain_run,
)


# ----------------------------------------------------------------- report

def _report_inputs(ctx: Context) -> dict[str, Path]:
    out = {"report": ctx.upstream("evaluate", "report.json"),
           "ds1": ctx.upstream("ingest", "ds1.jsonl"),
           "labels": ctx.upstream("label", "labels.csv")}
    for p in sorted(ctx.dir("explain").glob("*")) if ctx.dir("explain").exists() else []:
        if p.name in ("importance.csv",) or p.name.startswith("waterfall_"):
            out[f"explain/{p.name}"] = p
    return out


def _report_run(ctx: Context, inputs) -> list[str]:
    out = ctx.dir("report")
    report = EvalReport.from_dict(json.loads(inputs["report"].read_text(encoding="utf-8")))
    (out / "results.txt").write_text(format_table(report), encoding="utf-8")
    write_table_csv(out / "results.csv", report)
    written = ["results.txt", "results.csv", "statistics.csv"]

    stats = dataset_statistics(read_corpora(inputs["ds1"]), read_labels(inputs["labels"]).assignments,
                               ctx.cfg["windows"]["ds1"]["end"])
    with open(out / "statistics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "count", "row", "total", "mean", "median", "std"])
        for group, rows in stats.items():
            for row, vals in rows.items():
                if row == "count":
                    continue
                w.writerow([group, rows["count"], row,
                            *("" if vals[k] is None else f"{vals[k]:.4f}" for k in ("total", "mean", "median", "std"))])

    if "explain/importance.csv" in inputs:
        with open(inputs["explain/importance.csv"], newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))[: ctx.cfg["explain"]["top_features"]]
        lines = [f"{'rank':>4}  {'feature':<44} {'mean|shap|':>10} {'spearman':>9} {'p':>8}"]
        lines += [f"{r['rank']:>4}  {r['feature']:<44} {float(r['mean_abs_shap']):>10.4f} "
                  f"{float(r['spearman']):>9.3f} {float(r['p_value']):>8.4f}" for r in rows]
        (out / "importance.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append("importance.txt")
    for key in sorted(k for k in inputs if k.startswith("explain/waterfall_")):
        doc = json.loads(inputs[key].read_text(encoding="utf-8"))
        lines = [f"community {doc['community']}", f"{'base':<44} {doc['base']:.3f}"]
        lines += [f"{e['name']:<44} {e['phi']:+.4f} -> {e['cumulative_probability']:.3f}" for e in doc["entries"]]
        lines.append(f"{'final':<44} {doc['final']:.3f}")
        name = Path(key).stem + ".txt"
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(name)
    return written


REPORT = Stage("report", _report_inputs, lambda ctx: {"top_features": ctx.cfg["explain"]["top_features"]},
               _report_run)

REGISTRY: Mapping[str, Stage] = {s.name: s for s in (SYNTH, INGEST, LABEL, FEATURIZE, TRAIN, EVALUATE,
                                                      EXPLAIN, REPORT)}


def run_stage(name: str, ctx: Context) -> bool:
    return execute(REGISTRY[name], ctx)


def run_pipeline(ctx: Context) -> list[str]:
    """ingest through report; explain is skipped for an MLP."""
    ran = []
    for name in PIPELINE:
        if name == "explain" and ctx.cfg["train"]["model"] != "gbt":
            continue
        if run_stage(name, ctx):
            ran.append(name)
    return ran

