"""Command-line pipeline: every stage reads and writes the documented file
formats, so any stage can be replaced by external tooling.

Config precedence is flags > TOML config file > defaults; all randomness
is seeded via --seed. Each subcommand writes its outputs plus one
manifest.json (config hash, input/output digests) into --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, client, corpus, mapping, metrics, retrieval, synth, thresholds
from .errors import ClinibenchError
from .guided import (
    GenerationBudget,
    SchemaMode,
    Vocabulary,
    automaton_fingerprint,
    compile as compile_masks,
    file_sha256,
    load_automaton,
    save_automaton,
    schema_regex,
)
from .manifest import ManifestWriter
from .prompt import PromptMode, assemble, demonstration_for, load_templates

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _load_config(path: str | None, subcommand: str) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    merged = {k: v for k, v in data.items() if not isinstance(v, dict)}
    merged.update(data.get(subcommand, {}))
    return merged


class _Resolver:
    """flags > config file > defaults"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(getattr(args, "config", None), args.subcommand)

    def get(self, key: str, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        return self.config.get(key.replace("_", "-"), self.config.get(key, default))


def _split_and_notes(res: _Resolver):
    table = corpus.CodeTable.from_csv(res.get("codes"))
    notes = corpus.ingest_notes(res.get("notes"), table)
    split_path = res.get("split")
    split = corpus.DatasetSplit.from_json(Path(split_path).read_text()) if split_path else None
    return table, notes, split


def _notes_by_id(notes):
    return {n.note_id: n for n in notes}


def _write_code_predictions(path, predictions: dict[str, list[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for note_id in sorted(predictions):
            obj = {"note_id": note_id, "codes": predictions[note_id]}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _read_any_predictions(path) -> dict[str, list[str]]:
    """Accept both {"codes": [...]} and mapped {"items": [...]} JSONL."""
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "codes" in obj:
                out[obj["note_id"]] = list(obj["codes"])
            else:
                out[obj["note_id"]] = [
                    item["code"] for item in obj.get("items", []) if item.get("code")
                ]
    return out


# --- subcommand handlers ---


def cmd_synth(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = synth.SynthConfig(
        n_notes=int(res.get("notes_count", 300)),
        n_codes=int(res.get("codes_count", 50)),
        seed=int(res.get("seed", 0)),
        version=int(res.get("icd_version", 10)),
        module=res.get("module", "hosp"),
    )
    notes_path = outdir / "notes.jsonl"
    codes_path = outdir / "codes.csv"
    synth.write_corpus(cfg, notes_path, codes_path)
    manifest = ManifestWriter("synth", outdir, vars(cfg), seed=cfg.seed)
    manifest.add_output(notes_path)
    manifest.add_output(codes_path)
    manifest.write()
    return 0


def cmd_build_dataset(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    table = corpus.CodeTable.from_csv(res.get("codes"))
    notes = corpus.ingest_notes(res.get("notes"), table)
    out_path = outdir / "notes.jsonl"
    corpus.write_notes(out_path, notes)
    manifest = ManifestWriter(
        "build-dataset", outdir, {"notes": res.get("notes"), "codes": res.get("codes")}
    )
    manifest.add_input(res.get("notes"))
    manifest.add_input(res.get("codes"))
    manifest.add_output(out_path)
    manifest.write()
    print(f"ingested {len(notes)} notes")
    return 0


def cmd_split(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    table, notes, _ = _split_and_notes(res)
    ratios = tuple(float(x) for x in str(res.get("ratios", "0.7,0.1,0.2")).split(","))
    seed = int(res.get("seed", 0))
    split = corpus.stratified_split(notes, ratios, seed)
    out_path = outdir / "split.json"
    out_path.write_text(split.to_json())
    manifest = ManifestWriter("split", outdir, {"ratios": ratios, "seed": seed}, seed=seed)
    manifest.add_input(res.get("notes"))
    manifest.add_output(out_path)
    manifest.write()
    print(
        f"split sizes: train={len(split.train_ids)} val={len(split.val_ids)} "
        f"test={len(split.test_ids)}, registry={len(split.label_registry)}"
    )
    return 0


def cmd_stats(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    table, notes, split = _split_and_notes(res)
    stats = corpus.corpus_stats(split, notes)
    out_path = outdir / "stats.json"
    out_path.write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest = ManifestWriter("stats", outdir, {"notes": res.get("notes")})
    manifest.add_input(res.get("notes"))
    manifest.add_output(out_path)
    manifest.write()
    print(out_path.read_text().strip())
    return 0


def cmd_index(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    kind = res.get("kind", "bm25")
    manifest = ManifestWriter("index", outdir, {"kind": kind})
    if kind == "bm25":
        table, notes, split = _split_and_notes(res)
        by_id = _notes_by_id(notes)
        train_notes = [by_id[i] for i in split.train_ids]
        index = retrieval.build_bm25(
            train_notes, k1=float(res.get("k1", retrieval.BM25_K1)), b=float(res.get("b", retrieval.BM25_B))
        )
        out_path = outdir / "index.json"
        out_path.write_text(json.dumps(index.to_json(), sort_keys=True, separators=(",", ":")))
        manifest.add_input(res.get("notes"))
    elif kind == "dense":
        vectors_path = res.get("vectors")
        index = retrieval.load_dense_index(vectors_path)  # validates the file
        out_path = outdir / "index.vec"
        out_path.write_bytes(Path(vectors_path).read_bytes())
        manifest.add_input(vectors_path)
        print(f"dense index over {len(index.ids)} vectors of dim {index.dim}")
    else:
        raise ClinibenchError(f"unknown index kind {kind!r}")
    manifest.add_output(out_path)
    manifest.write()
    return 0


def cmd_retrieve(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    method = res.get("method", "bm25")
    k = int(res.get("k", 5))
    table, notes, split = _split_and_notes(res)
    by_id = _notes_by_id(notes)
    query_split = res.get("queries", "test")
    query_ids = split.ids_for(query_split)
    train_ids = set(split.train_ids)
    results = []
    if method == "bm25":
        index = retrieval.Bm25Index.from_json(json.loads(Path(res.get("index")).read_text()))
        for qid in query_ids:
            results.append(retrieval.retrieve(index, by_id[qid].note, k, query_id=qid))
    elif method == "dense":
        vectors, normalized = retrieval.read_vectors(res.get("vectors"))
        train_vectors = {i: v for i, v in vectors.items() if i in train_ids}
        index = retrieval.DenseIndex(train_vectors, normalized=normalized)
        for qid in query_ids:
            if qid not in vectors:
                raise ClinibenchError(f"no vector for query {qid!r}")
            results.append(retrieval.retrieve(index, vectors[qid], k, query_id=qid))
    elif method == "gold":
        use_full = bool(res.get("use_full_codes", False))
        train_notes = [by_id[i] for i in split.train_ids]
        for qid in query_ids:
            labels = set(by_id[qid].full_labels if use_full else by_id[qid].labels)
            results.append(
                retrieval.gold_heuristic(labels, train_notes, k, query_id=qid, use_full_codes=use_full)
            )
    elif method == "random":
        seed = int(res.get("seed", 0))
        for qid in query_ids:
            results.append(retrieval.random_retrieve(split.train_ids, k, seed, query_id=qid))
    else:
        raise ClinibenchError(f"unknown retrieval method {method!r}")
    out_path = outdir / "retrieval.jsonl"
    retrieval.write_results(out_path, results)
    manifest = ManifestWriter(
        "retrieve", outdir, {"method": method, "k": k, "queries": query_split},
        seed=int(res.get("seed", 0)),
    )
    manifest.add_input(res.get("notes"))
    manifest.add_output(out_path)
    manifest.write()
    return 0


def cmd_vote(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    table, notes, split = _split_and_notes(res)
    by_id = _notes_by_id(notes)
    top_n = int(res.get("top_n", 20))
    k = res.get("k")
    results = retrieval.read_results(res.get("retrieval"))
    train_labels = {i: by_id[i].labels for i in split.train_ids}
    predictions = {}
    for result in results:
        neighbors = result if k is None else retrieval.RetrievalResult(
            result.query_id, result.ranked[: int(k)]
        )
        predictions[result.query_id] = retrieval.majority_vote(neighbors, train_labels, top_n)
    out_path = outdir / "predictions.jsonl"
    _write_code_predictions(out_path, predictions)
    manifest = ManifestWriter("vote", outdir, {"top_n": top_n, "k": k})
    manifest.add_input(res.get("retrieval"))
    manifest.add_output(out_path)
    manifest.write()
    return 0


def cmd_prompt(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    table, notes, split = _split_and_notes(res)
    by_id = _notes_by_id(notes)
    mode = PromptMode(res.get("mode", "zero_shot"))
    templates = load_templates(res.get("templates")) if res.get("templates") else None
    query_ids = split.ids_for(res.get("queries", "test"))
    shots = int(res.get("shots", 5))
    neighbor_map = {}
    if mode is PromptMode.FEW_SHOT:
        for result in retrieval.read_results(res.get("retrieval")):
            neighbor_map[result.query_id] = [doc_id for doc_id, _ in result.ranked[:shots]]
    out_path = outdir / "prompts.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        for qid in query_ids:
            demos = [demonstration_for(by_id[d], table) for d in neighbor_map.get(qid, [])]
            text = assemble(mode, by_id[qid].note.full_text, demos, templates)
            fh.write(json.dumps({"note_id": qid, "prompt": text}, separators=(",", ":")) + "\n")
    manifest = ManifestWriter("prompt", outdir, {"mode": mode.value, "shots": shots})
    manifest.add_input(res.get("notes"))
    manifest.add_output(out_path)
    manifest.write()
    return 0


def _automaton_for(res: _Resolver, vocab_path: str, mode: SchemaMode):
    vocab = Vocabulary.from_file(vocab_path)
    vocab_hash = file_sha256(vocab_path)
    regex = schema_regex(mode)
    fingerprint = automaton_fingerprint(regex, vocab_hash)
    explicit = res.get("automaton")
    if explicit:
        return load_automaton(explicit, expected_fingerprint=fingerprint), vocab, vocab_hash
    cache_dir = os.environ.get("CLINIBENCH_CACHE")
    if cache_dir:
        cache_path = Path(cache_dir) / f"{fingerprint}.bin"
        if cache_path.exists():
            return load_automaton(cache_path, expected_fingerprint=fingerprint), vocab, vocab_hash
        automaton = compile_masks(regex, vocab)
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        save_automaton(cache_path, automaton, fingerprint)
        return automaton, vocab, vocab_hash
    return compile_masks(regex, vocab), vocab, vocab_hash


def cmd_compile_schema(res: _Resolver) -> int:
    mode = SchemaMode(res.get("mode", "plain"))
    vocab_path = res.get("vocab")
    vocab = Vocabulary.from_file(vocab_path)
    vocab_hash = file_sha256(vocab_path)
    regex = schema_regex(mode)
    fingerprint = automaton_fingerprint(regex, vocab_hash)
    automaton = compile_masks(regex, vocab)
    out = res.get("out")
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        out_path = outdir / "automaton.bin"
        save_automaton(out_path, automaton, fingerprint)
        manifest = ManifestWriter("compile-schema", outdir, {"mode": mode.value})
        manifest.add_input(vocab_path)
        manifest.add_output(out_path)
        manifest.write()
    else:
        cache_dir = os.environ.get("CLINIBENCH_CACHE")
        if not cache_dir:
            raise ClinibenchError("set --out or the CLINIBENCH_CACHE environment variable")
        out_path = Path(cache_dir) / f"{fingerprint}.bin"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_automaton(out_path, automaton, fingerprint)
    print(f"automaton: {automaton.n_states} states -> {out_path}")
    return 0


def cmd_generate(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    mode = SchemaMode(res.get("mode", "plain"))
    automaton, vocab, vocab_hash = _automaton_for(res, res.get("vocab"), mode)
    prompts = []
    with open(res.get("prompts"), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                prompts.append((obj["note_id"], obj["prompt"]))
    cfg = client.ClientConfig(
        timeout_s=float(res.get("timeout", client.STEP_TIMEOUT_S)),
        concurrency=int(res.get("concurrency", res.get("jobs", 1) or 1)),
    )
    budget = GenerationBudget(max_tokens=int(res.get("max_tokens", 1500)))
    records = client.generate_many(
        res.get("endpoint"), prompts, automaton, vocab, budget, mode, cfg, vocab_hash
    )
    out_path = outdir / "generations.jsonl"
    client.write_records(out_path, records)
    manifest = ManifestWriter("generate", outdir, {"mode": mode.value, "endpoint": res.get("endpoint")})
    manifest.add_input(res.get("prompts"))
    manifest.add_input(res.get("vocab"))
    manifest.add_output(out_path)
    manifest.write()
    valid = sum(1 for r in records if r.valid_json)
    print(f"generated {len(records)} outputs, valid JSON {valid}/{len(records)}")
    return 0


def cmd_replay(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    mode = SchemaMode(res.get("mode", "plain"))
    records = list(client.replay(res.get("raw"), mode))
    out_path = outdir / "generations.jsonl"
    client.write_records(out_path, records)
    manifest = ManifestWriter("replay", outdir, {"mode": mode.value})
    manifest.add_input(res.get("raw"))
    manifest.add_output(out_path)
    manifest.write()
    valid = sum(1 for r in records if r.valid_json)
    print(f"replayed {len(records)} outputs, valid JSON {valid}/{len(records)}")
    return 0


def cmd_map(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    table = corpus.CodeTable.from_csv(res.get("codes"))
    matcher = mapping.CodeMatcher(table)
    strategy = mapping.MapStrategy(res.get("strategy", "exact-then-embedding"))
    records = client.read_records(res.get("generations"))

    if res.get("emit_texts"):
        texts_dir = Path(res.get("emit_texts"))
        texts_dir.mkdir(parents=True, exist_ok=True)
        with open(texts_dir / "code_texts.jsonl", "w", encoding="utf-8") as fh:
            for cid, text in matcher.candidate_texts():
                fh.write(json.dumps({"id": cid, "text": text}, separators=(",", ":")) + "\n")
        seen = set()
        with open(texts_dir / "desc_texts.jsonl", "w", encoding="utf-8") as fh:
            for rec in records:
                for desc in rec.descriptions:
                    key = mapping.text_key(desc)
                    if key not in seen:
                        seen.add(key)
                        fh.write(json.dumps({"id": key, "text": desc}, separators=(",", ":")) + "\n")
        print(f"wrote embedding requests to {texts_dir}")
        return 0

    desc_vectors = None
    code_index = None
    if strategy in (mapping.MapStrategy.EXACT_THEN_EMBEDDING, mapping.MapStrategy.EMBEDDING_ONLY):
        needs = any(
            mapping.map_exact(d, matcher) is None
            for rec in records
            for d in rec.descriptions
        ) or strategy is mapping.MapStrategy.EMBEDDING_ONLY
        if needs or res.get("desc_vectors"):
            if not (res.get("desc_vectors") and res.get("code_vectors")):
                raise ClinibenchError(
                    f"strategy {strategy.value} needs --desc-vectors and --code-vectors "
                    "(run `map --emit-texts` and embed the texts first)"
                )
            desc_vectors, _ = retrieval.read_vectors(res.get("desc_vectors"))
            code_index = retrieval.load_dense_index(res.get("code_vectors"))

    if desc_vectors is None and strategy is mapping.MapStrategy.EXACT_THEN_EMBEDDING:
        # every description resolved exactly; embedding fallback never consulted
        strategy_used = mapping.MapStrategy.EXACT_THEN_LEXICAL
    else:
        strategy_used = strategy
    predictions = [
        mapping.map_all(rec, strategy_used, matcher, desc_vectors, code_index) for rec in records
    ]
    out_path = outdir / "mapped.jsonl"
    mapping.write_predictions(out_path, predictions)
    manifest = ManifestWriter("map", outdir, {"strategy": strategy.value})
    manifest.add_input(res.get("generations"))
    manifest.add_input(res.get("codes"))
    manifest.add_output(out_path)
    manifest.write()
    return 0


def cmd_tune_thresholds(res: _Resolver) -> int:
    outdir = Path(res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    table, notes, split = _split_and_notes(res)
    by_id = _notes_by_id(notes)
    matrix = thresholds.ScoreMatrix.read(res.get("scores"))
    val_labels = {i: by_id[i].labels for i in split.val_ids if i in by_id}
    classes = sorted(split.label_registry & set(matrix.class_ids)) or None
    vector = thresholds.tune(
        matrix, val_labels, classes=classes, epsilon=float(res.get("epsilon", thresholds.DEFAULT_EPSILON))
    )
    out_path = outdir / "thresholds.json"
    out_path.write_text(vector.to_json() + "\n")
    manifest = ManifestWriter("tune-thresholds", outdir, {"epsilon": vector.epsilon})
    manifest.add_input(res.get("scores"))
    manifest.add_output(out_path)
    manifest.write()
    return 0


def cmd_score(res: _Resolver) -> int:
    from . import report  # matplotlib import stays off the fast path

    outdir = Path(res.get("out") or res.get("report_dir"))
    outdir.mkdir(parents=True, exist_ok=True)
    table, notes, split = _split_and_notes(res)
    by_id = _notes_by_id(notes)
    query_split = res.get("queries", "test")
    query_ids = split.ids_for(query_split)
    gold = {i: list(by_id[i].labels) for i in query_ids}
    bucket_edges = tuple(
        int(x) for x in str(res.get("length_buckets", "")).split(",") if x
    )
    cfg = metrics.EvalConfig(
        n=int(res.get("n", 20)),
        tertiles=split.tertiles,
        length_buckets=bucket_edges,
        registry=split.label_registry,
    )
    token_counts = {i: corpus.whitespace_tokens(by_id[i].note.full_text) for i in query_ids}
    manifest = ManifestWriter("score", outdir, {"n": cfg.n, "queries": query_split})
    manifest.add_input(res.get("notes"))

    def finish(rep: metrics.MetricReport, name: str) -> Path:
        if bucket_edges:
            rep.per_bucket = metrics.length_breakdown(preds, gold, token_counts, cfg)
        path = outdir / name
        path.write_text(rep.to_json() + "\n")
        manifest.add_output(path)
        return path

    rows = []
    if res.get("scores"):
        matrix = thresholds.ScoreMatrix.read(res.get("scores"))
        keep = [i for i, ex in enumerate(matrix.example_ids) if ex in set(query_ids)]
        matrix = thresholds.ScoreMatrix(
            [matrix.example_ids[i] for i in keep],
            matrix.class_ids,
            matrix.scores[keep],
        )
        thr_path = res.get("thresholds")
        blank = thresholds.ThresholdVector(
            per_class={c: float("inf") for c in matrix.class_ids}
        )
        applied = thresholds.apply(matrix, blank)
        preds = applied.ranked  # untuned: plain top-n ranking
        rep = metrics.score(preds, gold, cfg)
        rows.append(report.report_row(rep.to_dict(), setting=f"top{cfg.n}"))
        finish(rep, "report.json")
        if thr_path:
            vector = thresholds.ThresholdVector.from_json(Path(thr_path).read_text())
            applied = thresholds.apply(matrix, vector)
            preds = applied.thresholded
            rep_tuned = metrics.score(preds, gold, cfg)
            rows.append(report.report_row(rep_tuned.to_dict(), setting="tuned"))
            finish(rep_tuned, "report_tuned.json")
        manifest.add_input(res.get("scores"))
    else:
        preds = _read_any_predictions(res.get("predictions"))
        rep = metrics.score(preds, gold, cfg)
        if res.get("generations") and res.get("mapped"):
            records = client.read_records(res.get("generations"))
            mapped = mapping.read_predictions(res.get("mapped"))
            diag = metrics.generation_diagnostics(records, mapped, gold)
            rep.diagnostics = diag
            rep.valid_json_rate = diag["valid_json_rate"]
            rep.avg_pred_codes = diag["avg_pred_codes"]
        rows.append(report.report_row(rep.to_dict()))
        finish(rep, "report.json")
        manifest.add_input(res.get("predictions"))
    csv_path = outdir / "report.csv"
    report.write_csv(csv_path, rows)
    manifest.add_output(csv_path)
    manifest.write()
    print((outdir / "report.json").read_text().strip())
    return 0


def cmd_report(res: _Resolver) -> int:
    from . import report

    outdir = Path(res.get("report_dir") or res.get("out"))
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [p for p in str(res.get("reports")).split(",") if p]
    labels = [x for x in str(res.get("labels", "")).split(",") if x]
    reports = [report.load_report(p) for p in paths]
    rows = []
    for i, (path, rep) in enumerate(zip(paths, reports)):
        label = labels[i] if i < len(labels) else Path(path).parent.name
        rows.append(report.report_row(rep, model=label))
    if res.get("mean") and len(rows) > 1:
        rows.append(report.mean_row(rows))
    csv_path = outdir / "summary.csv"
    report.write_csv(csv_path, rows)
    figures = report.render_figures(rows, reports, outdir)
    manifest = ManifestWriter("report", outdir, {"reports": paths})
    for path in paths:
        manifest.add_input(path)
    manifest.add_output(csv_path)
    for fig in figures:
        manifest.add_output(fig)
    manifest.write()
    print(f"wrote {csv_path} and {len(figures)} figures")
    return 0


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clinibench",
        description="Benchmark pipeline for discharge-diagnosis prediction from admission notes.",
    )
    parser.add_argument("--version", action="version", version=f"clinibench {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("--config", help="TOML config file (flags take precedence)")
        p.add_argument("--jobs", type=int, help="worker pool size (default: logical cores)")
        return p

    p = add("synth", cmd_synth, "generate a synthetic corpus (notes.jsonl + codes.csv)")
    p.add_argument("--notes", dest="notes_count", type=int)
    p.add_argument("--codes", dest="codes_count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--icd-version", dest="icd_version", type=int, choices=(9, 10))
    p.add_argument("--module", choices=("hosp", "icu"))
    p.add_argument("--out", required=True)

    p = add("build-dataset", cmd_build_dataset, "validate and canonicalize a notes file")
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--out", required=True)

    p = add("split", cmd_split, "stratified train/val/test split")
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--ratios")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("stats", cmd_stats, "corpus statistics")
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)

    p = add("index", cmd_index, "build a retrieval index over the training split")
    p.add_argument("--kind", choices=("bm25", "dense"))
    p.add_argument("--notes")
    p.add_argument("--codes")
    p.add_argument("--split")
    p.add_argument("--vectors")
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--out", required=True)

    p = add("retrieve", cmd_retrieve, "retrieve similar training notes per query")
    p.add_argument("--method", choices=("bm25", "dense", "gold", "random"))
    p.add_argument("--index")
    p.add_argument("--vectors")
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--queries", choices=("train", "val", "test"))
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--use-full-codes", dest="use_full_codes", action="store_const", const=True)
    p.add_argument("--out", required=True)

    p = add("vote", cmd_vote, "majority-voting baseline from retrieved neighbors")
    p.add_argument("--retrieval", required=True)
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--top-n", dest="top_n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--out", required=True)

    p = add("prompt", cmd_prompt, "assemble prompts for a query split")
    p.add_argument("--mode", choices=[m.value for m in PromptMode])
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--retrieval")
    p.add_argument("--shots", type=int)
    p.add_argument("--templates")
    p.add_argument("--queries", choices=("train", "val", "test"))
    p.add_argument("--out", required=True)

    p = add("compile-schema", cmd_compile_schema, "compile the output schema for a vocabulary")
    p.add_argument("--mode", choices=[m.value for m in SchemaMode])
    p.add_argument("--vocab", required=True)
    p.add_argument("--out")

    p = add("generate", cmd_generate, "guided generation against a step endpoint")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--prompts", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--mode", choices=[m.value for m in SchemaMode])
    p.add_argument("--automaton")
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--out", required=True)

    p = add("replay", cmd_replay, "parse pre-generated raw outputs")
    p.add_argument("--raw", required=True)
    p.add_argument("--mode", choices=[m.value for m in SchemaMode])
    p.add_argument("--out", required=True)

    p = add("map", cmd_map, "map generated descriptions to ICD classes")
    p.add_argument("--generations", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--strategy", choices=[s.value for s in mapping.MapStrategy])
    p.add_argument("--desc-vectors", dest="desc_vectors")
    p.add_argument("--code-vectors", dest="code_vectors")
    p.add_argument("--emit-texts", dest="emit_texts")
    p.add_argument("--out")

    p = add("tune-thresholds", cmd_tune_thresholds, "per-class F1-optimal thresholds")
    p.add_argument("--scores", required=True)
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", required=True)

    p = add("score", cmd_score, "compute the metric report")
    p.add_argument("--predictions")
    p.add_argument("--scores")
    p.add_argument("--thresholds")
    p.add_argument("--generations")
    p.add_argument("--mapped")
    p.add_argument("--notes", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--queries", choices=("train", "val", "test"))
    p.add_argument("--n", type=int)
    p.add_argument("--length-buckets", dest="length_buckets")
    p.add_argument("--out")
    p.add_argument("--report-dir", dest="report_dir")

    p = add("report", cmd_report, "aggregate reports into a CSV table and figures")
    p.add_argument("--reports", required=True)
    p.add_argument("--labels")
    p.add_argument("--mean", action="store_const", const=True,
                   help="append an unweighted-mean row (e.g. over ICD-9/ICD-10 splits)")
    p.add_argument("--report-dir", dest="report_dir")
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    res = _Resolver(args)
    try:
        return args.handler(res)
    except ClinibenchError as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(json.dumps({"error": "FileNotFound", "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
