"""Command-line pipeline: ingest -> train -> vectorize -> index -> query /
edges -> indicators / flows, plus the two evaluation suites.

Every subcommand validates its input artifacts before doing work, writes
outputs atomically, and emits the fully resolved configuration (with input
checksums) alongside its outputs. Failures print one machine-parseable
line on stderr: "error<TAB>kind<TAB>message".
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

from . import __version__
from ._io import atomic_write
from .cache import CorpusCache, load_corpus_cache, save_corpus_cache
from .config import FORMAT_VERSIONS, PipelineConfig, emit_resolved_config, resolve_config
from .embedding import (
    SkipGramEmbedder,
    TfidfModel,
    WordEmbedding,
    fit_tfidf,
    vectorize_corpus,
)
from .errors import ConfigError, CorpusError, FormatError, PatsigError
from .evaluation import (
    CONDITIONS,
    MlpClassifier,
    evaluate_classifier,
    placebo_shift,
    relational_report,
    sample_condition_pairs,
    save_relational_tsv,
    split_holdout,
)
from .forest import RandomProjectionForest, build_forest
from .indicators import (
    TemporalWindow,
    aggregate_time_series,
    compute_country_flows,
    compute_indicators,
    save_indicators_tsv,
    save_time_series_tsv,
)
from .records import FilterPolicy, filter_corpus, iter_jsonl, parse_patents
from .similarity import SimilarityGraph, build_similarity_graph, semantic_search
from .text import (
    BigramTable,
    Vocabulary,
    apply_bigrams,
    build_vocabulary,
    detect_bigrams,
    tokenize,
)
from .vectorstore import VectorStore

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_INPUT = 4
EXIT_FORMAT = 5
EXIT_DATA = 6
EXIT_FAILURE = 7

MODEL_VOCAB = "vocab.tsv"
MODEL_BIGRAMS = "bigrams.tsv"
MODEL_EMBEDDING = "embedding.psv"
MODEL_TFIDF = "tfidf.tsv"
MODEL_META = "meta.json"


def _fail(kind: str, code: int, message: str) -> int:
    sys.stderr.write(f"error\t{kind}\t{message}\n")
    return code


def _index_crc(path) -> int:
    with open(path, "rb") as handle:
        handle.seek(-4, 2)
        return struct.unpack("<I", handle.read(4))[0]


def _load_models(models_dir) -> tuple[Vocabulary, BigramTable, WordEmbedding, TfidfModel, dict]:
    models_dir = Path(models_dir)
    meta_path = models_dir / MODEL_META
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path}: model metadata not found")
    with open(meta_path, "r", encoding="utf-8") as handle:
        meta = json.load(handle)
    vocab = Vocabulary.load_tsv(models_dir / MODEL_VOCAB)
    bigrams = BigramTable.load_tsv(
        models_dir / MODEL_BIGRAMS, threshold=meta.get("bigram_threshold", 500)
    )
    embedding = WordEmbedding.load(
        models_dir / MODEL_EMBEDDING, vocab, params=meta.get("sgns_params")
    )
    tfidf = TfidfModel.load_tsv(models_dir / MODEL_TFIDF, vocab, meta["doc_count"])
    return vocab, bigrams, embedding, tfidf, meta


def _encode_cache(cache: CorpusCache, bigrams: BigramTable, vocab: Vocabulary):
    for record in cache.records:
        merged = apply_bigrams(cache.tokens[record.id], bigrams)
        yield record.id, vocab.encode(merged)


# -- subcommands ---------------------------------------------------------------


def cmd_ingest(args, config: PipelineConfig) -> int:
    records = parse_patents(iter_jsonl(args.input))
    policy = FilterPolicy(
        year_min=config.year_min,
        year_max=config.year_max,
        granted_only=config.granted_only,
        priority_only=config.priority_only,
    )
    kept = filter_corpus(records, policy)
    tokens = {r.id: tokenize(r.abstract) for r in kept}
    save_corpus_cache(kept, tokens, args.output)
    emit_resolved_config(
        config, str(args.output) + ".config.json", "ingest",
        inputs={"corpus": args.input}, outputs={"cache": args.output},
    )
    return EXIT_OK


def cmd_train(args, config: PipelineConfig) -> int:
    cache = load_corpus_cache(args.corpus)
    if not cache.records:
        raise CorpusError(f"{args.corpus}: corpus cache is empty")
    docs = [cache.tokens[r.id] for r in cache.records]
    bigrams = detect_bigrams(docs, config.bigram_threshold)
    merged = [apply_bigrams(doc, bigrams) for doc in docs]
    vocab = build_vocabulary(merged, config.min_count)
    encoded = [vocab.encode(doc) for doc in merged]
    embedder = SkipGramEmbedder(
        dim=config.dim,
        window=config.window,
        epochs=config.epochs,
        negatives=config.negatives,
        learning_rate=config.learning_rate,
        min_learning_rate=config.min_learning_rate,
        subsample=config.subsample,
        seed=config.seed,
    ).fit(encoded, vocab)
    tfidf = fit_tfidf(encoded, vocab)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save_tsv(out_dir / MODEL_VOCAB)
    bigrams.save_tsv(out_dir / MODEL_BIGRAMS)
    embedder.embedding_.save(out_dir / MODEL_EMBEDDING)
    tfidf.save_tsv(out_dir / MODEL_TFIDF)
    meta = {
        "doc_count": tfidf.doc_count,
        "idf_formula": tfidf.formula,
        "bigram_threshold": config.bigram_threshold,
        "min_count": config.min_count,
        "sgns_params": embedder.get_params(),
        "format_versions": FORMAT_VERSIONS,
    }
    with atomic_write(out_dir / MODEL_META, "w") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
        handle.write("\n")
    emit_resolved_config(
        config, out_dir / "train.config.json", "train",
        inputs={"cache": args.corpus},
        outputs={name: out_dir / name for name in
                 (MODEL_VOCAB, MODEL_BIGRAMS, MODEL_EMBEDDING, MODEL_TFIDF)},
    )
    return EXIT_OK


def cmd_vectorize(args, config: PipelineConfig) -> int:
    cache = load_corpus_cache(args.corpus)
    vocab, bigrams, embedding, tfidf, _ = _load_models(args.models)
    store = vectorize_corpus(_encode_cache(cache, bigrams, vocab), embedding, tfidf)
    store.save(args.output)
    emit_resolved_config(
        config, str(args.output) + ".config.json", "vectorize",
        inputs={"cache": args.corpus, "embedding": Path(args.models) / MODEL_EMBEDDING},
        outputs={"store": args.output},
    )
    return EXIT_OK


def cmd_index(args, config: PipelineConfig) -> int:
    store = VectorStore.load(args.store)
    forest = build_forest(
        store, n_trees=config.n_trees, leaf_capacity=config.leaf_capacity, seed=config.seed
    )
    forest.save(args.output)
    emit_resolved_config(
        config, str(args.output) + ".config.json", "index",
        inputs={"store": args.store}, outputs={"index": args.output},
    )
    return EXIT_OK


def cmd_query(args, config: PipelineConfig) -> int:
    forest = RandomProjectionForest.load(args.index)
    _, bigrams, embedding, tfidf, _ = _load_models(args.models)
    text = args.text if args.text is not None else sys.stdin.read()
    result = semantic_search(
        text, embedding, tfidf, forest,
        n_neighbors=args.n_neighbors if args.n_neighbors else config.n_neighbors,
        bigrams=bigrams,
        search_breadth=config.search_breadth,
    )
    lines = ["rank\tid\tscore"]
    lines += [f"{rank}\t{rid}\t{score:.6f}" for rank, (rid, score) in enumerate(result.neighbors, 1)]
    body = "\n".join(lines) + "\n"
    if args.output:
        with atomic_write(args.output, "w") as handle:
            handle.write(body)
    else:
        sys.stdout.write(body)
    if result.status != "ok":
        sys.stderr.write(f"note\tquery\t{result.status}\n")
    return EXIT_OK


def cmd_edges(args, config: PipelineConfig) -> int:
    forest = RandomProjectionForest.load(args.index)
    store = VectorStore.load(args.store)
    graph = build_similarity_graph(
        forest, store,
        n_neighbors=config.n_neighbors,
        threshold=config.threshold,
        search_breadth=config.search_breadth,
    )
    meta_path = str(args.output) + ".meta.json"
    graph.save_tsv(args.output, metadata_path=meta_path,
                   extra_metadata={"index_checksum": _index_crc(args.index)})
    emit_resolved_config(
        config, str(args.output) + ".config.json", "edges",
        inputs={"index": args.index, "store": args.store},
        outputs={"edges": args.output, "metadata": meta_path},
    )
    return EXIT_OK


def _load_graph_for(args, config: PipelineConfig) -> tuple[SimilarityGraph, CorpusCache]:
    cache = load_corpus_cache(args.corpus)
    graph = SimilarityGraph.load_tsv(
        args.edges,
        all_ids=[r.id for r in cache.records],
        n_neighbors=config.n_neighbors,
        threshold=config.threshold,
    )
    return graph, cache


def cmd_indicators(args, config: PipelineConfig) -> int:
    graph, cache = _load_graph_for(args, config)
    window = TemporalWindow(config.min_lag, config.max_lag)
    indicators = compute_indicators(graph, cache.years, window)
    save_indicators_tsv(indicators, args.output)
    outputs = {"indicators": args.output}
    if args.timeseries:
        series = aggregate_time_series(indicators, args.group_by, cache.shares)
        save_time_series_tsv(series, args.timeseries)
        outputs["timeseries"] = args.timeseries
    emit_resolved_config(
        config, str(args.output) + ".config.json", "indicators",
        inputs={"edges": args.edges, "cache": args.corpus}, outputs=outputs,
    )
    return EXIT_OK


def cmd_flows(args, config: PipelineConfig) -> int:
    graph, cache = _load_graph_for(args, config)
    window = TemporalWindow(config.min_lag, config.max_lag)
    period = None
    if args.period_start is not None or args.period_end is not None:
        if args.period_start is None or args.period_end is None:
            raise ConfigError("--period-start and --period-end must be given together")
        period = (args.period_start, args.period_end)
    flows = compute_country_flows(graph, cache.years, cache.shares, window, period)
    flows.save_tsv(args.output)
    outputs = {"flows": args.output}
    if args.node_summary:
        flows.save_node_strength_tsv(args.node_summary)
        outputs["node_summary"] = args.node_summary
    if flows.skipped_missing_shares:
        sys.stderr.write(
            f"note\tflows\t{flows.skipped_missing_shares} edge(s) skipped for missing country shares\n"
        )
    emit_resolved_config(
        config, str(args.output) + ".config.json", "flows",
        inputs={"edges": args.edges, "cache": args.corpus}, outputs=outputs,
    )
    return EXIT_OK


def cmd_eval_classify(args, config: PipelineConfig) -> int:
    store = VectorStore.load(args.store)
    cache = load_corpus_cache(args.corpus)
    labels_by_id = {r.id: r.first_subclass for r in cache.records}
    ids = [
        rid for rid in store.ids
        if labels_by_id.get(rid) is not None and not store.is_zero(rid)
    ]
    if len(ids) < 10:
        raise CorpusError("too few labelled, non-sentinel vectors to train a classifier")
    X = store.vectors[[store.index_of(r) for r in ids]]
    y = [labels_by_id[r] for r in ids]
    X_train, y_train, X_eval, y_eval = split_holdout(X, y, config.holdout, config.seed)
    if args.placebo:
        X_train, y_train = placebo_shift(X_train, y_train)
    clf = MlpClassifier(
        hidden_sizes=config.hidden_sizes,
        epochs=config.mlp_epochs,
        batch_size=config.batch_size,
        learning_rate=config.mlp_learning_rate,
        momentum=config.momentum,
        seed=config.seed,
    ).fit(X_train, y_train)
    metrics = evaluate_classifier(clf, X_eval, y_eval)
    metrics.save_tsv(args.output)
    emit_resolved_config(
        config, str(args.output) + ".config.json", "eval-classify",
        inputs={"store": args.store, "cache": args.corpus},
        outputs={"metrics": args.output},
    )
    return EXIT_OK


def cmd_eval_relational(args, config: PipelineConfig) -> int:
    store = VectorStore.load(args.store)
    cache = load_corpus_cache(args.corpus)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    for condition in conditions:
        if condition not in CONDITIONS:
            raise ConfigError(f"unknown condition {condition!r}; choose from {','.join(CONDITIONS)}")
    samples = [
        sample_condition_pairs(cache.records, store, condition,
                               config.pairs_per_condition, config.seed)
        for condition in conditions
    ]
    rows = relational_report(samples)
    save_relational_tsv(rows, args.output)
    for row in rows:
        if row.inverted:
            sys.stderr.write(
                f"note\teval-relational\tcondition {row.condition!r}: shared mean does not "
                f"exceed the random mean\n"
            )
    emit_resolved_config(
        config, str(args.output) + ".config.json", "eval-relational",
        inputs={"store": args.store, "cache": args.corpus},
        outputs={"report": args.output},
    )
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None, help="JSON config file merged under CLI flags")
    sub.add_argument("--seed", type=int, default=None, help="master RNG seed")
    sub.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                     help="sequential seeded mode (the default; recorded in emitted configs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patsig",
        description="Patent signature vectors, ANN similarity, and temporal indicators.",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"patsig {__version__} (formats: "
                + ", ".join(f"{k}=v{v}" for k, v in FORMAT_VERSIONS.items()) + ")",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("ingest", help="parse, filter, and tokenize a JSONL corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--year-min", dest="year_min", type=int, default=None)
    p.add_argument("--year-max", dest="year_max", type=int, default=None)
    p.add_argument("--granted-only", dest="granted_only",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--priority-only", dest="priority_only",
                   action=argparse.BooleanOptionalAction, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = commands.add_parser("train", help="learn word vectors, TF-IDF, vocabulary, bigrams")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dim", dest="dim", type=int, default=None)
    p.add_argument("--window", dest="window", type=int, default=None)
    p.add_argument("--epochs", dest="epochs", type=int, default=None)
    p.add_argument("--negatives", dest="negatives", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--min-learning-rate", dest="min_learning_rate", type=float, default=None)
    p.add_argument("--subsample", dest="subsample", type=float, default=None)
    p.add_argument("--min-count", dest="min_count", type=int, default=None)
    p.add_argument("--bigram-threshold", dest="bigram_threshold", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("vectorize", help="embed every cached document into a vector store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--output", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_vectorize)

    p = commands.add_parser("index", help="build the random-projection forest index")
    p.add_argument("--store", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--n-trees", dest="n_trees", type=int, default=None)
    p.add_argument("--leaf-capacity", dest="leaf_capacity", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_index)

    p = commands.add_parser("query", help="free-text semantic search over an index")
    p.add_argument("--index", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--text", default=None, help="query text (reads stdin when omitted)")
    p.add_argument("--n-neighbors", dest="n_neighbors", type=int, default=None)
    p.add_argument("--search-breadth", dest="search_breadth", type=int, default=None)
    p.add_argument("--output", default=None, help="write TSV here instead of stdout")
    _add_common(p)
    p.set_defaults(func=cmd_query)

    p = commands.add_parser("edges", help="build the thresholded similarity edge list")
    p.add_argument("--index", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--n-neighbors", dest="n_neighbors", type=int, default=None)
    p.add_argument("--threshold", dest="threshold", type=float, default=None)
    p.add_argument("--search-breadth", dest="search_breadth", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_edges)

    p = commands.add_parser("indicators", help="temporal similarity indicators per patent")
    p.add_argument("--edges", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--timeseries", default=None)
    p.add_argument("--group-by", dest="group_by", choices=["global", "country"], default="global")
    p.add_argument("--min-lag", dest="min_lag", type=float, default=None)
    p.add_argument("--max-lag", dest="max_lag", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_indicators)

    p = commands.add_parser("flows", help="country-to-country knowledge-flow matrix")
    p.add_argument("--edges", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--node-summary", dest="node_summary", default=None)
    p.add_argument("--min-lag", dest="min_lag", type=float, default=None)
    p.add_argument("--max-lag", dest="max_lag", type=float, default=None)
    p.add_argument("--period-start", dest="period_start", type=int, default=None)
    p.add_argument("--period-end", dest="period_end", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_flows)

    p = commands.add_parser("eval-classify", help="IPC-subclass classification of signatures")
    p.add_argument("--store", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--holdout", dest="holdout", type=float, default=None)
    p.add_argument("--placebo", action="store_true", help="train on the placebo-shifted pairing")
    p.add_argument("--mlp-epochs", dest="mlp_epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--mlp-learning-rate", dest="mlp_learning_rate", type=float, default=None)
    p.add_argument("--hidden-sizes", dest="hidden_sizes", default=None,
                   help="comma-separated hidden layer sizes, e.g. 512,256,128")
    _add_common(p)
    p.set_defaults(func=cmd_eval_classify)

    p = commands.add_parser("eval-relational", help="shared-attribute similarity comparisons")
    p.add_argument("--store", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--conditions", default=",".join(CONDITIONS))
    p.add_argument("--pairs-per-condition", dest="pairs_per_condition", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_eval_relational)

    return parser


def _overrides_from(args: argparse.Namespace) -> dict:
    skip = {"command", "func", "config", "input", "output", "corpus", "models", "store",
            "index", "edges", "out_dir", "text", "timeseries", "node_summary", "placebo",
            "group_by", "period_start", "period_end", "conditions"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(getattr(args, "config", None), overrides=_overrides_from(args))
        return args.func(args, config)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, str(exc))
    except FileNotFoundError as exc:
        return _fail("missing-input", EXIT_MISSING_INPUT, str(exc))
    except FormatError as exc:
        return _fail("format", EXIT_FORMAT, str(exc))
    except CorpusError as exc:
        return _fail("data", EXIT_DATA, str(exc))
    except PatsigError as exc:
        return _fail("runtime", EXIT_FAILURE, str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
