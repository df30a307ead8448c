"""Patent technological signatures, approximate-nearest-neighbor similarity,
and temporal patent-quality indicators."""

__version__ = "0.1.0"

from .embedding import (
    DocumentVector,
    SkipGramEmbedder,
    TfidfModel,
    TfidfWeighter,
    WordEmbedding,
    embed_document,
    fit_tfidf,
    train_sgns,
    vectorize_corpus,
)
from .errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    CorpusError,
    FormatError,
    PatsigError,
    SimilarityUndefinedError,
    TruncatedError,
    VersionError,
)
from .evaluation import (
    EvalMetrics,
    MlpClassifier,
    PairSample,
    WelchResult,
    classification_metrics,
    evaluate_classifier,
    placebo_shift,
    relational_report,
    sample_condition_pairs,
    welch_t_test,
)
from .forest import (
    NeighborList,
    RandomProjectionForest,
    brute_force_knn,
    build_forest,
    load_index,
    save_index,
)
from .indicators import (
    CountryFlowMatrix,
    PatentIndicators,
    TemporalWindow,
    aggregate_time_series,
    compute_country_flows,
    compute_indicators,
)
from .records import FilterPolicy, IpcCode, PatentRecord, filter_corpus, parse_patents
from .similarity import SimilarityGraph, build_similarity_graph, cosine, semantic_search
from .text import (
    BigramTable,
    Vocabulary,
    apply_bigrams,
    build_vocabulary,
    detect_bigrams,
    tokenize,
)
from .vectorstore import VectorStore

__all__ = [name for name in dir() if not name.startswith("_")]
