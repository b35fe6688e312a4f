"""Curated-corpus legal question answering: retrieval, generation, judging, benchmarking."""

__version__ = "0.1.0"

from .backends import ChatBackendDescriptor, MockChatBackend, RemoteChatBackend
from .bench import BenchmarkRun, MetricsReport, disagreement_rate, per_category_rates, run_benchmark
from .corpus import Corpus, CorpusManifest, Document, build_manifest, extract_text, load_corpus
from .dataset import (
    Category,
    Dataset,
    QASample,
    Split,
    classify_category,
    dataset_stats,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .embed_index import (
    EmbedderDescriptor,
    EmbeddingIndex,
    MockEmbedder,
    SearchHit,
    build_index,
    dot,
    embed_text,
    load_index,
    save_index,
    search,
)
from .generation import (
    Mode,
    PipelineConfig,
    PipelineDeps,
    PipelineResult,
    assemble_prompt,
    generate_answer,
    generate_search_query,
    internet_retrieve,
    run_pipeline,
)
from .judge import JudgeConfig, JudgeLabel, Unjudgeable, Verdict, judge_factuality, parse_verdict
from .report import emit_report

__all__ = [
    "__version__",
    "BenchmarkRun",
    "Category",
    "ChatBackendDescriptor",
    "Corpus",
    "CorpusManifest",
    "Dataset",
    "Document",
    "EmbedderDescriptor",
    "EmbeddingIndex",
    "JudgeConfig",
    "JudgeLabel",
    "MetricsReport",
    "MockChatBackend",
    "MockEmbedder",
    "Mode",
    "PipelineConfig",
    "PipelineDeps",
    "PipelineResult",
    "QASample",
    "RemoteChatBackend",
    "SearchHit",
    "Split",
    "Unjudgeable",
    "Verdict",
    "assemble_prompt",
    "build_index",
    "build_manifest",
    "classify_category",
    "dataset_stats",
    "disagreement_rate",
    "dot",
    "embed_text",
    "emit_report",
    "extract_text",
    "generate_answer",
    "generate_search_query",
    "internet_retrieve",
    "judge_factuality",
    "load_corpus",
    "load_dataset",
    "load_index",
    "parse_verdict",
    "per_category_rates",
    "run_benchmark",
    "run_pipeline",
    "save_dataset",
    "save_index",
    "search",
    "split_dataset",
]
