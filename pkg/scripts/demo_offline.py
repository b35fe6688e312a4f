#!/usr/bin/env python3
"""Full offline walkthrough at fixture scale.

Caches the train split's 762 cited documents with the synthetic web fetcher,
builds an embedding index, benchmarks all 323 eval samples in legal_rag mode
with mock backends, and emits the reports. Everything is deterministic; no
network access happens.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from curated_rag.backends import ChatBackendDescriptor
from curated_rag.bench import per_category_rates, run_benchmark
from curated_rag.corpus import build_manifest, load_corpus
from curated_rag.dataset import Split, load_dataset
from curated_rag.embed_index import MockEmbedder, build_index, save_index
from curated_rag.generation import Mode, PipelineConfig, PipelineDeps
from curated_rag.judge import JudgeConfig
from curated_rag.mocks import SyntheticWebFetcher, offline_chat_backend, offline_judge_backend
from curated_rag.report import emit_report

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="demo-run", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--limit", type=int, help="benchmark only the first N eval samples")
    args = parser.parse_args()

    workdir = Path(args.workdir)
    train = load_dataset(FIXTURES / "legalqa_train.jsonl", default_split=Split.TRAIN)
    eval_set = load_dataset(FIXTURES / "legalqa_eval.jsonl")
    print(f"train={len(train)} eval={len(eval_set)}")

    manifest = build_manifest(train)
    corpus, ingest_report = load_corpus(
        manifest, workdir / "cache", SyntheticWebFetcher(seed=args.seed), workers=8
    )
    print(f"corpus: {len(corpus)} documents, {len(ingest_report.failures)} failures")

    embedder = MockEmbedder(dim=args.dim, seed=args.seed)
    index = build_index(corpus, embedder)
    save_index(index, workdir / "legal-index")
    print(f"index: {len(index)} rows, dim {index.dim}")

    backend = offline_chat_backend(seed=args.seed)
    config = PipelineConfig(mode=Mode.LEGAL_RAG, backend=backend.descriptor, shots=3)
    judge_cfg = JudgeConfig(
        backend=ChatBackendDescriptor(provider="mock", model_id="mock-judge", temperature=0.0)
    )
    deps = PipelineDeps(
        chat_backend=backend, train=train, embedder=embedder, index=index, corpus=corpus
    )
    run = run_benchmark(
        eval_set, config, judge_cfg, deps, offline_judge_backend(seed=args.seed),
        workdir / "runs" / "demo", workers=8, limit=args.limit,
    )
    metrics = per_category_rates(run, eval_set)
    paths = emit_report(metrics, run, {"json", "csv", "svg_chart"}, workdir / "runs" / "demo")
    print(f"records={len(run.records)} judged={metrics.judged_count} "
          f"unjudgeable={metrics.unjudgeable_count} errors={metrics.pipeline_error_count}")
    print(f"overall disagreement: {metrics.overall_disagreement:.4f}")
    for fmt, path in sorted(paths.items()):
        print(f"  {fmt}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
