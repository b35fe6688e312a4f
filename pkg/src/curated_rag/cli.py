"""Command-line surface for the whole pipeline.

Offline mode (`--offline`) forbids network access: backends and search must be
mocks or fixtures, and ingestion serves the cache only.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import bench as bench_mod
from . import corpus as corpus_mod
from . import dataset as dataset_mod
from . import embed_index as index_mod
from . import generation as gen_mod
from . import judge as judge_mod
from . import mocks, report as report_mod
from .backends import ChatBackendDescriptor, RemoteChatBackend

DEFAULT_REMOTE_CHAT_ENDPOINTS = {
    "openai": "https://api.openai.com/v1/chat/completions",
}
DEFAULT_REMOTE_EMBED_MODEL = "BAAI/bge-large-en-v1.5"
DEFAULT_REMOTE_EMBED_DIM = 1024

CONFIG_KEYS = (
    "backend",
    "judge_backend",
    "embedder",
    "dim",
    "normalize",
    "shots",
    "context_char_budget",
    "workers",
    "cache",
    "search_fixture",
    "temperature",
    "top_p",
    "max_output_tokens",
)


class CliError(RuntimeError):
    pass


def _load_config_file(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text.decode("utf-8"))


def _apply_config(args: argparse.Namespace) -> None:
    if not args.config:
        return
    config = _load_config_file(args.config)
    for key, value in config.items():
        if key not in CONFIG_KEYS:
            raise CliError(f"unknown config key {key!r} (allowed: {', '.join(CONFIG_KEYS)})")
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _dataset_format(path: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "csv" if path.endswith(".csv") else "jsonl"


def resolve_chat_backend(name: str, offline: bool, seed: int, temperature: float | None = None,
                         top_p: float | None = None, max_output_tokens: int | None = None,
                         for_judge: bool = False, native_retrieval: bool = False):
    if name in ("mock", "mock-chat"):
        return mocks.offline_chat_backend(seed, uses_native_retrieval=native_retrieval)
    if name == "mock-judge":
        return mocks.offline_judge_backend(seed)
    if ":" not in name:
        raise CliError(
            f"unknown backend {name!r}; use mock, mock-judge, or <provider>:<model_id>"
        )
    if offline:
        raise CliError(f"backend {name!r} needs the network, but --offline was given")
    provider, model_id = name.split(":", 1)
    endpoint = os.getenv(f"{provider.upper().replace('-', '_')}_CHAT_URL") or DEFAULT_REMOTE_CHAT_ENDPOINTS.get(provider)
    if not endpoint:
        raise CliError(f"no chat endpoint known for provider {provider!r}; set {provider.upper()}_CHAT_URL")
    descriptor = ChatBackendDescriptor(
        provider="remote",
        model_id=model_id,
        temperature=0.0 if for_judge else (0.7 if temperature is None else temperature),
        top_p=1.0 if top_p is None else top_p,
        max_output_tokens=512 if max_output_tokens is None else max_output_tokens,
        uses_native_retrieval=native_retrieval,
    )
    extra = {"retrieval": True} if native_retrieval else None
    return RemoteChatBackend(provider, descriptor, endpoint, extra_body=extra)


def resolve_embedder(name: str, dim: int, normalize: bool, seed: int, offline: bool):
    if name == "mock":
        return index_mod.MockEmbedder(dim=dim, seed=seed, normalize=normalize)
    if name == "remote" or name.startswith("remote:"):
        if offline:
            raise CliError("remote embedder needs the network, but --offline was given")
        model_id = name.split(":", 1)[1] if ":" in name else DEFAULT_REMOTE_EMBED_MODEL
        endpoint = os.getenv("EMBEDDER_URL")
        if not endpoint:
            raise CliError("set EMBEDDER_URL to use a remote embedder")
        descriptor = index_mod.EmbedderDescriptor(
            provider="remote", model_id=model_id, dim=dim, normalize=normalize
        )
        return index_mod.RemoteEmbedder(descriptor, endpoint, api_key=os.getenv("EMBEDDER_API_KEY"))
    raise CliError(f"unknown embedder {name!r}; use mock, remote, or remote:<model_id>")


def _default_cache(args) -> str:
    cache = getattr(args, "cache", None) or os.getenv("CURATED_RAG_CACHE")
    if not cache:
        raise CliError("no cache directory: pass --cache or set CURATED_RAG_CACHE")
    return cache


def cmd_stats(args) -> int:
    ds = dataset_mod.load_dataset(args.dataset, _dataset_format(args.dataset, args.format))
    stats = dataset_mod.dataset_stats(ds, args.tokenizer)
    print(json.dumps(stats.to_dict(), ensure_ascii=False, indent=2))
    return 0


def cmd_classify(args) -> int:
    ds = dataset_mod.load_dataset(args.dataset, _dataset_format(args.dataset, args.format))
    backend = resolve_chat_backend(args.backend, args.offline, args.seed)
    updated = []
    classified = 0
    for sample in ds:
        if sample.category is None and (args.limit is None or classified < args.limit):
            category = dataset_mod.classify_category(sample.question, backend)
            sample = replace(sample, category=category)
            classified += 1
        updated.append(sample)
    out = args.out or (args.dataset + ".classified.jsonl")
    dataset_mod.save_dataset(dataset_mod.Dataset(samples=tuple(updated)), out)
    counts: dict[str, int] = {}
    for s in updated:
        if s.category:
            counts[s.category.value] = counts.get(s.category.value, 0) + 1
    print(json.dumps({"classified": classified, "out": out, "counts": counts}, indent=2))
    return 0


def cmd_ingest(args) -> int:
    cache = _default_cache(args)
    train = dataset_mod.load_dataset(
        args.train, _dataset_format(args.train, args.format), default_split=dataset_mod.Split.TRAIN
    )
    manifest = corpus_mod.build_manifest(train)
    fetcher = corpus_mod.OfflineFetcher() if args.offline else corpus_mod.HttpFetcher(
        politeness_delay=args.politeness
    )
    corpus, ingest_report = corpus_mod.load_corpus(manifest, cache, fetcher, workers=args.workers or 4)
    corpus_mod.save_manifest(manifest, Path(cache) / "manifest.json")
    corpus_mod.save_report(ingest_report, Path(cache) / "ingestion_report.json")
    print(
        json.dumps(
            {
                "manifest_entries": len(manifest.entries),
                "rejected_citations": len(manifest.rejects),
                "documents": len(corpus),
                "failures": len(ingest_report.failures),
                "cache": cache,
            },
            indent=2,
        )
    )
    return 0


def cmd_index_build(args) -> int:
    corpus = corpus_mod.corpus_from_cache(args.corpus)
    embedder = resolve_embedder(args.embedder, args.dim, args.normalize, args.seed, args.offline)
    index = index_mod.build_index(corpus, embedder)
    vec_path, json_path = index_mod.save_index(index, args.out)
    print(json.dumps({"documents": len(index), "dim": index.dim, "vec": str(vec_path), "header": str(json_path)}, indent=2))
    return 0


def cmd_index_search(args) -> int:
    index = index_mod.load_index(args.index)
    embedder = index_mod.embedder_from_descriptor(
        index.embedder, endpoint=os.getenv("EMBEDDER_URL"), api_key=os.getenv("EMBEDDER_API_KEY")
    )
    query_vec = index_mod.embed_text(args.query, embedder)
    hits = index_mod.search(index, query_vec, args.k)
    for hit in hits:
        print(json.dumps({"rank": hit.rank, "doc_id": hit.doc_id, "score": hit.score}))
    return 0


def _pipeline_deps(args, backend, mode: gen_mod.Mode) -> gen_mod.PipelineDeps:
    deps = gen_mod.PipelineDeps(chat_backend=backend)
    if getattr(args, "train", None):
        deps.train = dataset_mod.load_dataset(
            args.train, _dataset_format(args.train, None), default_split=dataset_mod.Split.TRAIN
        )
    if mode == gen_mod.Mode.LEGAL_RAG:
        if not getattr(args, "index", None):
            raise CliError("legal_rag mode needs --index")
        deps.index = index_mod.load_index(args.index)
        deps.corpus = corpus_mod.corpus_from_cache(_default_cache(args))
        deps.embedder = index_mod.embedder_from_descriptor(
            deps.index.embedder, endpoint=os.getenv("EMBEDDER_URL"), api_key=os.getenv("EMBEDDER_API_KEY")
        )
    elif mode == gen_mod.Mode.INTERNET_RAG:
        if getattr(args, "search_fixture", None):
            deps.search_client = gen_mod.FixtureSearchClient(args.search_fixture)
        elif args.offline:
            deps.search_client = mocks.SyntheticSearchClient(seed=args.seed)
        else:
            endpoint = os.getenv("SEARCH_URL")
            if not endpoint:
                raise CliError("internet_rag needs --search-fixture, --offline, or SEARCH_URL")
            deps.search_client = gen_mod.JsonHttpSearchClient(endpoint, api_key=os.getenv("SEARCH_API_KEY"))
        deps.fetcher = mocks.SyntheticWebFetcher(seed=args.seed) if args.offline else corpus_mod.HttpFetcher()
    return deps


def cmd_ask(args) -> int:
    mode = gen_mod.Mode(args.mode)
    backend = resolve_chat_backend(
        args.backend, args.offline, args.seed, args.temperature, args.top_p,
        args.max_output_tokens, native_retrieval=mode == gen_mod.Mode.BACKEND_NATIVE,
    )
    deps = _pipeline_deps(args, backend, mode)
    shots = args.shots if args.shots is not None else (gen_mod.DEFAULT_SHOTS if deps.train else 0)
    config = gen_mod.PipelineConfig(
        mode=mode,
        backend=backend.descriptor,
        shots=shots,
        context_char_budget=args.context_char_budget or gen_mod.DEFAULT_CONTEXT_CHAR_BUDGET,
        seed=args.seed,
    )
    result = gen_mod.answer_question(args.question, config, deps)
    print(json.dumps(result.to_dict(), ensure_ascii=False, indent=2))
    return 0


def cmd_bench_run(args) -> int:
    mode = gen_mod.Mode(args.mode)
    backend = resolve_chat_backend(
        args.backend, args.offline, args.seed, args.temperature, args.top_p,
        args.max_output_tokens, native_retrieval=mode == gen_mod.Mode.BACKEND_NATIVE,
    )
    judge_backend = resolve_chat_backend(args.judge_backend, args.offline, args.seed, for_judge=True)
    eval_set = dataset_mod.load_dataset(args.eval, _dataset_format(args.eval, None))
    deps = _pipeline_deps(args, backend, mode)
    shots = args.shots if args.shots is not None else (gen_mod.DEFAULT_SHOTS if deps.train else 0)
    pipeline = gen_mod.PipelineConfig(
        mode=mode,
        backend=backend.descriptor,
        shots=shots,
        context_char_budget=args.context_char_budget or gen_mod.DEFAULT_CONTEXT_CHAR_BUDGET,
        seed=args.seed,
    )
    judge_cfg = judge_mod.JudgeConfig(backend=judge_backend.descriptor)
    run = bench_mod.run_benchmark(
        eval_set, pipeline, judge_cfg, deps, judge_backend, args.out,
        workers=args.workers or 4, limit=args.limit,
    )
    metrics = bench_mod.per_category_rates(run, eval_set)
    paths = report_mod.emit_report(metrics, run, {"json"}, args.out)
    print(
        json.dumps(
            {
                "run_id": run.run_id,
                "records": len(run.records),
                "judged": metrics.judged_count,
                "unjudgeable": metrics.unjudgeable_count,
                "pipeline_errors": metrics.pipeline_error_count,
                "overall_disagreement": metrics.overall_disagreement,
                "report": str(paths["json"]),
            },
            indent=2,
        )
    )
    return 0


def cmd_bench_report(args) -> int:
    run = bench_mod.load_run(args.run)
    eval_set = dataset_mod.load_dataset(args.eval, _dataset_format(args.eval, None))
    metrics = bench_mod.per_category_rates(run, eval_set)
    formats = {("svg_chart" if f == "svg" else f) for f in args.formats.split(",") if f}
    paths = report_mod.emit_report(metrics, run, formats, args.out or args.run)
    print(json.dumps({fmt: str(p) for fmt, p in paths.items()}, indent=2))
    return 0


def cmd_judge(args) -> int:
    question = Path(args.question_file).read_text("utf-8")
    backend = resolve_chat_backend(args.backend, args.offline, args.seed, for_judge=True)
    config = judge_mod.JudgeConfig(backend=backend.descriptor)
    outcome = judge_mod.judge_factuality(question, args.gold, args.candidate, config, backend)
    print(json.dumps(bench_mod.outcome_to_dict(outcome), ensure_ascii=False, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curated-rag", description=__doc__)
    parser.add_argument("--offline", action="store_true", help="forbid all network access")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", help="TOML or JSON config file with default options")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="token-length statistics of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--tokenizer", default="whitespace")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("classify", help="assign area-of-law categories")
    p.add_argument("--dataset", required=True)
    p.add_argument("--backend", default=None)
    p.add_argument("--out")
    p.add_argument("--limit", type=int)
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("ingest", help="build the trusted corpus cache from train citations")
    p.add_argument("--train", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--politeness", type=float, default=0.5, help="per-host delay in seconds")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.set_defaults(func=cmd_ingest)

    p_index = sub.add_parser("index", help="embedding index operations")
    sub_index = p_index.add_subparsers(dest="index_command", required=True)
    p = sub_index.add_parser("build")
    p.add_argument("--corpus", required=True, help="corpus cache directory")
    p.add_argument("--out", required=True, help="index base path (writes .vec and .json)")
    p.add_argument("--embedder", default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--normalize", action="store_true", default=None)
    p.set_defaults(func=cmd_index_build)
    p = sub_index.add_parser("search")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("-k", type=int, default=1)
    p.set_defaults(func=cmd_index_search)

    def add_pipeline_args(p):
        p.add_argument("--mode", required=True, choices=[m.value for m in gen_mod.Mode])
        p.add_argument("--backend", default=None)
        p.add_argument("--train")
        p.add_argument("--index")
        p.add_argument("--cache", default=None)
        p.add_argument("--search-fixture", dest="search_fixture", default=None)
        p.add_argument("--shots", type=int, default=None)
        p.add_argument("--context-char-budget", dest="context_char_budget", type=int, default=None)
        p.add_argument("--temperature", type=float, default=None)
        p.add_argument("--top-p", dest="top_p", type=float, default=None)
        p.add_argument("--max-output-tokens", dest="max_output_tokens", type=int, default=None)

    p = sub.add_parser("ask", help="answer one question")
    p.add_argument("--question", required=True)
    add_pipeline_args(p)
    p.set_defaults(func=cmd_ask)

    p_bench = sub.add_parser("bench", help="benchmark runs and reports")
    sub_bench = p_bench.add_subparsers(dest="bench_command", required=True)
    p = sub_bench.add_parser("run")
    p.add_argument("--eval", required=True)
    p.add_argument("--judge-backend", dest="judge_backend", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--limit", type=int)
    add_pipeline_args(p)
    p.set_defaults(func=cmd_bench_run)
    p = sub_bench.add_parser("report")
    p.add_argument("--run", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--format", dest="formats", default="json,csv,svg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_report)

    p = sub.add_parser("judge", help="judge one candidate answer against a gold answer")
    p.add_argument("--question-file", dest="question_file", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--backend", default=None)
    p.set_defaults(func=cmd_judge)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        if getattr(args, "backend", "") is None:
            args.backend = "mock"
        if getattr(args, "judge_backend", "") is None:
            args.judge_backend = "mock-judge"
        if getattr(args, "embedder", "") is None:
            args.embedder = "mock"
        if getattr(args, "dim", "") is None:
            args.dim = 64 if args.embedder == "mock" else DEFAULT_REMOTE_EMBED_DIM
        if getattr(args, "normalize", "") is None:
            args.normalize = False
        return args.func(args)
    except (
        CliError,
        dataset_mod.DatasetError,
        corpus_mod.CorpusError,
        index_mod.EmbeddingError,
        gen_mod.GenerationError,
        judge_mod.JudgeError,
        bench_mod.BenchError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
