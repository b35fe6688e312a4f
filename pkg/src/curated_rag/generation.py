"""Prompt assembly and the four answer pipelines.

Modes:
  direct:         few-shot prompt, no retrieval.
  legal_rag:      top-1 curated-corpus document injected as context.
  internet_rag:   model-written search query, first fetchable result injected.
  backend_native: question forwarded to a backend that retrieves on its own.

Few-shot pairs always come from the train split; a prompt is assembled in the
fixed order preamble, shots, context, question.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

from .backends import ChatBackend, ChatBackendDescriptor
from .corpus import (
    CorpusError,
    Corpus,
    Document,
    FetchResult,
    Fetcher,
    extract_text,
    validate_media_type,
)
from .dataset import Dataset, QASample, Split
from .embed_index import Embedder, EmbeddingIndex, embed_text, search
from .prompts import load_template
from .utils import TranscriptWriter, TransportError

DEFAULT_CONTEXT_CHAR_BUDGET = 6000
DEFAULT_SHOTS = 3
MAX_QUERY_CHARS = 200
INTERNET_RESULTS_TO_TRY = 3


class GenerationError(Exception):
    pass


class EmptyCompletionError(GenerationError):
    pass


class EmptyQueryError(GenerationError):
    pass


class PromptTooLargeError(GenerationError):
    pass


class NoSearchResultsError(GenerationError):
    pass


class SearchExhaustedError(GenerationError):
    def __init__(self, query: str, failures: list[tuple[str, str]]):
        detail = "; ".join(f"{url}: {err}" for url, err in failures)
        super().__init__(f"all {len(failures)} search results failed for {query!r}: {detail}")
        self.failures = failures


class InvalidPipelineConfigError(GenerationError):
    pass


class FewshotHygieneError(GenerationError):
    """A few-shot example came from outside the train split."""


class Mode(str, Enum):
    DIRECT = "direct"
    LEGAL_RAG = "legal_rag"
    INTERNET_RAG = "internet_rag"
    BACKEND_NATIVE = "backend_native"


@dataclass(frozen=True)
class PromptContext:
    doc_id: str
    text: str
    truncated: bool


@dataclass(frozen=True)
class Prompt:
    system_preamble: str
    fewshot: tuple[tuple[str, str], ...]
    context: PromptContext | None
    question: str


def truncate_at_word(text: str, limit: int) -> tuple[str, bool]:
    """Cut text to at most limit chars, at the last whitespace before the cut."""
    if len(text) <= limit:
        return text, False
    head = text[:limit]
    cut = max(head.rfind(" "), head.rfind("\n"), head.rfind("\t"))
    if cut > 0:
        head = head[:cut]
    return head.rstrip(), True


def assemble_prompt(
    question: str,
    fewshot: list[tuple[str, str]] | tuple[tuple[str, str], ...] = (),
    context: tuple[str, str] | None = None,
    budget: int = DEFAULT_CONTEXT_CHAR_BUDGET,
    preamble: str | None = None,
) -> Prompt:
    """Build a Prompt; context beyond the budget is cut at a word boundary."""
    if not question.strip():
        raise GenerationError("question is empty")
    for q, a in fewshot:
        if not q.strip() or not a.strip():
            raise GenerationError("few-shot pair has an empty member")
    prompt_context = None
    if context is not None:
        doc_id, text = context
        text, truncated = truncate_at_word(text, budget)
        prompt_context = PromptContext(doc_id=doc_id, text=text, truncated=truncated)
    if preamble is None:
        preamble = load_template("answer_system").text.strip()
    return Prompt(
        system_preamble=preamble,
        fewshot=tuple((q, a) for q, a in fewshot),
        context=prompt_context,
        question=question,
    )


def prompt_messages(prompt: Prompt) -> list[dict]:
    """Serialize in the fixed order: preamble, few-shot pairs, context, question."""
    messages: list[dict] = [{"role": "system", "content": prompt.system_preamble}]
    for q, a in prompt.fewshot:
        messages.append({"role": "user", "content": q})
        messages.append({"role": "assistant", "content": a})
    final = ""
    if prompt.context is not None:
        final += f"Reference article [{prompt.context.doc_id}]:\n{prompt.context.text}\n\n"
    final += prompt.question
    messages.append({"role": "user", "content": final})
    return messages


def render_prompt(prompt: Prompt) -> str:
    return "\n".join(f"[{m['role'].upper()}] {m['content']}" for m in prompt_messages(prompt))


def generate_answer(
    prompt: Prompt,
    backend: ChatBackend,
    transcripts: TranscriptWriter | None = None,
    name: str = "adhoc",
) -> str:
    """Run one completion, enforcing the backend input limit and auditing it.

    If the serialized prompt exceeds the backend's input limit, the context is
    truncated further (and re-flagged); a prompt that cannot fit even without
    context is an error.
    """
    limit = backend.descriptor.max_input_chars
    rendered = render_prompt(prompt)
    if len(rendered) > limit:
        if prompt.context is None:
            raise PromptTooLargeError(f"prompt of {len(rendered)} chars exceeds backend limit {limit}")
        overflow = len(rendered) - limit
        new_budget = len(prompt.context.text) - overflow
        if new_budget <= 0:
            raise PromptTooLargeError(f"prompt exceeds backend limit {limit} even without context")
        text, _ = truncate_at_word(prompt.context.text, new_budget)
        prompt = replace(prompt, context=replace(prompt.context, text=text, truncated=True))
        rendered = render_prompt(prompt)
        if len(rendered) > limit:
            raise PromptTooLargeError(f"prompt still exceeds backend limit {limit} after truncation")

    messages = prompt_messages(prompt)
    answer = backend.complete(messages).strip()
    if transcripts is not None:
        transcripts.write(
            "transcripts",
            name,
            {
                "kind": "answer",
                "messages": messages,
                "response": answer,
                "model_id": backend.descriptor.model_id,
                "temperature": backend.descriptor.temperature,
                "top_p": backend.descriptor.top_p,
                "template_sha256": load_template("answer_system").sha256,
            },
        )
    if not answer:
        raise EmptyCompletionError("backend returned an empty completion")
    return answer


def generate_search_query(
    question: str,
    backend: ChatBackend,
    transcripts: TranscriptWriter | None = None,
    name: str = "adhoc-query",
) -> str:
    """Ask the backend to compress a question into one search-engine query."""
    if not question.strip():
        raise GenerationError("question is empty")
    template = load_template("search_query")
    messages = [{"role": "user", "content": template.render(question=question)}]
    raw = backend.complete(messages)
    if transcripts is not None:
        transcripts.write(
            "transcripts",
            name,
            {
                "kind": "search_query",
                "messages": messages,
                "response": raw,
                "model_id": backend.descriptor.model_id,
                "template_sha256": template.sha256,
            },
        )
    query = " ".join(raw.replace('"', " ").replace("'", " ").split())
    if not query:
        raise EmptyQueryError("backend produced an empty search query")
    query, _ = truncate_at_word(query, MAX_QUERY_CHARS)
    return query


@dataclass(frozen=True)
class SearchResultItem:
    url: str
    title: str = ""
    snippet: str = ""


class SearchClient(Protocol):
    def search(self, query: str) -> list[SearchResultItem]: ...


class FixtureSearchClient:
    """Serves ranked results from a JSON map of query -> results.

    Unknown queries return no results, or the fallback's results when one is
    configured.
    """

    def __init__(
        self,
        mapping: dict | str | Path,
        fallback: Callable[[str], list[SearchResultItem]] | None = None,
    ):
        if not isinstance(mapping, dict):
            mapping = json.loads(Path(mapping).read_text("utf-8"))
        self.mapping = {
            query: [
                SearchResultItem(url=r["url"], title=r.get("title", ""), snippet=r.get("snippet", ""))
                for r in results
            ]
            for query, results in mapping.items()
        }
        self.fallback = fallback
        self.calls = 0

    def search(self, query: str) -> list[SearchResultItem]:
        self.calls += 1
        if query in self.mapping:
            return list(self.mapping[query])
        if self.fallback is not None:
            return self.fallback(query)
        return []


class JsonHttpSearchClient:
    """Thin live-search adapter: POST {"q": query}, expect ranked {url,title,snippet}."""

    def __init__(self, endpoint: str, api_key: str | None = None, session=None, timeout: float = 30.0):
        import requests

        self.endpoint = endpoint
        self.api_key = api_key
        self.session = session or requests.Session()
        self.timeout = timeout

    def search(self, query: str) -> list[SearchResultItem]:
        import requests

        from .utils import retry_transport

        def attempt():
            headers = {"Content-Type": "application/json"}
            if self.api_key:
                headers["Authorization"] = f"Bearer {self.api_key}"
            try:
                resp = self.session.post(
                    self.endpoint, json={"q": query}, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise TransportError(f"search: {exc}") from exc
            if resp.status_code >= 500:
                raise TransportError(f"search: HTTP status {resp.status_code}")
            resp.raise_for_status()
            return resp.json()

        payload = retry_transport(attempt)
        results = payload.get("results", payload) if isinstance(payload, dict) else payload
        return [
            SearchResultItem(url=r["url"], title=r.get("title", ""), snippet=r.get("snippet", ""))
            for r in results
        ]


@dataclass(frozen=True)
class InternetArticle:
    document: Document
    rank: int  # 1-based rank of the search result that yielded the article
    query: str


def internet_retrieve(
    query: str,
    search_client: SearchClient,
    fetcher: Fetcher,
    top_n: int = INTERNET_RESULTS_TO_TRY,
) -> InternetArticle:
    """Fetch search results in rank order until one yields extractable text.

    Dead links are expected; the first usable article of the top results wins
    and its rank is recorded. Exhausting them all raises with every failure.
    """
    results = search_client.search(query)
    if not results:
        raise NoSearchResultsError(f"no search results for {query!r}")
    failures: list[tuple[str, str]] = []
    for rank, result in enumerate(results[:top_n], start=1):
        try:
            raw = fetcher.fetch(result.url)
            media = validate_media_type(result.url, raw.media_type)
            doc = extract_text(FetchResult(raw.body, media), result.url)
        except (CorpusError, TransportError, ValueError) as exc:
            failures.append((result.url, str(exc)))
            continue
        return InternetArticle(document=doc, rank=rank, query=query)
    raise SearchExhaustedError(query, failures)


@dataclass(frozen=True)
class PipelineConfig:
    mode: Mode
    backend: ChatBackendDescriptor
    shots: int = DEFAULT_SHOTS
    shot_sample_ids: tuple[str, ...] = ()
    context_char_budget: int = DEFAULT_CONTEXT_CHAR_BUDGET
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "backend": self.backend.to_dict(),
            "shots": self.shots,
            "shot_sample_ids": list(self.shot_sample_ids),
            "context_char_budget": self.context_char_budget,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            mode=Mode(d["mode"]),
            backend=ChatBackendDescriptor.from_dict(d["backend"]),
            shots=d["shots"],
            shot_sample_ids=tuple(d["shot_sample_ids"]),
            context_char_budget=d["context_char_budget"],
            seed=d["seed"],
        )


@dataclass(frozen=True)
class PipelineResult:
    sample_id: str
    answer_text: str
    backend_model_id: str
    latency_ms: int = 0
    retrieved_doc_id: str | None = None
    retrieval_score: float | None = None
    search_query: str | None = None
    search_result_rank: int | None = None

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "answer_text": self.answer_text,
            "backend_model_id": self.backend_model_id,
            "latency_ms": self.latency_ms,
            "retrieved_doc_id": self.retrieved_doc_id,
            "retrieval_score": self.retrieval_score,
            "search_query": self.search_query,
            "search_result_rank": self.search_result_rank,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineResult":
        return cls(**d)


@dataclass
class PipelineDeps:
    """Everything a pipeline may need; modes validate their own subset."""

    chat_backend: ChatBackend
    train: Dataset | None = None
    embedder: Embedder | None = None
    index: EmbeddingIndex | None = None
    corpus: Corpus | None = None
    search_client: SearchClient | None = None
    fetcher: Fetcher | None = None
    eval_ids: frozenset[str] = field(default_factory=frozenset)
    clock: Callable[[], float] = time.perf_counter
    transcripts: TranscriptWriter | None = None


def check_mode_prerequisites(config: PipelineConfig, deps: PipelineDeps) -> None:
    missing = []
    if config.mode == Mode.LEGAL_RAG:
        if deps.index is None:
            missing.append("index")
        if deps.corpus is None:
            missing.append("corpus")
        if deps.embedder is None:
            missing.append("embedder")
    elif config.mode == Mode.INTERNET_RAG:
        if deps.search_client is None:
            missing.append("search_client")
        if deps.fetcher is None:
            missing.append("fetcher")
    elif config.mode == Mode.BACKEND_NATIVE:
        if not config.backend.uses_native_retrieval:
            raise InvalidPipelineConfigError("backend_native mode needs a backend with native retrieval")
    if missing:
        raise InvalidPipelineConfigError(f"mode {config.mode.value} missing deps: {', '.join(missing)}")
    if config.shots > 0 and deps.train is None:
        raise InvalidPipelineConfigError("few-shot prompts need a train split in deps")


def select_fewshot(config: PipelineConfig, deps: PipelineDeps) -> list[tuple[str, str]]:
    """Resolve the configured shot ids against the train split.

    Every shot must be a train-split sample and never an eval-set id; with no
    ids configured, the first ``shots`` train samples are used (fixed, not
    resampled per question).
    """
    if config.shots == 0:
        return []
    assert deps.train is not None
    ids = list(config.shot_sample_ids) or deps.train.ids()[: config.shots]
    if len(ids) != config.shots:
        raise InvalidPipelineConfigError(
            f"need {config.shots} few-shot ids, have {len(ids)} (train too small or bad config)"
        )
    pairs = []
    for sample_id in ids:
        if sample_id in deps.eval_ids:
            raise FewshotHygieneError(f"few-shot sample {sample_id} is in the eval set")
        try:
            shot = deps.train.by_id(sample_id)
        except KeyError:
            raise InvalidPipelineConfigError(f"few-shot id {sample_id!r} not in train split") from None
        if shot.split != Split.TRAIN:
            raise FewshotHygieneError(f"few-shot sample {sample_id} is not a train-split sample")
        pairs.append((shot.question, shot.expert_answer))
    return pairs


def run_pipeline(sample: QASample, config: PipelineConfig, deps: PipelineDeps) -> PipelineResult:
    """Answer one sample under the configured mode."""
    if sample.id in set(config.shot_sample_ids):
        raise FewshotHygieneError(f"sample {sample.id} appears in its own few-shot list")
    return answer_question(sample.question, config, deps, sample_id=sample.id)


def answer_question(
    question: str, config: PipelineConfig, deps: PipelineDeps, sample_id: str = "adhoc"
) -> PipelineResult:
    """Mode-dispatching core: retrieve (or not), assemble the prompt, generate."""
    check_mode_prerequisites(config, deps)
    started = deps.clock()
    shots = select_fewshot(config, deps)

    context: tuple[str, str] | None = None
    retrieved_doc_id = None
    retrieval_score = None
    search_query = None
    search_result_rank = None

    if config.mode == Mode.LEGAL_RAG:
        qvec = embed_text(question, deps.embedder)
        top = search(deps.index, qvec, k=1)[0]
        doc = deps.corpus.by_id(top.doc_id)
        context = (doc.doc_id, doc.body)
        retrieved_doc_id, retrieval_score = top.doc_id, top.score
    elif config.mode == Mode.INTERNET_RAG:
        search_query = generate_search_query(
            question, deps.chat_backend, deps.transcripts, name=f"{sample_id}.query"
        )
        article = internet_retrieve(search_query, deps.search_client, deps.fetcher)
        context = (article.document.doc_id, article.document.body)
        retrieved_doc_id = article.document.doc_id
        search_result_rank = article.rank

    prompt = assemble_prompt(question, shots, context, budget=config.context_char_budget)
    answer = generate_answer(prompt, deps.chat_backend, deps.transcripts, name=f"{sample_id}.answer")
    latency_ms = int((deps.clock() - started) * 1000)
    return PipelineResult(
        sample_id=sample_id,
        answer_text=answer,
        backend_model_id=deps.chat_backend.descriptor.model_id,
        latency_ms=latency_ms,
        retrieved_doc_id=retrieved_doc_id,
        retrieval_score=retrieval_score,
        search_query=search_query,
        search_result_rank=search_result_rank,
    )
