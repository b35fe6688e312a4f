"""Trusted-document corpus: citation manifest, cached fetching, text extraction.

The corpus is built from the train split's citation URLs. Links in a years-old
dataset die, so ingestion tolerates per-URL failures and reports them instead
of aborting; the on-disk cache makes re-runs network-free. Documents are kept
whole (one retrievable unit per cited page), never chunked.
"""
from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from typing import Protocol
from urllib.parse import urlsplit, urlunsplit

from .dataset import Dataset, Split
from .utils import TransportError, atomic_write_bytes, atomic_write_text, sha256_hex, stable_json, utc_now_iso

DOC_ID_HEX_CHARS = 16
FETCHABLE_SCHEMES = ("http", "https")

MEDIA_HTML = "text/html"
MEDIA_TEXT = "text/plain"


class CorpusError(Exception):
    """Base for corpus construction failures."""


class FetchError(CorpusError):
    """A URL could not be turned into usable raw content."""


class HttpStatusError(FetchError):
    def __init__(self, url: str, status: int):
        super().__init__(f"{url}: HTTP status {status}")
        self.status = status


class UnsupportedMediaTypeError(FetchError):
    def __init__(self, url: str, media_type: str):
        super().__init__(f"{url}: unsupported media type {media_type!r}")
        self.media_type = media_type


class PdfRejectedError(UnsupportedMediaTypeError):
    """PDFs are rejected outright rather than parsed."""


class OfflineError(FetchError):
    """Raised by the offline fetcher when a URL is not already cached."""


class EmptyBodyError(CorpusError):
    """Nothing readable was left after extraction."""


def canonical_url(url: str) -> str:
    """Canonical form: scheme lowercased, trailing slashes stripped, fragment removed."""
    parts = urlsplit(url.strip())
    if not parts.scheme or not parts.netloc:
        raise ValueError(f"not an absolute URL: {url!r}")
    return urlunsplit((parts.scheme.lower(), parts.netloc, parts.path.rstrip("/"), parts.query, ""))


def doc_id_for_url(url: str) -> str:
    return sha256_hex(canonical_url(url))[:DOC_ID_HEX_CHARS]


@dataclass(frozen=True)
class ManifestEntry:
    url: str
    sample_ids: tuple[str, ...]


@dataclass(frozen=True)
class RejectedCitation:
    sample_id: str
    url: str
    reason: str


@dataclass(frozen=True)
class CorpusManifest:
    """Deduplicated canonical citation URLs with the samples citing each."""

    entries: tuple[ManifestEntry, ...]
    created_at: str
    rejects: tuple[RejectedCitation, ...] = ()

    def urls(self) -> list[str]:
        return [e.url for e in self.entries]


def build_manifest(train: Dataset) -> CorpusManifest:
    """Aggregate the train split's citations into one entry per canonical URL.

    Citation URLs that cannot be canonicalized or are not fetchable over HTTP(S)
    are collected as rejects; the build only fails when every citation rejects.
    """
    if len(train) == 0:
        raise CorpusError("train split is empty")
    by_url: dict[str, list[str]] = {}
    rejects: list[RejectedCitation] = []
    for sample in train:
        if sample.split != Split.TRAIN:
            raise CorpusError(f"sample {sample.id} is not in the train split")
        try:
            canon = canonical_url(sample.citation_url)
            if urlsplit(canon).scheme not in FETCHABLE_SCHEMES:
                raise ValueError(f"scheme not fetchable: {canon}")
        except ValueError as exc:
            rejects.append(RejectedCitation(sample.id, sample.citation_url, str(exc)))
            continue
        by_url.setdefault(canon, []).append(sample.id)
    if not by_url:
        raise CorpusError(f"all {len(rejects)} citations were rejected")
    entries = tuple(
        ManifestEntry(url=url, sample_ids=tuple(ids)) for url, ids in sorted(by_url.items())
    )
    return CorpusManifest(entries=entries, created_at=utc_now_iso(), rejects=tuple(rejects))


def manifest_digest(manifest: CorpusManifest) -> str:
    return sha256_hex(stable_json([[e.url, list(e.sample_ids)] for e in manifest.entries]))


def save_manifest(manifest: CorpusManifest, path: str | Path) -> Path:
    path = Path(path)
    payload = {
        "created_at": manifest.created_at,
        "entries": [{"url": e.url, "sample_ids": list(e.sample_ids)} for e in manifest.entries],
        "rejects": [
            {"sample_id": r.sample_id, "url": r.url, "reason": r.reason} for r in manifest.rejects
        ],
    }
    atomic_write_text(path, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    return path


def load_manifest(path: str | Path) -> CorpusManifest:
    payload = json.loads(Path(path).read_text("utf-8"))
    return CorpusManifest(
        entries=tuple(
            ManifestEntry(url=e["url"], sample_ids=tuple(e["sample_ids"])) for e in payload["entries"]
        ),
        created_at=payload["created_at"],
        rejects=tuple(
            RejectedCitation(r["sample_id"], r["url"], r["reason"]) for r in payload.get("rejects", [])
        ),
    )


@dataclass(frozen=True)
class Document:
    """One extracted corpus article."""

    doc_id: str
    source_url: str
    title: str
    body: str
    fetched_at: str
    content_hash: str

    def __post_init__(self):
        if not self.body.strip():
            raise EmptyBodyError(f"document {self.doc_id} has an empty body")


@dataclass(frozen=True)
class Corpus:
    """Immutable document store, ordered by doc_id."""

    documents: tuple[Document, ...]
    manifest_hash: str

    def __post_init__(self):
        ids = [d.doc_id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise CorpusError("duplicate doc_ids in corpus")
        if ids != sorted(ids):
            raise CorpusError("corpus documents must be sorted by doc_id")

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def by_id(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise KeyError(doc_id)


def corpus_digest(corpus: Corpus) -> str:
    return sha256_hex(stable_json([[d.doc_id, d.content_hash] for d in corpus.documents]))


@dataclass(frozen=True)
class FetchResult:
    body: bytes
    media_type: str


class Fetcher(Protocol):
    def fetch(self, url: str) -> FetchResult: ...


class HttpFetcher:
    """requests-backed fetcher with timeout, retries, and per-host politeness."""

    def __init__(
        self,
        timeout: float = 20.0,
        retries: int = 3,
        politeness_delay: float = 0.0,
        session=None,
        sleep=time.sleep,
        clock=time.monotonic,
    ):
        import requests

        self.timeout = timeout
        self.retries = retries
        self.politeness_delay = politeness_delay
        self.session = session or requests.Session()
        self.calls = 0
        self._sleep = sleep
        self._clock = clock
        self._lock = threading.Lock()
        self._next_slot_per_host: dict[str, float] = {}

    def _be_polite(self, host: str) -> None:
        if self.politeness_delay <= 0:
            return
        with self._lock:
            now = self._clock()
            slot = max(now, self._next_slot_per_host.get(host, now))
            self._next_slot_per_host[host] = slot + self.politeness_delay
            wait = slot - now
        if wait > 0:
            self._sleep(wait)

    def fetch(self, url: str) -> FetchResult:
        import requests

        from .utils import retry_transport

        self._be_polite(urlsplit(url).netloc)

        def attempt() -> FetchResult:
            self.calls += 1
            try:
                resp = self.session.get(
                    url, timeout=self.timeout, headers={"User-Agent": "curated-rag/0.1"}
                )
            except requests.RequestException as exc:
                raise TransportError(f"{url}: {exc}") from exc
            if resp.status_code >= 500:
                raise TransportError(f"{url}: HTTP status {resp.status_code}")
            if not 200 <= resp.status_code < 300:
                raise HttpStatusError(url, resp.status_code)
            media_type = (resp.headers.get("Content-Type") or MEDIA_HTML).split(";")[0].strip().lower()
            return FetchResult(body=resp.content, media_type=media_type)

        return retry_transport(attempt, attempts=self.retries, sleep=self._sleep)


class OfflineFetcher:
    """Refuses all network access; cache misses become OfflineError."""

    calls = 0

    def fetch(self, url: str) -> FetchResult:
        raise OfflineError(f"offline mode: {url} is not in the cache")


def validate_media_type(url: str, media_type: str) -> str:
    media = media_type.split(";")[0].strip().lower()
    if media == "application/pdf":
        raise PdfRejectedError(url, media)
    if media == MEDIA_HTML or media.startswith("text/"):
        return media
    raise UnsupportedMediaTypeError(url, media)


def _cache_paths(cache_dir: Path, doc_id: str) -> tuple[Path, Path]:
    return cache_dir / f"{doc_id}.txt", cache_dir / f"{doc_id}.meta.json"


def fetch_document(url: str, fetcher: Fetcher, cache_dir: str | Path) -> tuple[FetchResult, dict]:
    """Fetch one URL's raw content, serving and populating the disk cache.

    Returns the raw payload plus its cache metadata. A warm cache entry is
    returned without touching the fetcher at all.
    """
    canon = canonical_url(url)
    doc_id = doc_id_for_url(canon)
    cache_dir = Path(cache_dir)
    body_path, meta_path = _cache_paths(cache_dir, doc_id)

    if body_path.exists() and meta_path.exists():
        meta = json.loads(meta_path.read_text("utf-8"))
        body = body_path.read_bytes()
        if sha256_hex(body) == meta.get("content_hash"):
            return FetchResult(body=body, media_type=meta["media_type"]), meta
        # Corrupt cache entry: fall through and re-fetch.

    result = fetcher.fetch(canon)
    media = validate_media_type(canon, result.media_type)
    meta = {
        "url": canon,
        "doc_id": doc_id,
        "fetched_at": utc_now_iso(),
        "media_type": media,
        "content_hash": sha256_hex(result.body),
    }
    cache_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(body_path, result.body)
    atomic_write_text(meta_path, json.dumps(meta, ensure_ascii=False, indent=2) + "\n")
    return FetchResult(body=result.body, media_type=media), meta


_SKIP_TAGS = {"script", "style", "nav"}
_BLOCK_TAGS = {
    "p", "div", "br", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6",
    "tr", "table", "section", "article", "blockquote", "pre", "header", "footer",
}


class _HtmlTextExtractor(HTMLParser):
    """Collects visible text, skipping script/style/nav subtrees entirely."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.title_parts: list[str] = []
        self.paragraphs: list[list[str]] = [[]]
        self._skip_depth = 0
        self._in_title = False

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
        elif tag == "title":
            self._in_title = True
        elif tag in _BLOCK_TAGS:
            self._break_paragraph()

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS and self._skip_depth > 0:
            self._skip_depth -= 1
        elif tag == "title":
            self._in_title = False
        elif tag in _BLOCK_TAGS:
            self._break_paragraph()

    def handle_data(self, data):
        if self._skip_depth:
            return
        if self._in_title:
            self.title_parts.append(data)
        else:
            self.paragraphs[-1].append(data)

    def _break_paragraph(self):
        if self.paragraphs[-1]:
            self.paragraphs.append([])


def _collapse_ws(text: str) -> str:
    return " ".join(text.split())


def extract_text(raw: FetchResult, url: str, fetched_at: str | None = None) -> Document:
    """Turn raw HTML or plain text into a whitespace-normalized Document.

    HTML loses all markup plus script/style/nav content; the title element, when
    present, becomes the document title. Paragraphs stay separated by blank
    lines; within a paragraph runs of whitespace collapse to single spaces.
    """
    media = validate_media_type(url, raw.media_type)
    text = raw.body.decode("utf-8", errors="replace")
    title = ""
    if media == MEDIA_HTML:
        extractor = _HtmlTextExtractor()
        extractor.feed(text)
        extractor.close()
        title = _collapse_ws("".join(extractor.title_parts))
        paragraphs = ["".join(parts) for parts in extractor.paragraphs]
    else:
        paragraphs = text.split("\n\n")
    cleaned = [_collapse_ws(p) for p in paragraphs]
    body = "\n\n".join(p for p in cleaned if p)
    if not body:
        raise EmptyBodyError(f"{url}: no text content after extraction")
    canon = canonical_url(url)
    return Document(
        doc_id=doc_id_for_url(canon),
        source_url=canon,
        title=title,
        body=body,
        fetched_at=fetched_at or utc_now_iso(),
        content_hash=sha256_hex(body),
    )


@dataclass(frozen=True)
class IngestFailure:
    url: str
    kind: str
    detail: str


@dataclass(frozen=True)
class IngestionReport:
    succeeded: tuple[str, ...]  # doc_ids
    failures: tuple[IngestFailure, ...]

    def to_dict(self) -> dict:
        return {
            "succeeded": list(self.succeeded),
            "failures": [{"url": f.url, "kind": f.kind, "detail": f.detail} for f in self.failures],
            "success_count": len(self.succeeded),
            "failure_count": len(self.failures),
        }


def save_report(report: IngestionReport, path: str | Path) -> Path:
    path = Path(path)
    atomic_write_text(path, json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n")
    return path


_ERROR_KINDS: tuple[tuple[type, str], ...] = (
    (PdfRejectedError, "pdf_rejected"),
    (UnsupportedMediaTypeError, "unsupported_media_type"),
    (HttpStatusError, "http_status"),
    (OfflineError, "offline"),
    (TransportError, "transport"),
    (EmptyBodyError, "empty_body"),
)


def _error_kind(exc: Exception) -> str:
    for etype, kind in _ERROR_KINDS:
        if isinstance(exc, etype):
            return kind
    return "error"


def load_corpus(
    manifest: CorpusManifest,
    cache_dir: str | Path,
    fetcher: Fetcher,
    workers: int = 4,
) -> tuple[Corpus, IngestionReport]:
    """Materialize the manifest into a Corpus, recording per-URL failures.

    Every manifest entry ends up either as a document or as a failure in the
    report, so successes plus failures always equal the manifest size. Only a
    fully failed ingestion raises. With a warm cache this performs no fetches.
    """
    if not manifest.entries:
        raise CorpusError("manifest has no entries")

    def ingest_one(url: str) -> Document:
        raw, meta = fetch_document(url, fetcher, cache_dir)
        return extract_text(raw, url, fetched_at=meta["fetched_at"])

    documents: list[Document] = []
    failures: list[IngestFailure] = []
    lock = threading.Lock()

    def task(url: str) -> None:
        try:
            doc = ingest_one(url)
        except (CorpusError, TransportError, ValueError) as exc:
            with lock:
                failures.append(IngestFailure(url=url, kind=_error_kind(exc), detail=str(exc)))
        else:
            with lock:
                documents.append(doc)

    urls = manifest.urls()
    if workers <= 1:
        for url in urls:
            task(url)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(task, urls))

    if not documents:
        raise CorpusError(f"ingestion failed for all {len(failures)} manifest entries")
    documents.sort(key=lambda d: d.doc_id)
    corpus = Corpus(documents=tuple(documents), manifest_hash=manifest_digest(manifest))
    report = IngestionReport(
        succeeded=tuple(d.doc_id for d in documents),
        failures=tuple(sorted(failures, key=lambda f: f.url)),
    )
    return corpus, report


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    path = Path(path)
    payload = {
        "manifest_hash": corpus.manifest_hash,
        "documents": [
            {
                "doc_id": d.doc_id,
                "source_url": d.source_url,
                "title": d.title,
                "body": d.body,
                "fetched_at": d.fetched_at,
                "content_hash": d.content_hash,
            }
            for d in corpus.documents
        ],
    }
    atomic_write_text(path, json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    return path


def load_corpus_file(path: str | Path) -> Corpus:
    payload = json.loads(Path(path).read_text("utf-8"))
    return Corpus(
        documents=tuple(Document(**d) for d in payload["documents"]),
        manifest_hash=payload["manifest_hash"],
    )


def corpus_from_cache(cache_dir: str | Path) -> Corpus:
    """Rebuild a corpus purely from cached raw pages (no manifest, no network)."""
    cache_dir = Path(cache_dir)
    metas = sorted(cache_dir.glob("*.meta.json"))
    if not metas:
        raise CorpusError(f"no cached documents under {cache_dir}")
    documents = []
    urls = []
    for meta_path in metas:
        meta = json.loads(meta_path.read_text("utf-8"))
        body_path = cache_dir / f"{meta['doc_id']}.txt"
        raw = FetchResult(body=body_path.read_bytes(), media_type=meta["media_type"])
        try:
            documents.append(extract_text(raw, meta["url"], fetched_at=meta["fetched_at"]))
        except EmptyBodyError:
            continue
        urls.append(meta["url"])
    if not documents:
        raise CorpusError(f"no extractable documents under {cache_dir}")
    documents.sort(key=lambda d: d.doc_id)
    return Corpus(documents=tuple(documents), manifest_hash=sha256_hex(stable_json(sorted(urls))))
