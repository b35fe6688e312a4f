from __future__ import annotations

import json
from pathlib import Path

import pytest

from curated_rag.corpus import (
    Corpus,
    Document,
    FetchResult,
    MEDIA_HTML,
    MEDIA_TEXT,
    canonical_url,
    doc_id_for_url,
)
from curated_rag.dataset import Dataset, Split, load_dataset
from curated_rag.utils import sha256_hex, utc_now_iso

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_meta() -> dict:
    return json.loads((FIXTURES / "meta.json").read_text("utf-8"))


@pytest.fixture(scope="session")
def eval_dataset() -> Dataset:
    return load_dataset(FIXTURES / "legalqa_eval.jsonl")


@pytest.fixture(scope="session")
def train_dataset() -> Dataset:
    return load_dataset(FIXTURES / "legalqa_train.jsonl", default_split=Split.TRAIN)


class MockFetcher:
    """Maps url -> FetchResult or Exception; counts transport calls."""

    def __init__(self, mapping: dict):
        self.mapping = dict(mapping)
        self.calls = 0

    def fetch(self, url: str) -> FetchResult:
        self.calls += 1
        try:
            outcome = self.mapping[url]
        except KeyError:
            raise AssertionError(f"MockFetcher has no entry for {url}") from None
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


@pytest.fixture
def mock_fetcher_cls():
    return MockFetcher


def html_page(body_text: str, title: str = "Page") -> FetchResult:
    html = f"<html><head><title>{title}</title></head><body><p>{body_text}</p></body></html>"
    return FetchResult(body=html.encode("utf-8"), media_type=MEDIA_HTML)


def text_page(text: str) -> FetchResult:
    return FetchResult(body=text.encode("utf-8"), media_type=MEDIA_TEXT)


def make_document(url: str, body: str, title: str = "") -> Document:
    canon = canonical_url(url)
    return Document(
        doc_id=doc_id_for_url(canon),
        source_url=canon,
        title=title,
        body=body,
        fetched_at=utc_now_iso(),
        content_hash=sha256_hex(body),
    )


def make_corpus(docs: dict[str, str]) -> Corpus:
    """docs: url -> body text."""
    documents = sorted((make_document(u, b) for u, b in docs.items()), key=lambda d: d.doc_id)
    return Corpus(documents=tuple(documents), manifest_hash="test-manifest")
