from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curated_rag.corpus import (
    CorpusError,
    EmptyBodyError,
    FetchResult,
    HttpStatusError,
    MEDIA_HTML,
    OfflineFetcher,
    PdfRejectedError,
    UnsupportedMediaTypeError,
    build_manifest,
    canonical_url,
    corpus_from_cache,
    doc_id_for_url,
    extract_text,
    fetch_document,
    load_corpus,
    load_corpus_file,
    load_manifest,
    manifest_digest,
    save_corpus,
    save_manifest,
)
from curated_rag.dataset import Dataset, QASample, Split

from .conftest import MockFetcher, html_page, text_page


def train_sample(i: int, url: str) -> QASample:
    return QASample(
        id=f"t{i:03d}",
        question=f"Question {i}?",
        expert_answer=f"Answer {i}.",
        citation_url=url,
        split=Split.TRAIN,
    )


class TestCanonicalUrl:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("https://example.org/a/", "https://example.org/a"),
            ("HTTPS://example.org/a", "https://example.org/a"),
            ("https://example.org/a#frag", "https://example.org/a"),
            ("https://example.org/a?q=1#frag", "https://example.org/a?q=1"),
            ("https://example.org/", "https://example.org"),
            ("https://example.org/a//", "https://example.org/a"),
        ],
    )
    def test_cases(self, raw, expected):
        assert canonical_url(raw) == expected

    def test_rejects_relative(self):
        with pytest.raises(ValueError):
            canonical_url("not-a-url")

    url_strategy = st.builds(
        lambda scheme, host, path, slash, frag, query: (
            scheme + "://" + host + "/" + path + ("/" if slash else "")
            + (("?" + query) if query else "") + (("#" + frag) if frag else "")
        ),
        scheme=st.sampled_from(["http", "https", "HTTP", "HtTpS"]),
        host=st.from_regex(r"[a-z][a-z0-9]{1,8}\.[a-z]{2,4}", fullmatch=True),
        path=st.from_regex(r"[a-zA-Z0-9_\-/]{0,20}", fullmatch=True),
        slash=st.booleans(),
        frag=st.from_regex(r"[a-zA-Z0-9]{0,6}", fullmatch=True),
        query=st.from_regex(r"[a-z]{0,5}", fullmatch=True),
    )

    @settings(max_examples=200)
    @given(url=url_strategy)
    def test_idempotence(self, url):
        once = canonical_url(url)
        assert canonical_url(once) == once

    def test_doc_id_deterministic(self):
        assert doc_id_for_url("https://example.org/a/") == doc_id_for_url("HTTPS://example.org/a#x")
        assert len(doc_id_for_url("https://example.org/a")) == 16


class TestBuildManifest:
    def test_dedup_and_aggregation(self):
        ds = Dataset(
            samples=(
                train_sample(0, "https://example.org/art"),
                train_sample(1, "https://example.org/art/"),
                train_sample(2, "https://example.org/art#top"),
            )
        )
        manifest = build_manifest(ds)
        assert len(manifest.entries) == 1
        assert manifest.entries[0].url == "https://example.org/art"
        assert manifest.entries[0].sample_ids == ("t000", "t001", "t002")

    def test_empty_train_split(self):
        with pytest.raises(CorpusError, match="empty"):
            build_manifest(Dataset(samples=()))

    def test_eval_sample_rejected(self):
        bad = QASample(
            id="e0", question="Q?", expert_answer="A.",
            citation_url="https://example.org/x", split=Split.EVAL,
        )
        with pytest.raises(CorpusError, match="not in the train split"):
            build_manifest(Dataset(samples=(bad,)))

    def test_unfetchable_scheme_collected_as_reject(self):
        ds = Dataset(
            samples=(
                train_sample(0, "ftp://files.example.org/doc"),
                train_sample(1, "https://example.org/ok"),
            )
        )
        manifest = build_manifest(ds)
        assert len(manifest.entries) == 1
        assert len(manifest.rejects) == 1
        assert manifest.rejects[0].sample_id == "t000"

    def test_all_rejected_is_fatal(self):
        ds = Dataset(samples=(train_sample(0, "ftp://files.example.org/doc"),))
        with pytest.raises(CorpusError, match="all 1 citations"):
            build_manifest(ds)

    def test_entries_sorted_by_url(self):
        ds = Dataset(
            samples=(
                train_sample(0, "https://z.example.org/a"),
                train_sample(1, "https://a.example.org/a"),
            )
        )
        urls = build_manifest(ds).urls()
        assert urls == sorted(urls)

    def test_bundled_train_fixture_bound(self, train_dataset, fixture_meta):
        manifest = build_manifest(train_dataset)
        assert len(manifest.entries) <= 850
        assert len(manifest.entries) == fixture_meta["train_distinct_citations"]
        assert len({e.url for e in manifest.entries}) == len(manifest.entries)

    def test_manifest_round_trip(self, tmp_path, train_dataset):
        manifest = build_manifest(train_dataset)
        path = save_manifest(manifest, tmp_path / "manifest.json")
        loaded = load_manifest(path)
        assert loaded.entries == manifest.entries
        assert manifest_digest(loaded) == manifest_digest(manifest)


class TestExtractText:
    def test_html_example(self):
        raw = FetchResult(
            body=b"<html><title>T</title><body><p>a</p><script>x</script></body></html>",
            media_type=MEDIA_HTML,
        )
        doc = extract_text(raw, "https://example.org/p")
        assert doc.title == "T"
        assert doc.body == "a"

    def test_plaintext_whitespace_normalization(self):
        doc = extract_text(text_page("hello  world"), "https://example.org/p")
        assert doc.body == "hello world"

    def test_scripts_only_page_is_empty(self):
        raw = FetchResult(
            body=b"<html><body><script>var x=1;</script></body></html>", media_type=MEDIA_HTML
        )
        with pytest.raises(EmptyBodyError):
            extract_text(raw, "https://example.org/p")

    def test_nav_and_style_removed(self):
        html = (
            b"<html><head><style>p{}</style></head><body>"
            b"<nav><a>Home</a><a>About</a></nav><p>keep me</p></body></html>"
        )
        doc = extract_text(FetchResult(html, MEDIA_HTML), "https://example.org/p")
        assert doc.body == "keep me"

    def test_paragraph_breaks(self):
        html = b"<html><body><p>one  two</p><p>three</p></body></html>"
        doc = extract_text(FetchResult(html, MEDIA_HTML), "https://example.org/p")
        assert doc.body == "one two\n\nthree"

    def test_entities_decoded(self):
        html = b"<html><body><p>fish &amp; chips</p></body></html>"
        doc = extract_text(FetchResult(html, MEDIA_HTML), "https://example.org/p")
        assert doc.body == "fish & chips"

    def test_pdf_rejected_distinctly(self):
        raw = FetchResult(body=b"%PDF-1.4", media_type="application/pdf")
        with pytest.raises(PdfRejectedError):
            extract_text(raw, "https://example.org/doc.pdf")

    def test_other_media_unsupported(self):
        raw = FetchResult(body=b"\x89PNG", media_type="image/png")
        with pytest.raises(UnsupportedMediaTypeError):
            extract_text(raw, "https://example.org/img.png")

    def test_doc_fields(self):
        doc = extract_text(html_page("body text", title="A Title"), "HTTPS://example.org/a/")
        assert doc.source_url == "https://example.org/a"
        assert doc.doc_id == doc_id_for_url("https://example.org/a")
        assert doc.title == "A Title"
        assert doc.content_hash


class TestFetchDocument:
    def test_mock_passthrough(self, tmp_path, mock_fetcher_cls):
        url = "https://example.org/a"
        fetcher = mock_fetcher_cls({url: html_page("hello")})
        result, meta = fetch_document(url, fetcher, tmp_path)
        assert b"hello" in result.body
        assert meta["media_type"] == MEDIA_HTML
        assert fetcher.calls == 1

    def test_non_success_status(self, tmp_path, mock_fetcher_cls):
        url = "https://example.org/missing"
        fetcher = mock_fetcher_cls({url: HttpStatusError(url, 404)})
        with pytest.raises(HttpStatusError) as err:
            fetch_document(url, fetcher, tmp_path)
        assert err.value.status == 404

    def test_second_call_served_from_cache(self, tmp_path, mock_fetcher_cls):
        url = "https://example.org/a"
        fetcher = mock_fetcher_cls({url: html_page("hello")})
        fetch_document(url, fetcher, tmp_path)
        result, meta = fetch_document(url, fetcher, tmp_path)
        assert fetcher.calls == 1
        assert b"hello" in result.body

    def test_corrupt_cache_refetches(self, tmp_path, mock_fetcher_cls):
        url = "https://example.org/a"
        fetcher = mock_fetcher_cls({url: html_page("hello")})
        fetch_document(url, fetcher, tmp_path)
        body_path = tmp_path / f"{doc_id_for_url(url)}.txt"
        body_path.write_bytes(b"tampered")
        fetch_document(url, fetcher, tmp_path)
        assert fetcher.calls == 2

    def test_pdf_not_cached(self, tmp_path, mock_fetcher_cls):
        url = "https://example.org/doc.pdf"
        fetcher = mock_fetcher_cls({url: FetchResult(b"%PDF", "application/pdf")})
        with pytest.raises(PdfRejectedError):
            fetch_document(url, fetcher, tmp_path)
        assert list(tmp_path.glob("*.txt")) == []


class TestLoadCorpus:
    def _manifest(self, urls):
        ds = Dataset(samples=tuple(train_sample(i, u) for i, u in enumerate(urls)))
        return build_manifest(ds)

    def test_partial_failure(self, tmp_path, mock_fetcher_cls):
        urls = [f"https://example.org/{i}" for i in range(3)]
        fetcher = mock_fetcher_cls(
            {
                urls[0]: html_page("doc zero"),
                urls[1]: HttpStatusError(urls[1], 404),
                urls[2]: html_page("doc two"),
            }
        )
        corpus, report = load_corpus(self._manifest(urls), tmp_path, fetcher, workers=1)
        assert len(corpus) == 2
        assert len(report.failures) == 1
        assert report.failures[0].kind == "http_status"
        assert len(report.succeeded) + len(report.failures) == 3

    def test_empty_manifest(self, tmp_path):
        from curated_rag.corpus import CorpusManifest

        with pytest.raises(CorpusError, match="no entries"):
            load_corpus(CorpusManifest(entries=(), created_at="now"), tmp_path, OfflineFetcher())

    def test_warm_cache_rerun_identical_and_offline(self, tmp_path, mock_fetcher_cls):
        urls = [f"https://example.org/{i}" for i in range(4)]
        fetcher = mock_fetcher_cls({u: html_page(f"text for {u}") for u in urls})
        manifest = self._manifest(urls)
        corpus1, _ = load_corpus(manifest, tmp_path, fetcher, workers=2)
        assert fetcher.calls == 4
        corpus2, report2 = load_corpus(manifest, tmp_path, OfflineFetcher(), workers=2)
        assert fetcher.calls == 4
        assert [d.content_hash for d in corpus1] == [d.content_hash for d in corpus2]
        assert not report2.failures

    def test_all_failures_fatal(self, tmp_path, mock_fetcher_cls):
        urls = ["https://example.org/a", "https://example.org/b"]
        fetcher = mock_fetcher_cls({u: HttpStatusError(u, 500) for u in urls})
        with pytest.raises(CorpusError, match="all 2"):
            load_corpus(self._manifest(urls), tmp_path, fetcher, workers=1)

    def test_corpus_sorted_and_serialization_deterministic(self, tmp_path, mock_fetcher_cls):
        urls = [f"https://example.org/{c}" for c in "zyxw"]
        fetcher = mock_fetcher_cls({u: html_page(f"body {u}") for u in urls})
        manifest = self._manifest(urls)
        corpus, _ = load_corpus(manifest, tmp_path, fetcher, workers=3)
        ids = [d.doc_id for d in corpus]
        assert ids == sorted(ids)
        p1 = save_corpus(corpus, tmp_path / "c1.json")
        corpus_again, _ = load_corpus(manifest, tmp_path, OfflineFetcher(), workers=3)
        p2 = save_corpus(corpus_again, tmp_path / "c2.json")
        assert p1.read_bytes() == p2.read_bytes()
        assert load_corpus_file(p1).documents == corpus.documents

    @settings(max_examples=25, deadline=None)
    @given(fail_mask=st.lists(st.booleans(), min_size=1, max_size=12))
    def test_accounting_identity(self, tmp_path_factory, fail_mask):
        tmp = tmp_path_factory.mktemp("acct")
        urls = [f"https://example.org/{i}" for i in range(len(fail_mask))]
        mapping = {
            u: (HttpStatusError(u, 404) if fails else html_page(f"body {u}"))
            for u, fails in zip(urls, fail_mask)
        }
        fetcher = MockFetcher(mapping)
        manifest = self._manifest(urls)
        if all(fail_mask):
            with pytest.raises(CorpusError):
                load_corpus(manifest, tmp, fetcher, workers=2)
            return
        _, report = load_corpus(manifest, tmp, fetcher, workers=2)
        assert len(report.succeeded) + len(report.failures) == len(manifest.entries)

    def test_corpus_from_cache(self, tmp_path, mock_fetcher_cls):
        urls = [f"https://example.org/{i}" for i in range(3)]
        fetcher = mock_fetcher_cls({u: html_page(f"text {u}") for u in urls})
        corpus, _ = load_corpus(self._manifest(urls), tmp_path, fetcher, workers=1)
        rebuilt = corpus_from_cache(tmp_path)
        assert [d.doc_id for d in rebuilt] == [d.doc_id for d in corpus]
        assert [d.content_hash for d in rebuilt] == [d.content_hash for d in corpus]

    def test_corpus_from_empty_cache(self, tmp_path):
        with pytest.raises(CorpusError, match="no cached"):
            corpus_from_cache(tmp_path)
