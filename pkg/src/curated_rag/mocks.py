"""Deterministic offline doubles: chat answerer, judge, web search, web pages.

Everything here is a pure function of its inputs plus a seed, so full offline
runs are bit-reproducible. The chat responder recognizes the bundled prompt
templates by their instruction phrases and answers in kind.
"""
from __future__ import annotations

import hashlib

from .backends import ChatBackendDescriptor, Message, MockChatBackend
from .corpus import FetchResult, MEDIA_HTML
from .dataset import Category
from .generation import SearchResultItem


def _digest(seed: int, *parts: str) -> int:
    h = hashlib.blake2b(digest_size=8, key=seed.to_bytes(8, "little", signed=True))
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def _question_line(content: str) -> str:
    marker = "Question:"
    idx = content.rfind(marker)
    if idx >= 0:
        tail = content[idx + len(marker) :]
        for line in tail.strip().splitlines():
            if line.strip():
                return line.strip()
    # Answer prompts end with the bare question after any context block.
    lines = [line.strip() for line in content.strip().splitlines() if line.strip()]
    return lines[-1] if lines else content.strip()


_ANSWER_OPENERS = (
    "Generally, the applicable rules provide that",
    "In most jurisdictions,",
    "Under the usual framework,",
    "As a practical matter,",
    "Subject to local variation,",
)

_ANSWER_CLOSERS = (
    "documenting everything in writing is advisable.",
    "a short consultation with a local practitioner can confirm the details.",
    "statutory deadlines may apply, so acting promptly matters.",
    "the outcome turns on the specific facts.",
    "keeping copies of all notices strengthens the position.",
)


def answer_responder(seed: int = 0):
    """Answers questions, classification prompts, search-query prompts, and judging."""

    def respond(messages: list[Message]) -> str:
        content = messages[-1].get("content", "")
        if "areas of law" in content:
            labels = list(Category)
            return labels[_digest(seed, "classify", content) % len(labels)].value
        if "web search query" in content:
            words = [w.strip(".,?!()'\"").lower() for w in _question_line(content).split()]
            words = [w for w in words if len(w) > 2][:6]
            return " ".join(words) or "legal question help"
        if "VERDICT" in content:
            return judge_reply(content, seed)
        question = _question_line(content)
        h = _digest(seed, "answer", content)
        opener = _ANSWER_OPENERS[h % len(_ANSWER_OPENERS)]
        closer = _ANSWER_CLOSERS[(h >> 8) % len(_ANSWER_CLOSERS)]
        topic = " ".join(question.split()[:8]).rstrip("?.,")
        return f"{opener} the situation described ({topic}) can usually be resolved; {closer}"

    return respond


def judge_reply(content: str, seed: int = 0, disagree_per_mille: int = 300) -> str:
    """Deterministic verdict: roughly 30% NOT_FACTUAL by content hash."""
    h = _digest(seed, "judge", content)
    if h % 1000 < disagree_per_mille:
        return "VERDICT: NOT_FACTUAL\nThe candidate contradicts the expert answer on a key point."
    return "VERDICT: FACTUAL\nThe candidate does not contradict the expert answer."


def offline_chat_backend(seed: int = 0, model_id: str = "mock-chat", **descriptor_kwargs) -> MockChatBackend:
    descriptor = ChatBackendDescriptor(
        provider="mock", model_id=model_id, temperature=0.0, top_p=1.0, **descriptor_kwargs
    )
    return MockChatBackend(descriptor=descriptor, reply=answer_responder(seed), seed=seed)


def offline_judge_backend(seed: int = 0, model_id: str = "mock-judge") -> MockChatBackend:
    descriptor = ChatBackendDescriptor(provider="mock", model_id=model_id, temperature=0.0, top_p=1.0)
    return MockChatBackend(
        descriptor=descriptor, reply=lambda messages: judge_reply(messages[-1]["content"], seed), seed=seed
    )


class SyntheticSearchClient:
    """Derives a stable ranked result list from the query text alone."""

    def __init__(self, seed: int = 0, results_per_query: int = 3):
        self.seed = seed
        self.results_per_query = results_per_query
        self.calls = 0

    def search(self, query: str) -> list[SearchResultItem]:
        self.calls += 1
        results = []
        for rank in range(1, self.results_per_query + 1):
            token = f"{_digest(self.seed, 'search', query, str(rank)):016x}"
            results.append(
                SearchResultItem(
                    url=f"https://web.example.net/articles/{token}",
                    title=f"Article {token[:8]}",
                    snippet=f"Overview of {query[:60]}",
                )
            )
        return results


class SyntheticWebFetcher:
    """Serves a deterministic HTML page for any URL; never touches the network."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def fetch(self, url: str) -> FetchResult:
        self.calls += 1
        token = f"{_digest(self.seed, 'page', url):016x}"
        sentences = " ".join(
            f"Paragraph {i} of synthetic article {token} discusses point {(_digest(self.seed, url, str(i)) % 97)}."
            for i in range(1, 6)
        )
        html = (
            f"<html><head><title>Synthetic article {token[:8]}</title></head>"
            f"<body><nav>site menu</nav><p>{sentences}</p>"
            f"<script>tracker()</script></body></html>"
        )
        return FetchResult(body=html.encode("utf-8"), media_type=MEDIA_HTML)
