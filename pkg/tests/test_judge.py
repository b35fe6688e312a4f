from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curated_rag.backends import ChatBackendDescriptor, MockChatBackend
from curated_rag.judge import (
    JudgeConfig,
    JudgeError,
    JudgeLabel,
    Unjudgeable,
    Verdict,
    VerdictParseError,
    judge_factuality,
    parse_verdict,
)
from curated_rag.utils import TranscriptWriter, TransportError


def judge_descriptor(temperature=0.0):
    return ChatBackendDescriptor(provider="mock", model_id="mock-judge", temperature=temperature)


class TestParseVerdict:
    def test_fixture_cases_agree_with_hand_labels(self, fixtures_dir):
        cases = json.loads((fixtures_dir / "judge_cases.json").read_text("utf-8"))
        assert len(cases) == 20
        for case in cases:
            try:
                label, _ = parse_verdict(case["raw"])
                got = "factual" if label == JudgeLabel.FACTUAL else "not_factual"
            except VerdictParseError:
                got = "parse_failure"
            assert got == case["expected"], f"case {case['raw']!r}"

    def test_first_occurrence_wins(self):
        label, _ = parse_verdict("VERDICT: FACTUAL\nlater: VERDICT: NOT_FACTUAL")
        assert label == JudgeLabel.FACTUAL

    def test_justification_captured(self):
        label, justification = parse_verdict("VERDICT: NOT_FACTUAL\nReason: contradicts limitation period")
        assert label == JudgeLabel.NOT_FACTUAL
        assert justification == "Reason: contradicts limitation period"

    def test_markdown_and_case_tolerated(self):
        label, justification = parse_verdict("**VERDICT: factual** because it matches")
        assert label == JudgeLabel.FACTUAL
        assert justification == "because it matches"

    def test_empty_is_parse_failure(self):
        with pytest.raises(VerdictParseError):
            parse_verdict("")

    @settings(max_examples=500)
    @given(raw=st.text(max_size=300))
    def test_parser_is_total_and_pure(self, raw):
        def outcome():
            try:
                label, _ = parse_verdict(raw)
                return label
            except VerdictParseError:
                return "parse_failure"

        first = outcome()
        assert first in (JudgeLabel.FACTUAL, JudgeLabel.NOT_FACTUAL, "parse_failure")
        assert outcome() == first

    @settings(max_examples=200)
    @given(
        prefix=st.text(max_size=30),
        token=st.sampled_from(["VERDICT: FACTUAL", "VERDICT: NOT_FACTUAL"]),
        suffix=st.text(max_size=30),
    )
    def test_embedded_token_always_found(self, prefix, token, suffix):
        # A clean token embedded in arbitrary text must parse unless the prefix
        # itself contains an earlier verdict token.
        raw = prefix + "\n" + token + " " + suffix
        label, _ = parse_verdict(raw)
        assert label in (JudgeLabel.FACTUAL, JudgeLabel.NOT_FACTUAL)


class TestJudgeConfig:
    def test_nonzero_temperature_rejected(self):
        with pytest.raises(JudgeError, match="temperature"):
            JudgeConfig(backend=judge_descriptor(temperature=0.3))

    def test_template_hash_defaulted(self):
        config = JudgeConfig(backend=judge_descriptor())
        assert len(config.prompt_template_hash) == 64

    def test_round_trip(self):
        config = JudgeConfig(backend=judge_descriptor())
        assert JudgeConfig.from_dict(config.to_dict()) == config


class TestJudgeFactuality:
    def _config(self, retries=2):
        return JudgeConfig(backend=judge_descriptor(), max_parse_retries=retries)

    def test_identity_candidate_is_factual(self):
        gold = "In Ontario, dogs are personal property."

        def verbatim_judge(msgs):
            content = msgs[-1]["content"]
            expert = content.split("Expert answer:\n")[1].split("\n\nCandidate answer:")[0]
            candidate = content.split("Candidate answer:\n")[1].split("\n\nReply")[0]
            if expert.strip() == candidate.strip():
                return "VERDICT: FACTUAL\nIdentical to the expert answer."
            return "VERDICT: NOT_FACTUAL\nDiffers."

        backend = MockChatBackend(descriptor=judge_descriptor(), reply=verbatim_judge)
        outcome = judge_factuality("Who keeps the dog?", gold, gold, self._config(), backend)
        assert isinstance(outcome, Verdict)
        assert outcome.label == JudgeLabel.FACTUAL

    def test_not_factual_with_justification(self):
        backend = MockChatBackend(
            descriptor=judge_descriptor(),
            reply="VERDICT: NOT_FACTUAL\nReason: contradicts limitation period",
        )
        outcome = judge_factuality("q?", "gold answer", "candidate", self._config(), backend)
        assert isinstance(outcome, Verdict)
        assert outcome.label == JudgeLabel.NOT_FACTUAL
        assert outcome.justification == "Reason: contradicts limitation period"

    def test_unparseable_after_retries_is_unjudgeable(self):
        backend = MockChatBackend(descriptor=judge_descriptor(), reply="free prose, no token")
        outcome = judge_factuality("q?", "gold", "candidate", self._config(retries=2), backend)
        assert isinstance(outcome, Unjudgeable)
        assert outcome.attempts == 3
        assert backend.calls == 3

    def test_retry_appends_format_reminder(self):
        seen = []

        def flaky(msgs):
            seen.append([m["content"] for m in msgs])
            return "no token here" if len(seen) == 1 else "VERDICT: FACTUAL ok"

        backend = MockChatBackend(descriptor=judge_descriptor(), reply=flaky)
        outcome = judge_factuality("q?", "gold", "cand", self._config(), backend)
        assert isinstance(outcome, Verdict)
        assert len(seen) == 2
        assert "could not be parsed" in seen[1][-1]
        assert seen[1][-2] == "no token here"

    def test_gold_always_in_prompt(self):
        gold = "a very specific golden sentence"
        captured = {}

        def capture(msgs):
            captured["content"] = msgs[-1]["content"]
            return "VERDICT: FACTUAL x"

        backend = MockChatBackend(descriptor=judge_descriptor(), reply=capture)
        judge_factuality("q?", gold, "candidate", self._config(), backend)
        assert gold in captured["content"]

    def test_empty_texts_rejected(self):
        backend = MockChatBackend(descriptor=judge_descriptor(), reply="VERDICT: FACTUAL")
        with pytest.raises(JudgeError, match="candidate"):
            judge_factuality("q?", "gold", "  ", self._config(), backend)

    def test_nonzero_temperature_backend_rejected(self):
        backend = MockChatBackend(descriptor=judge_descriptor(temperature=0.5), reply="VERDICT: FACTUAL")
        with pytest.raises(JudgeError, match="temperature 0"):
            judge_factuality("q?", "gold", "cand", self._config(), backend)

    def test_transport_failure_propagates(self):
        def explode(msgs):
            raise TransportError("wire down")

        backend = MockChatBackend(descriptor=judge_descriptor(), reply=explode)
        with pytest.raises(TransportError):
            judge_factuality("q?", "gold", "cand", self._config(), backend)

    def test_transcripts_record_temperature_zero(self, tmp_path):
        backend = MockChatBackend(descriptor=judge_descriptor(), reply="VERDICT: FACTUAL fine")
        transcripts = TranscriptWriter(tmp_path)
        judge_factuality("q?", "gold", "cand", self._config(), backend, transcripts, name="s1")
        payload = json.loads((tmp_path / "judge" / "s1.attempt1.json").read_text("utf-8"))
        assert payload["temperature"] == 0
        assert payload["template_sha256"]
