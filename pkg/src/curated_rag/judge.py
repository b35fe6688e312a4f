"""Grounded factuality judging: candidate vs expert answer, at temperature zero.

The judge prompt always carries the expert answer verbatim as grounding. The
verdict protocol is one line, ``VERDICT: FACTUAL`` or ``VERDICT: NOT_FACTUAL``,
parsed tolerantly; output that never parses becomes a distinct Unjudgeable
outcome rather than being coerced into either label.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .backends import ChatBackend, ChatBackendDescriptor
from .prompts import load_template
from .utils import TranscriptWriter


class JudgeError(Exception):
    pass


class VerdictParseError(JudgeError):
    """No verdict token found in the judge's raw output."""


class JudgeLabel(str, Enum):
    FACTUAL = "Factual"
    NOT_FACTUAL = "NotFactual"


@dataclass(frozen=True)
class Verdict:
    label: JudgeLabel
    justification: str
    judge_model_id: str
    raw_output: str

    @property
    def kind(self) -> str:
        return "factual" if self.label == JudgeLabel.FACTUAL else "not_factual"


@dataclass(frozen=True)
class Unjudgeable:
    """The judge never produced a parseable verdict for this sample."""

    judge_model_id: str
    raw_output: str
    attempts: int
    reason: str = "unparseable verdict"

    kind: str = field(default="unjudgeable", init=False)


JudgeOutcome = Union[Verdict, Unjudgeable]


@dataclass(frozen=True)
class JudgeConfig:
    backend: ChatBackendDescriptor
    prompt_template_hash: str = ""
    max_parse_retries: int = 2

    def __post_init__(self):
        if self.backend.temperature != 0:
            raise JudgeError(f"judge backend temperature must be exactly 0, got {self.backend.temperature}")
        if self.max_parse_retries < 0:
            raise JudgeError("max_parse_retries must be >= 0")
        if not self.prompt_template_hash:
            object.__setattr__(self, "prompt_template_hash", load_template("judge").sha256)

    def to_dict(self) -> dict:
        return {
            "backend": self.backend.to_dict(),
            "prompt_template_hash": self.prompt_template_hash,
            "max_parse_retries": self.max_parse_retries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeConfig":
        return cls(
            backend=ChatBackendDescriptor.from_dict(d["backend"]),
            prompt_template_hash=d["prompt_template_hash"],
            max_parse_retries=d["max_parse_retries"],
        )


# NOT_FACTUAL must come first in the alternation; FACTUAL is its suffix. The
# trailing \b rejects look-alikes such as FACTUALLY.
_VERDICT_RE = re.compile(
    r"VERDICT\s*[:\-]?\s*[*_`\"]*\s*(NOT[\s_\-]?FACTUAL|FACTUAL)\b",
    re.IGNORECASE,
)


def parse_verdict(raw: str) -> tuple[JudgeLabel, str]:
    """Extract (label, justification) from raw judge output.

    The first verdict token wins when several occur. Tolerates markdown
    wrapping and any casing. Raises VerdictParseError when no token is found.
    """
    if not raw or not raw.strip():
        raise VerdictParseError("empty judge output")
    m = _VERDICT_RE.search(raw)
    if m is None:
        raise VerdictParseError(f"no verdict token in judge output: {raw[:120]!r}")
    token = m.group(1).upper()
    label = JudgeLabel.NOT_FACTUAL if token.startswith("NOT") else JudgeLabel.FACTUAL
    justification = raw[m.end() :].strip("*_`\" \t").strip()
    return label, justification


def judge_factuality(
    question: str,
    gold: str,
    candidate: str,
    config: JudgeConfig,
    backend: ChatBackend,
    transcripts: TranscriptWriter | None = None,
    name: str = "adhoc",
) -> JudgeOutcome:
    """Classify a candidate answer as Factual or NotFactual against the gold.

    Unparseable replies are re-asked with a format reminder up to
    ``max_parse_retries`` times; exhausting the retries yields Unjudgeable.
    Transport failures propagate to the caller.
    """
    for label, value in (("question", question), ("gold", gold), ("candidate", candidate)):
        if not value.strip():
            raise JudgeError(f"{label} text is empty")
    if backend.descriptor.temperature != 0:
        raise JudgeError("judge backend must run at temperature 0")

    template = load_template("judge")
    prompt = template.render(question=question, gold=gold, candidate=candidate)
    assert gold in prompt, "gold answer must appear verbatim in the judge prompt"
    messages = [{"role": "user", "content": prompt}]

    attempts = 1 + config.max_parse_retries
    raw = ""
    for attempt in range(1, attempts + 1):
        raw = backend.complete(messages)
        if transcripts is not None:
            transcripts.write(
                "judge",
                f"{name}.attempt{attempt}",
                {
                    "kind": "judge",
                    "messages": messages,
                    "response": raw,
                    "model_id": backend.descriptor.model_id,
                    "temperature": backend.descriptor.temperature,
                    "template_sha256": config.prompt_template_hash,
                },
            )
        try:
            label, justification = parse_verdict(raw)
        except VerdictParseError:
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": load_template("judge_retry").text.strip()},
            ]
            continue
        return Verdict(
            label=label,
            justification=justification,
            judge_model_id=backend.descriptor.model_id,
            raw_output=raw,
        )
    return Unjudgeable(
        judge_model_id=backend.descriptor.model_id,
        raw_output=raw,
        attempts=attempts,
    )
