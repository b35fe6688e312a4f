"""LegalQA dataset: loading, canonical JSONL storage, splits, stats, classification.

A dataset is an ordered list of question/answer/citation records. Records keep
their file order; unknown fields survive a load/save round trip; saving always
produces the canonical JSONL form, so canonical files are a fixpoint of
``save(load(f))``.
"""
from __future__ import annotations

import csv
import io
import json
import random
import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence
from urllib.parse import urlsplit

from .prompts import load_template
from .utils import sha256_hex

HISTOGRAM_BUCKET_WIDTH = 25

CANONICAL_FIELDS = ("id", "question", "answer", "citation", "category", "split")


class DatasetError(ValueError):
    """Invalid dataset content or file."""


class UnparseableLabelError(DatasetError):
    """Classifier backend output matched none of the six category labels."""


class Split(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class Category(str, Enum):
    """The closed six-label area-of-law taxonomy."""

    EMPLOYMENT = "Employment and labour law"
    FAMILY = "Family and juvenile law"
    REAL_ESTATE = "Real estate law"
    CORPORATE = "Corporate law"
    PERSONAL_INJURY = "Personal injury law"
    CIVIL_RIGHTS = "Civil rights law"

    @classmethod
    def from_label(cls, label: str) -> "Category":
        wanted = label.strip().casefold()
        for cat in cls:
            if cat.value.casefold() == wanted:
                return cat
        raise UnparseableLabelError(f"not a known category label: {label!r}")


def _is_absolute_url(url: str) -> bool:
    try:
        parts = urlsplit(url)
    except ValueError:
        return False
    return bool(parts.scheme) and bool(parts.netloc)


@dataclass(frozen=True, eq=True)
class QASample:
    """One legal question with its expert answer and citation."""

    id: str
    question: str
    expert_answer: str
    citation_url: str
    category: Category | None = None
    split: Split = Split.EVAL
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise DatasetError("sample id must be non-empty")
        if not self.question.strip():
            raise DatasetError(f"sample {self.id}: question is empty")
        if not self.expert_answer.strip():
            raise DatasetError(f"sample {self.id}: answer is empty")
        if not _is_absolute_url(self.citation_url):
            raise DatasetError(f"sample {self.id}: citation is not an absolute URL: {self.citation_url!r}")


@dataclass(frozen=True)
class Provenance:
    source: str
    content_hash: str


@dataclass(frozen=True)
class Dataset:
    """Ordered, id-unique collection of QASamples."""

    samples: tuple[QASample, ...]
    provenance: Provenance | None = None

    def __post_init__(self):
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise DatasetError(f"duplicate sample id: {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[QASample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> QASample:
        return self.samples[i]

    def by_id(self, sample_id: str) -> QASample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]


def _sample_from_record(record: Mapping, line_no: int, ordinal: int, default_split: Split) -> QASample:
    def fail(msg: str) -> DatasetError:
        return DatasetError(f"line {line_no}: {msg}")

    for fld in ("question", "answer", "citation"):
        value = record.get(fld)
        if value is None or not str(value).strip():
            raise fail(f"missing or empty field {fld!r}")

    raw_id = record.get("id")
    sample_id = str(raw_id) if raw_id not in (None, "") else f"{ordinal:06d}"

    raw_category = record.get("category")
    category: Category | None = None
    if raw_category not in (None, ""):
        try:
            category = Category.from_label(str(raw_category))
        except UnparseableLabelError:
            raise fail(f"unknown category label {raw_category!r}") from None

    raw_split = record.get("split")
    if raw_split in (None, ""):
        split = default_split
    else:
        try:
            split = Split(str(raw_split))
        except ValueError:
            raise fail(f"invalid split {raw_split!r} (expected train or eval)") from None

    extra = {k: v for k, v in record.items() if k not in CANONICAL_FIELDS}
    try:
        return QASample(
            id=sample_id,
            question=str(record["question"]),
            expert_answer=str(record["answer"]),
            citation_url=str(record["citation"]),
            category=category,
            split=split,
            extra=extra,
        )
    except DatasetError as exc:
        raise fail(str(exc)) from None


def load_dataset(path: str | Path, fmt: str = "jsonl", default_split: Split = Split.EVAL) -> Dataset:
    """Load a dataset file, preserving record order.

    Records must carry ``question``, ``answer`` and ``citation``. Missing ids are
    assigned as zero-padded record ordinals; missing splits get ``default_split``.
    """
    path = Path(path)
    if fmt not in ("jsonl", "csv"):
        raise DatasetError(f"unsupported format: {fmt!r}")
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset file {path}: {exc}") from exc

    records: list[tuple[int, Mapping]] = []
    if fmt == "jsonl":
        # Split on \n only: JSON strings may contain unescaped \x85/ .
        for line_no, line in enumerate(raw_bytes.decode("utf-8").split("\n"), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"line {line_no}: record must be a JSON object")
            records.append((line_no, obj))
    else:
        reader = csv.DictReader(io.StringIO(raw_bytes.decode("utf-8"), newline=""))
        for row_no, row in enumerate(reader, start=2):  # header is line 1
            records.append((row_no, {k: v for k, v in row.items() if k is not None}))

    samples = [
        _sample_from_record(rec, line_no, ordinal, default_split)
        for ordinal, (line_no, rec) in enumerate(records)
    ]
    explicit: set[str] = set()
    for (line_no, rec), sample in zip(records, samples):
        if rec.get("id") not in (None, ""):
            if sample.id in explicit:
                raise DatasetError(f"line {line_no}: duplicate explicit id {sample.id!r}")
            explicit.add(sample.id)

    provenance = Provenance(source=str(path), content_hash=sha256_hex(raw_bytes))
    return Dataset(samples=tuple(samples), provenance=provenance)


def sample_to_record(sample: QASample) -> dict:
    record: dict = {
        "id": sample.id,
        "question": sample.question,
        "answer": sample.expert_answer,
        "citation": sample.citation_url,
    }
    if sample.category is not None:
        record["category"] = sample.category.value
    record["split"] = sample.split.value
    record.update(sample.extra)
    return record


def dumps_dataset(dataset: Dataset) -> str:
    """Canonical JSONL text: one object per line, fixed field order."""
    return "".join(json.dumps(sample_to_record(s), ensure_ascii=False) + "\n" for s in dataset)


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_dataset(dataset), encoding="utf-8")
    return path


def split_dataset(
    dataset: Dataset,
    manifest: Iterable[tuple[str, str] | Mapping] | None = None,
    seed: int = 0,
    train_ratio: float = 0.8,
) -> tuple[Dataset, Dataset]:
    """Partition a dataset into train and eval halves.

    With a manifest (pairs or ``{"id", "split"}`` objects covering every id
    exactly once) the assignment is taken verbatim; otherwise a seeded shuffle
    assigns ``int(n * train_ratio)`` samples to train. Same seed and input give
    the same split. Both outputs preserve the input ordering.
    """
    assignment: dict[str, Split] = {}
    known = set(dataset.ids())
    if manifest is not None:
        for entry in manifest:
            if isinstance(entry, Mapping):
                sample_id, split_value = entry["id"], entry["split"]
            else:
                sample_id, split_value = entry
            if sample_id not in known:
                raise DatasetError(f"split manifest names unknown id {sample_id!r}")
            if sample_id in assignment:
                raise DatasetError(f"split manifest repeats id {sample_id!r}")
            assignment[sample_id] = Split(split_value)
        missing = known - set(assignment)
        if missing:
            raise DatasetError(f"split manifest misses {len(missing)} ids (e.g. {sorted(missing)[0]!r})")
    else:
        if not 0.0 <= train_ratio <= 1.0:
            raise DatasetError(f"train_ratio out of range: {train_ratio}")
        ids = dataset.ids()
        rng = random.Random(seed)
        rng.shuffle(ids)
        n_train = int(len(ids) * train_ratio)
        train_ids = set(ids[:n_train])
        assignment = {i: (Split.TRAIN if i in train_ids else Split.EVAL) for i in dataset.ids()}

    train_samples = []
    eval_samples = []
    for s in dataset:
        target = assignment[s.id]
        tagged = s if s.split == target else replace(s, split=target)
        (train_samples if target == Split.TRAIN else eval_samples).append(tagged)
    return (
        Dataset(samples=tuple(train_samples), provenance=dataset.provenance),
        Dataset(samples=tuple(eval_samples), provenance=dataset.provenance),
    )


def load_split_manifest(path: str | Path) -> list[dict]:
    """Read a split manifest file: a JSON array of {id, split}."""
    data = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(data, list):
        raise DatasetError("split manifest must be a JSON array of {id, split}")
    return data


TokenCounter = Callable[[str], int]

TOKENIZERS: dict[str, TokenCounter] = {
    "whitespace": lambda text: len(text.split()),
}


@dataclass(frozen=True)
class StatsReport:
    """Token-length distributions for questions and answers."""

    question_length_histogram: dict[int, int]
    answer_length_histogram: dict[int, int]
    question_median: float
    question_mean: float
    answer_median: float
    answer_mean: float
    tokenizer_descriptor: str
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "tokenizer": self.tokenizer_descriptor,
            "sample_count": self.sample_count,
            "question_median": self.question_median,
            "question_mean": self.question_mean,
            "answer_median": self.answer_median,
            "answer_mean": self.answer_mean,
            "question_length_histogram": {
                bucket_label(k): v for k, v in sorted(self.question_length_histogram.items())
            },
            "answer_length_histogram": {
                bucket_label(k): v for k, v in sorted(self.answer_length_histogram.items())
            },
        }


def bucket_label(lower: int) -> str:
    return f"[{lower},{lower + HISTOGRAM_BUCKET_WIDTH})"


def _histogram(counts: Sequence[int]) -> dict[int, int]:
    hist: dict[int, int] = {}
    for n in counts:
        lower = (n // HISTOGRAM_BUCKET_WIDTH) * HISTOGRAM_BUCKET_WIDTH
        hist[lower] = hist.get(lower, 0) + 1
    return hist


def dataset_stats(dataset: Dataset, tokenizer: str | TokenCounter = "whitespace") -> StatsReport:
    """Histogram question and answer lengths under a pluggable token counter.

    Medians use the conventional rule: middle value for odd counts, mean of the
    two middle values for even counts.
    """
    if len(dataset) == 0:
        raise DatasetError("cannot compute stats of an empty dataset")
    if isinstance(tokenizer, str):
        if tokenizer not in TOKENIZERS:
            raise DatasetError(f"unknown tokenizer {tokenizer!r} (have: {sorted(TOKENIZERS)})")
        descriptor, count_tokens = tokenizer, TOKENIZERS[tokenizer]
    else:
        descriptor, count_tokens = getattr(tokenizer, "__name__", "custom"), tokenizer

    q_lengths = [count_tokens(s.question) for s in dataset]
    a_lengths = [count_tokens(s.expert_answer) for s in dataset]
    return StatsReport(
        question_length_histogram=_histogram(q_lengths),
        answer_length_histogram=_histogram(a_lengths),
        question_median=float(statistics.median(q_lengths)),
        question_mean=float(statistics.fmean(q_lengths)),
        answer_median=float(statistics.median(a_lengths)),
        answer_mean=float(statistics.fmean(a_lengths)),
        tokenizer_descriptor=descriptor,
        sample_count=len(dataset),
    )


def classify_category(question: str, backend) -> Category:
    """Zero-shot classification of a question into the six-label taxonomy.

    The prompt enumerates the six labels; the backend's raw reply is normalized
    case-insensitively against them. An exact (stripped) label wins; otherwise
    the label occurring earliest in the reply wins.
    """
    if not question.strip():
        raise DatasetError("question is empty")
    template = load_template("classify")
    raw = backend.complete([{"role": "user", "content": template.render(question=question)}])
    stripped = raw.strip().strip(".").casefold()
    for cat in Category:
        if cat.value.casefold() == stripped:
            return cat
    lowered = raw.casefold()
    hits = [(lowered.find(cat.value.casefold()), cat) for cat in Category]
    hits = [(pos, cat) for pos, cat in hits if pos >= 0]
    if not hits:
        raise UnparseableLabelError(f"backend reply matches no category label: {raw!r}")
    return min(hits, key=lambda pc: pc[0])[1]


def category_percentages(dataset: Dataset) -> dict[Category, float]:
    """Share of each category, as percentages rounded to one decimal."""
    unlabeled = sum(1 for s in dataset if s.category is None)
    if unlabeled:
        raise DatasetError(f"{unlabeled} samples have no category; classify them first")
    if len(dataset) == 0:
        raise DatasetError("empty dataset")
    counts = {cat: 0 for cat in Category}
    for s in dataset:
        counts[s.category] += 1
    return {cat: round(100.0 * n / len(dataset), 1) for cat, n in counts.items()}
