"""Benchmark orchestration: run a pipeline over the eval set, judge, aggregate.

Progress is journaled to disk one JSON line per completed sample, so an
interrupted run resumes from where it stopped and live API spend is never
lost. Per-sample failures are recorded, never fatal; the accounting identity
judged + unjudgeable + pipeline_error = sample count holds for every run.
"""
from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .backends import ChatBackend
from .dataset import Category, Dataset, QASample
from .generation import (
    PipelineConfig,
    PipelineDeps,
    PipelineResult,
    check_mode_prerequisites,
    run_pipeline,
)
from .judge import JudgeConfig, JudgeOutcome, Unjudgeable, Verdict, judge_factuality
from .utils import TranscriptWriter, atomic_write_text, stable_json, utc_now_iso


class BenchError(Exception):
    pass


class ConfigMismatchError(BenchError):
    """The run directory already holds a different configuration."""


@dataclass(frozen=True)
class RunRecord:
    sample_id: str
    status: str  # "ok" | "pipeline_error"
    result: dict | None  # serialized PipelineResult
    error: dict | None  # {"kind", "message"}
    outcome: dict | None  # serialized judge outcome

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "status": self.status,
            "result": self.result,
            "error": self.error,
            "outcome": self.outcome,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            sample_id=d["sample_id"],
            status=d["status"],
            result=d.get("result"),
            error=d.get("error"),
            outcome=d.get("outcome"),
        )

    @property
    def outcome_kind(self) -> str | None:
        return self.outcome.get("kind") if self.outcome else None


def outcome_to_dict(outcome: JudgeOutcome) -> dict:
    if isinstance(outcome, Verdict):
        return {
            "kind": outcome.kind,
            "justification": outcome.justification,
            "judge_model_id": outcome.judge_model_id,
            "raw_output": outcome.raw_output,
        }
    return {
        "kind": outcome.kind,
        "reason": outcome.reason,
        "attempts": outcome.attempts,
        "judge_model_id": outcome.judge_model_id,
        "raw_output": outcome.raw_output,
    }


@dataclass(frozen=True)
class BenchmarkRun:
    run_id: str
    pipeline_config: dict
    judge_config: dict
    records: tuple[RunRecord, ...]  # sorted by sample_id, one per completed sample
    started_at: str
    finished_at: str | None

    def __post_init__(self):
        ids = [r.sample_id for r in self.records]
        if ids != sorted(ids) or len(set(ids)) != len(ids):
            raise BenchError("records must be unique and sorted by sample_id")


def _journal_path(out_dir: Path) -> Path:
    return out_dir / "journal.jsonl"


def _read_journal(out_dir: Path) -> dict[str, RunRecord]:
    path = _journal_path(out_dir)
    done: dict[str, RunRecord] = {}
    if not path.exists():
        return done
    for line in path.read_text("utf-8").splitlines():
        if line.strip():
            record = RunRecord.from_dict(json.loads(line))
            done[record.sample_id] = record
    return done


def _write_config(out_dir: Path, run_id: str, pipeline: PipelineConfig, judge_cfg: JudgeConfig) -> dict:
    config = {
        "run_id": run_id,
        "pipeline_config": pipeline.to_dict(),
        "judge_config": judge_cfg.to_dict(),
    }
    path = out_dir / "config.json"
    if path.exists():
        existing = json.loads(path.read_text("utf-8"))
        if stable_json(existing) != stable_json(config):
            raise ConfigMismatchError(
                f"{path} holds a different configuration; use a fresh run directory"
            )
    else:
        atomic_write_text(path, json.dumps(config, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    return config


def run_benchmark(
    eval_set: Dataset,
    pipeline: PipelineConfig,
    judge_cfg: JudgeConfig,
    deps: PipelineDeps,
    judge_backend: ChatBackend,
    out_dir: str | Path,
    workers: int = 4,
    limit: int | None = None,
) -> BenchmarkRun:
    """Run the pipeline plus judge over every eval sample, journaling progress.

    Re-invoking with the same out_dir resumes: already-journaled samples are
    skipped. ``limit`` caps how many pending samples this invocation processes
    (useful for smoke tests and for bounding paid-API spend).
    """
    if len(eval_set) == 0:
        raise BenchError("eval set is empty")
    out_dir = Path(out_dir)
    run_id = out_dir.name
    if not run_id:
        raise BenchError("out_dir must name the run")
    out_dir.mkdir(parents=True, exist_ok=True)

    deps.eval_ids = frozenset(eval_set.ids())
    if deps.transcripts is None:
        deps.transcripts = TranscriptWriter(out_dir)
    check_mode_prerequisites(pipeline, deps)  # invalid configuration is fatal up front
    _write_config(out_dir, run_id, pipeline, judge_cfg)

    meta_path = out_dir / "meta.json"
    if meta_path.exists():
        started_at = json.loads(meta_path.read_text("utf-8"))["started_at"]
    else:
        started_at = utc_now_iso()
        atomic_write_text(meta_path, json.dumps({"run_id": run_id, "started_at": started_at}) + "\n")

    done = _read_journal(out_dir)
    pending = [s for s in eval_set if s.id not in done]
    if limit is not None:
        pending = pending[:limit]

    journal_lock = threading.Lock()
    journal_file = _journal_path(out_dir).open("a", encoding="utf-8")

    def process(sample: QASample) -> None:
        record = _run_one(sample, pipeline, judge_cfg, deps, judge_backend)
        with journal_lock:
            journal_file.write(stable_json(record.to_dict()) + "\n")
            journal_file.flush()
            done[sample.id] = record

    try:
        if workers <= 1:
            for sample in pending:
                process(sample)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(process, pending))
    finally:
        journal_file.close()

    finished_at = None
    if len(done) == len(eval_set):
        finished_at = utc_now_iso()
        atomic_write_text(
            meta_path,
            json.dumps({"run_id": run_id, "started_at": started_at, "finished_at": finished_at}) + "\n",
        )

    records = tuple(sorted(done.values(), key=lambda r: r.sample_id))
    return BenchmarkRun(
        run_id=run_id,
        pipeline_config=pipeline.to_dict(),
        judge_config=judge_cfg.to_dict(),
        records=records,
        started_at=started_at,
        finished_at=finished_at,
    )


def _run_one(
    sample: QASample,
    pipeline: PipelineConfig,
    judge_cfg: JudgeConfig,
    deps: PipelineDeps,
    judge_backend: ChatBackend,
) -> RunRecord:
    try:
        result: PipelineResult = run_pipeline(sample, pipeline, deps)
    except Exception as exc:  # per-sample isolation: a bad sample never kills the run
        return RunRecord(
            sample_id=sample.id,
            status="pipeline_error",
            result=None,
            error={"kind": type(exc).__name__, "message": str(exc)},
            outcome=None,
        )
    try:
        outcome = judge_factuality(
            sample.question,
            sample.expert_answer,
            result.answer_text,
            judge_cfg,
            judge_backend,
            transcripts=deps.transcripts,
            name=sample.id,
        )
    except Exception as exc:  # judged answer exists; a judge fault must not kill the run
        outcome = Unjudgeable(
            judge_model_id=judge_cfg.backend.model_id,
            raw_output="",
            attempts=0,
            reason=f"{type(exc).__name__}: {exc}",
        )
    return RunRecord(
        sample_id=sample.id,
        status="ok",
        result=result.to_dict(),
        error=None,
        outcome=outcome_to_dict(outcome),
    )


def load_run(out_dir: str | Path) -> BenchmarkRun:
    """Rebuild a BenchmarkRun from its on-disk journal and config."""
    out_dir = Path(out_dir)
    config = json.loads((out_dir / "config.json").read_text("utf-8"))
    meta = json.loads((out_dir / "meta.json").read_text("utf-8"))
    done = _read_journal(out_dir)
    return BenchmarkRun(
        run_id=config["run_id"],
        pipeline_config=config["pipeline_config"],
        judge_config=config["judge_config"],
        records=tuple(sorted(done.values(), key=lambda r: r.sample_id)),
        started_at=meta["started_at"],
        finished_at=meta.get("finished_at"),
    )


def _normalize_outcome_kind(outcome) -> str:
    if isinstance(outcome, str):
        return outcome
    if isinstance(outcome, (Verdict, Unjudgeable)):
        return outcome.kind
    if isinstance(outcome, dict):
        return outcome["kind"]
    raise BenchError(f"not a judge outcome: {outcome!r}")


def disagreement_rate(outcomes: Iterable) -> float:
    """Fraction of judged samples labeled not_factual.

    Unjudgeable outcomes are excluded from the denominator. Raises when nothing
    was judged at all.
    """
    judged = 0
    not_factual = 0
    for outcome in outcomes:
        kind = _normalize_outcome_kind(outcome)
        if kind == "unjudgeable":
            continue
        if kind not in ("factual", "not_factual"):
            raise BenchError(f"unknown outcome kind {kind!r}")
        judged += 1
        not_factual += kind == "not_factual"
    if judged == 0:
        raise BenchError("no judged verdicts: disagreement rate is undefined")
    return not_factual / judged


@dataclass(frozen=True)
class CategoryRate:
    rate: float | None  # None when n == 0
    n: int


@dataclass(frozen=True)
class MetricsReport:
    overall_disagreement: float | None
    per_category: dict[Category, CategoryRate]
    judged_count: int
    unjudgeable_count: int
    pipeline_error_count: int

    @property
    def total(self) -> int:
        return self.judged_count + self.unjudgeable_count + self.pipeline_error_count


def per_category_rates(run: BenchmarkRun, dataset: Dataset) -> MetricsReport:
    """Aggregate a run into overall and per-category disagreement.

    Every record's sample must carry a Category. All six taxonomy categories
    are always enumerated; a category with no judged samples reports n=0 and a
    null rate.
    """
    categories: dict[str, Category] = {}
    for sample in dataset:
        if sample.category is None:
            raise BenchError(f"sample {sample.id} has no category; classify the dataset first")
        categories[sample.id] = sample.category

    judged_by_cat = {cat: 0 for cat in Category}
    nf_by_cat = {cat: 0 for cat in Category}
    judged = unjudgeable = errors = 0
    for record in run.records:
        if record.status == "pipeline_error":
            errors += 1
            continue
        kind = record.outcome_kind
        if kind == "unjudgeable":
            unjudgeable += 1
            continue
        if record.sample_id not in categories:
            raise BenchError(f"record {record.sample_id} is not in the provided dataset")
        cat = categories[record.sample_id]
        judged += 1
        judged_by_cat[cat] += 1
        nf_by_cat[cat] += kind == "not_factual"

    per_category = {
        cat: CategoryRate(
            rate=(nf_by_cat[cat] / judged_by_cat[cat]) if judged_by_cat[cat] else None,
            n=judged_by_cat[cat],
        )
        for cat in Category
    }
    overall = (sum(nf_by_cat.values()) / judged) if judged else None
    return MetricsReport(
        overall_disagreement=overall,
        per_category=per_category,
        judged_count=judged,
        unjudgeable_count=unjudgeable,
        pipeline_error_count=errors,
    )
