from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curated_rag.backends import MockChatBackend
from curated_rag.dataset import (
    Category,
    Dataset,
    DatasetError,
    QASample,
    Split,
    UnparseableLabelError,
    category_percentages,
    classify_category,
    dataset_stats,
    dumps_dataset,
    load_dataset,
    load_split_manifest,
    save_dataset,
    split_dataset,
)


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


GOOD = {
    "question": "Can my landlord keep my deposit?",
    "answer": "Only for documented damage or unpaid rent.",
    "citation": "https://example.org/deposits",
}


class TestLoad:
    def test_two_records_get_ordinal_ids(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [dict(GOOD), dict(GOOD)])
        ds = load_dataset(path)
        assert len(ds) == 2
        assert ds.ids() == ["000000", "000001"]

    def test_eval_fixture_size(self, eval_dataset):
        assert len(eval_dataset) == 323

    def test_missing_answer_names_line_and_field(self, tmp_path):
        records = [dict(GOOD), {k: v for k, v in GOOD.items() if k != "answer"}]
        path = write_jsonl(tmp_path / "d.jsonl", records)
        with pytest.raises(DatasetError, match=r"line 2.*answer"):
            load_dataset(path)

    def test_duplicate_explicit_id(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [dict(GOOD, id="a"), dict(GOOD, id="a")])
        with pytest.raises(DatasetError, match="duplicate explicit id"):
            load_dataset(path)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DatasetError, match="cannot read"):
            load_dataset(tmp_path / "missing.jsonl")

    def test_bad_citation_url(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [dict(GOOD, citation="not a url")])
        with pytest.raises(DatasetError, match="line 1"):
            load_dataset(path)

    def test_unknown_category_label(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [dict(GOOD, category="Maritime law")])
        with pytest.raises(DatasetError, match="category"):
            load_dataset(path)

    def test_category_parsed_case_insensitively(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [dict(GOOD, category="real ESTATE law")])
        ds = load_dataset(path)
        assert ds[0].category == Category.REAL_ESTATE

    def test_default_split_override(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [dict(GOOD)])
        assert load_dataset(path)[0].split == Split.EVAL
        assert load_dataset(path, default_split=Split.TRAIN)[0].split == Split.TRAIN

    def test_csv_import_same_columns(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            "id,question,answer,citation,category,split\n"
            'q1,"Is this legal?","Usually yes.",https://example.org/a,Corporate law,train\n',
            encoding="utf-8",
        )
        ds = load_dataset(path, fmt="csv")
        assert ds[0].id == "q1"
        assert ds[0].category == Category.CORPORATE
        assert ds[0].split == Split.TRAIN

    def test_unknown_fields_preserved(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [dict(GOOD, source_tag="forum-123")])
        ds = load_dataset(path)
        assert ds[0].extra == {"source_tag": "forum-123"}
        assert '"source_tag": "forum-123"' in dumps_dataset(ds)


class TestRoundTrip:
    def test_bundled_fixture_is_canonical(self, fixtures_dir, eval_dataset):
        raw = (fixtures_dir / "legalqa_eval.jsonl").read_bytes()
        assert dumps_dataset(eval_dataset).encode("utf-8") == raw

    def test_save_load_fixpoint(self, tmp_path):
        messy = [
            {"citation": "https://example.org/x", "answer": "A.", "question": "Q?", "note": "kept"},
            dict(GOOD, id="zz", category="Corporate law"),
        ]
        path = write_jsonl(tmp_path / "messy.jsonl", messy)
        once = tmp_path / "once.jsonl"
        save_dataset(load_dataset(path), once)
        twice = tmp_path / "twice.jsonl"
        save_dataset(load_dataset(once), twice)
        assert once.read_bytes() == twice.read_bytes()

    record_strategy = st.fixed_dictionaries(
        {
            "question": st.text(min_size=1).filter(str.strip),
            "answer": st.text(min_size=1).filter(str.strip),
            "citation": st.just("https://example.org/a"),
        },
        optional={
            "category": st.sampled_from([c.value for c in Category]),
            "split": st.sampled_from(["train", "eval"]),
            "extra_field": st.text(max_size=10),
        },
    )

    @settings(max_examples=40)
    @given(records=st.lists(record_strategy, min_size=1, max_size=8))
    def test_fixpoint_property(self, tmp_path_factory, records):
        tmp = tmp_path_factory.mktemp("rt")
        path = write_jsonl(tmp / "in.jsonl", records)
        first = dumps_dataset(load_dataset(path))
        second_path = tmp / "out.jsonl"
        second_path.write_text(first, encoding="utf-8")
        assert dumps_dataset(load_dataset(second_path)) == first


def _tiny_dataset(n: int, split: Split = Split.EVAL) -> Dataset:
    samples = tuple(
        QASample(
            id=f"s{i:03d}",
            question=f"Question number {i}?",
            expert_answer=f"Answer number {i}.",
            citation_url=f"https://example.org/{i}",
            split=split,
        )
        for i in range(n)
    )
    return Dataset(samples=samples)


class TestSplit:
    def test_seeded_split_shape_and_determinism(self):
        ds = _tiny_dataset(10)
        train1, eval1 = split_dataset(ds, seed=7, train_ratio=0.8)
        train2, eval2 = split_dataset(ds, seed=7, train_ratio=0.8)
        assert len(train1) == 8 and len(eval1) == 2
        assert train1.ids() == train2.ids() and eval1.ids() == eval2.ids()
        assert set(train1.ids()).isdisjoint(eval1.ids())
        assert all(s.split == Split.TRAIN for s in train1)
        assert all(s.split == Split.EVAL for s in eval1)

    def test_manifest_all_eval(self):
        ds = _tiny_dataset(4)
        train, evl = split_dataset(ds, manifest=[(i, "eval") for i in ds.ids()])
        assert len(train) == 0 and evl.ids() == ds.ids()

    def test_manifest_unknown_id(self):
        ds = _tiny_dataset(2)
        with pytest.raises(DatasetError, match="unknown id"):
            split_dataset(ds, manifest=[("s000", "eval"), ("nope", "train")])

    def test_manifest_duplicate_id(self):
        ds = _tiny_dataset(2)
        with pytest.raises(DatasetError, match="repeats"):
            split_dataset(ds, manifest=[("s000", "eval"), ("s000", "train"), ("s001", "eval")])

    def test_manifest_incomplete(self):
        ds = _tiny_dataset(3)
        with pytest.raises(DatasetError, match="misses"):
            split_dataset(ds, manifest=[("s000", "eval")])

    def test_project_manifest_train_citations(self, fixtures_dir, train_dataset, eval_dataset):
        full = Dataset(samples=tuple(train_dataset.samples) + tuple(eval_dataset.samples))
        manifest = load_split_manifest(fixtures_dir / "split_manifest.json")
        train, evl = split_dataset(full, manifest=manifest)
        assert len(train) == 850
        assert sum(1 for s in train if s.citation_url) == 850
        assert len(evl) == 323

    @settings(max_examples=50)
    @given(n=st.integers(1, 30), seed=st.integers(0, 10_000), ratio=st.floats(0.0, 1.0))
    def test_partition_property(self, n, seed, ratio):
        ds = _tiny_dataset(n)
        train, evl = split_dataset(ds, seed=seed, train_ratio=ratio)
        assert len(train) + len(evl) == n
        assert set(train.ids()) | set(evl.ids()) == set(ds.ids())
        assert set(train.ids()).isdisjoint(evl.ids())


class TestStats:
    def test_hand_arithmetic(self):
        samples = (
            QASample(id="a", question="one two three", expert_answer="x y",
                     citation_url="https://example.org/1"),
            QASample(id="b", question="one two three four five", expert_answer="x y z w",
                     citation_url="https://example.org/2"),
        )
        report = dataset_stats(Dataset(samples=samples))
        assert report.question_length_histogram == {0: 2}
        assert report.question_median == 4.0
        assert report.question_mean == 4.0
        assert report.answer_median == 3.0

    def test_single_sample(self):
        ds = _tiny_dataset(1)
        report = dataset_stats(ds)
        assert report.question_median == len(ds[0].question.split())
        assert report.answer_median == len(ds[0].expert_answer.split())

    def test_empty_dataset_rejected(self):
        with pytest.raises(DatasetError, match="empty"):
            dataset_stats(Dataset(samples=()))

    def test_eval_fixture_answer_median_under_100(self, eval_dataset):
        report = dataset_stats(eval_dataset)
        assert report.answer_median < 100

    def test_unknown_tokenizer(self):
        with pytest.raises(DatasetError, match="tokenizer"):
            dataset_stats(_tiny_dataset(1), "bpe")

    def test_custom_token_counter(self):
        report = dataset_stats(_tiny_dataset(2), len)  # chars as "tokens"
        assert report.tokenizer_descriptor == "len"

    @settings(max_examples=40)
    @given(n=st.integers(1, 40))
    def test_histogram_mass_equals_sample_count(self, n):
        report = dataset_stats(_tiny_dataset(n))
        assert sum(report.question_length_histogram.values()) == n
        assert sum(report.answer_length_histogram.values()) == n

    def test_report_dict_shape(self):
        d = dataset_stats(_tiny_dataset(2)).to_dict()
        assert d["sample_count"] == 2
        assert "[0,25)" in d["question_length_histogram"]


class TestClassify:
    def test_passthrough_label(self):
        backend = MockChatBackend(reply="Real estate law")
        assert classify_category("Can my landlord do this?", backend) == Category.REAL_ESTATE

    def test_out_of_taxonomy_reply(self):
        backend = MockChatBackend(reply="maritime law")
        with pytest.raises(UnparseableLabelError):
            classify_category("A question about ships", backend)

    def test_recorded_gold_cases(self, fixtures_dir):
        cases = json.loads((fixtures_dir / "classify_cases.json").read_text("utf-8"))

        def competent_classifier(messages):
            content = messages[-1]["content"].lower()
            if "divorce" in content or "custody" in content:
                return "Family and juvenile law"
            if "fired" in content or "overtime" in content:
                return "Employment and labour law"
            if "landlord" in content or "rent" in content:
                return "Real estate law"
            return "Corporate law"

        backend = MockChatBackend(reply=competent_classifier)
        for case in cases:
            assert classify_category(case["question"], backend) == Category(case["category"])

    def test_prompt_lists_all_six_labels(self):
        seen = {}

        def capture(messages):
            seen["content"] = messages[-1]["content"]
            return "Corporate law"

        classify_category("anything?", MockChatBackend(reply=capture))
        for cat in Category:
            assert cat.value in seen["content"]

    def test_earliest_label_wins_in_verbose_reply(self):
        backend = MockChatBackend(
            reply="This is mostly Corporate law, though Civil rights law is adjacent."
        )
        assert classify_category("q?", backend) == Category.CORPORATE


class TestPercentages:
    def test_full_fixture_matches_encoded_distribution(
        self, train_dataset, eval_dataset, fixture_meta
    ):
        full = Dataset(samples=tuple(train_dataset.samples) + tuple(eval_dataset.samples))
        pcts = category_percentages(full)
        expected = fixture_meta["expected_category_percentages"]
        assert {c.value: p for c, p in pcts.items()} == expected
        assert abs(sum(pcts.values()) - 100.0) <= 0.1

    def test_unlabeled_samples_rejected(self):
        with pytest.raises(DatasetError, match="no category"):
            category_percentages(_tiny_dataset(3))
