from __future__ import annotations

import json
from pathlib import Path

import pytest

from promptlf.dataset import (GOLD_LABELS, SplitAssignment, load_manifest,
                              stratified_split)
from promptlf.errors import (ClassTooSmall, DuplicateId, MissingLabel,
                             ParseError, UnknownLanguage)

from conftest import write_manifest


def _rows(counts: dict[str, int]) -> list[dict]:
    """Manifest rows with the given per-label counts, languages cycling."""
    rows = []
    i = 0
    for label, n in counts.items():
        for _ in range(n):
            rows.append({"meme_id": f"m{i:04d}", "image_path": f"img/{i}.png",
                         "language": ("en", "hi", "zh")[i % 3], "label": label})
            i += 1
    return rows


def test_load_manifest_happy_path(tmp_path: Path):
    path = write_manifest(tmp_path / "train.jsonl",
                          _rows({"Homophobic": 2, "Transphobic": 2, "NonAntiLGBT": 2}))
    manifest = load_manifest(path, split="train")
    assert len(manifest) == 6
    assert manifest.label_counts() == {"Homophobic": 2, "NonAntiLGBT": 2,
                                       "Transphobic": 2}
    assert set(manifest.language_counts()) == {"en", "hi", "zh"}


def test_load_manifest_requires_labels_on_train(tmp_path: Path):
    rows = _rows({"Homophobic": 1})
    rows.append({"meme_id": "xx", "image_path": "img/x.png", "language": "en"})
    path = write_manifest(tmp_path / "train.jsonl", rows)
    with pytest.raises(MissingLabel):
        load_manifest(path, split="train")
    # The same file is fine as a test split.
    manifest = load_manifest(path, split="test")
    assert manifest.records[-1].gold_label is None


def test_load_manifest_rejects_unknown_language(tmp_path: Path):
    rows = [{"meme_id": "a", "image_path": "a.png", "language": "fr",
             "label": "Homophobic"}]
    path = write_manifest(tmp_path / "t.jsonl", rows)
    with pytest.raises(UnknownLanguage):
        load_manifest(path, split="train")


def test_load_manifest_rejects_unknown_label_and_duplicates(tmp_path: Path):
    bad = [{"meme_id": "a", "image_path": "a.png", "language": "en",
            "label": "Hateful"}]
    path = write_manifest(tmp_path / "t.jsonl", bad)
    with pytest.raises(ParseError):
        load_manifest(path, split="train")

    dup = _rows({"Homophobic": 1}) * 2
    path = write_manifest(tmp_path / "d.jsonl", dup)
    with pytest.raises(DuplicateId):
        load_manifest(path, split="train")


def test_language_scope_filters_rows(tmp_path: Path):
    path = write_manifest(tmp_path / "t.jsonl",
                          _rows({"Homophobic": 3, "Transphobic": 3}))
    scoped = load_manifest(path, split="train", language_scope="en")
    assert all(r.language == "en" for r in scoped)
    assert len(scoped) == 2
    everything = load_manifest(path, split="train", language_scope="all")
    assert len(everything) == 6


def test_stratified_split_hand_derived_allocation(tmp_path: Path):
    # 100 records split 50/30/20 by class at fraction 0.2: the per-class
    # quotas 10/6/4 are exact, so any correct allocator must produce them.
    path = write_manifest(tmp_path / "t.jsonl",
                          _rows({"Homophobic": 50, "Transphobic": 30,
                                 "NonAntiLGBT": 20}))
    manifest = load_manifest(path, split="train")
    split = stratified_split(manifest, 0.2, seed=7)
    labels = {r.meme_id: r.gold_label for r in manifest}
    val_by_class: dict[str, int] = {}
    for meme_id in split.val_ids:
        val_by_class[labels[meme_id]] = val_by_class.get(labels[meme_id], 0) + 1
    assert val_by_class == {"Homophobic": 10, "Transphobic": 6, "NonAntiLGBT": 4}
    assert len(split.train_ids) == 80
    assert not (split.train_ids & split.val_ids)
    assert split.train_ids | split.val_ids == set(manifest.meme_ids)


def test_stratified_split_largest_remainder(tmp_path: Path):
    # 7/5/3 at fraction 0.2 -> total slots round(3.0)=3; floors 1/1/0 leave
    # one slot for the largest remainder (0.6 on the 3-member class).
    path = write_manifest(tmp_path / "t.jsonl",
                          _rows({"Homophobic": 7, "Transphobic": 5,
                                 "NonAntiLGBT": 3}))
    manifest = load_manifest(path, split="train")
    split = stratified_split(manifest, 0.2, seed=0)
    labels = {r.meme_id: r.gold_label for r in manifest}
    val_by_class: dict[str, int] = {}
    for meme_id in split.val_ids:
        val_by_class[labels[meme_id]] = val_by_class.get(labels[meme_id], 0) + 1
    assert val_by_class == {"Homophobic": 1, "Transphobic": 1, "NonAntiLGBT": 1}


def test_stratified_split_zero_fraction(tmp_path: Path):
    path = write_manifest(tmp_path / "t.jsonl", _rows({"Homophobic": 3,
                                                       "Transphobic": 1}))
    manifest = load_manifest(path, split="train")
    split = stratified_split(manifest, 0.0, seed=1)
    assert split.val_ids == frozenset()
    assert split.train_ids == frozenset(manifest.meme_ids)


def test_stratified_split_class_too_small(tmp_path: Path):
    path = write_manifest(tmp_path / "t.jsonl", _rows({"Homophobic": 5,
                                                       "Transphobic": 1}))
    manifest = load_manifest(path, split="train")
    with pytest.raises(ClassTooSmall):
        stratified_split(manifest, 0.2, seed=1)


def test_stratified_split_is_row_order_independent(tmp_path: Path):
    rows = _rows({"Homophobic": 8, "Transphobic": 6, "NonAntiLGBT": 4})
    a = load_manifest(write_manifest(tmp_path / "a.jsonl", rows), split="train")
    b = load_manifest(write_manifest(tmp_path / "b.jsonl", rows[::-1]),
                      split="train")
    sa = stratified_split(a, 0.25, seed=9)
    sb = stratified_split(b, 0.25, seed=9)
    assert sa.val_ids == sb.val_ids
    assert sa.train_ids == sb.train_ids


def test_stratified_split_seed_sensitivity(tmp_path: Path):
    path = write_manifest(tmp_path / "t.jsonl",
                          _rows({"Homophobic": 20, "Transphobic": 20}))
    manifest = load_manifest(path, split="train")
    s1 = stratified_split(manifest, 0.3, seed=1)
    s2 = stratified_split(manifest, 0.3, seed=1)
    s3 = stratified_split(manifest, 0.3, seed=2)
    assert s1.val_ids == s2.val_ids
    assert s1.val_ids != s3.val_ids  # overwhelmingly likely for these sizes


def test_split_assignment_save_load_round_trip(tmp_path: Path):
    split = SplitAssignment(train_ids=frozenset({"b", "c"}),
                            val_ids=frozenset({"a"}), seed=5, val_fraction=0.25)
    path = tmp_path / "split.txt"
    split.save(path)
    loaded = SplitAssignment.load(path)
    assert loaded == split
    split.save(tmp_path / "again.txt")
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_gold_labels_enum():
    assert GOLD_LABELS == ("Homophobic", "Transphobic", "NonAntiLGBT")
