"""Dataset manifests, gold labels, and deterministic stratified splits."""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import ClassTooSmall, DuplicateId, MissingLabel, ParseError, UnknownLanguage

LANGUAGES = ("en", "hi", "zh")
LANGUAGE_SCOPES = LANGUAGES + ("all",)
SPLITS = ("train", "test")
GOLD_LABELS = ("Homophobic", "Transphobic", "NonAntiLGBT")


@dataclass
class MemeRecord:
    meme_id: str
    image_ref: str
    language: str
    gold_label: str | None = None


@dataclass
class DatasetManifest:
    records: tuple[MemeRecord, ...]
    split: str
    language_scope: str

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[MemeRecord]:
        return iter(self.records)

    @property
    def meme_ids(self) -> list[str]:
        return [r.meme_id for r in self.records]

    def labels(self) -> list[str]:
        """Gold labels aligned to record order; raises if any are missing."""
        out = []
        for r in self.records:
            if r.gold_label is None:
                raise MissingLabel(f"meme {r.meme_id!r} has no gold label")
            out.append(r.gold_label)
        return out

    def label_counts(self) -> dict[str, int]:
        return dict(Counter(r.gold_label for r in self.records if r.gold_label))

    def language_counts(self) -> dict[str, int]:
        return dict(Counter(r.language for r in self.records))


def load_manifest(path: str | Path, split: str, language_scope: str = "all") -> DatasetManifest:
    """Load a manifest (UTF-8 JSON lines: meme_id, image_path, language, label).

    Train manifests must label every record; records must match the language
    scope unless the scope is ``all``.
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    if language_scope not in LANGUAGE_SCOPES:
        raise ValueError(f"unknown language scope {language_scope!r}")
    path = Path(path)
    records: list[MemeRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(path), line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(str(path), line_no, "record is not an object")
            meme_id = obj.get("meme_id")
            image_path = obj.get("image_path")
            language = obj.get("language")
            label = obj.get("label")
            if not isinstance(meme_id, str) or not meme_id:
                raise ParseError(str(path), line_no, "missing meme_id")
            if not isinstance(image_path, str) or not image_path:
                raise ParseError(str(path), line_no, "missing image_path")
            if language not in LANGUAGES:
                raise UnknownLanguage(f"{path}:{line_no}: language {language!r}")
            if label is not None and label not in GOLD_LABELS:
                raise ParseError(str(path), line_no, f"unknown label {label!r}")
            if split == "train" and label is None:
                raise MissingLabel(f"{path}:{line_no}: train record {meme_id!r} lacks a label")
            if meme_id in seen:
                raise DuplicateId(f"{path}:{line_no}: duplicate meme_id {meme_id!r}")
            seen.add(meme_id)
            if language_scope != "all" and language != language_scope:
                continue
            records.append(MemeRecord(meme_id=meme_id, image_ref=image_path,
                                      language=language, gold_label=label))
    return DatasetManifest(records=tuple(records), split=split, language_scope=language_scope)


@dataclass
class SplitAssignment:
    train_ids: frozenset[str]
    val_ids: frozenset[str]
    seed: int
    val_fraction: float

    def role_of(self, meme_id: str) -> str:
        if meme_id in self.val_ids:
            return "val"
        if meme_id in self.train_ids:
            return "train"
        raise KeyError(meme_id)

    def save(self, path: str | Path) -> None:
        # Sorted by id so reruns are byte-identical.
        path = Path(path)
        lines = [f"# seed={self.seed} val_fraction={self.val_fraction}"]
        for meme_id in sorted(self.train_ids | self.val_ids):
            lines.append(f"{meme_id},{self.role_of(meme_id)}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "SplitAssignment":
        path = Path(path)
        train: set[str] = set()
        val: set[str] = set()
        seed = 0
        fraction = 0.0
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    if key == "seed":
                        seed = int(value)
                    elif key == "val_fraction":
                        fraction = float(value)
                continue
            if not line.strip():
                continue
            meme_id, _, role = line.rpartition(",")
            (val if role == "val" else train).add(meme_id)
        return SplitAssignment(train_ids=frozenset(train), val_ids=frozenset(val),
                               seed=seed, val_fraction=fraction)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(manifest: DatasetManifest, val_fraction: float, seed: int) -> SplitAssignment:
    """Deterministic stratified train/validation split of a train manifest.

    Validation slots total round(val_fraction * N) and are allocated per class
    by largest remainder; members are drawn by a seeded shuffle of the sorted
    ids within each class, so the result depends only on (ids, labels,
    fraction, seed), not on manifest row order.
    """
    if manifest.split != "train":
        raise ValueError("stratified_split requires a train manifest")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    by_class: dict[str, list[str]] = {}
    for record in manifest:
        if record.gold_label is None:
            raise MissingLabel(f"meme {record.meme_id!r} has no gold label")
        by_class.setdefault(record.gold_label, []).append(record.meme_id)

    all_ids = set(manifest.meme_ids)
    if val_fraction == 0.0:
        return SplitAssignment(train_ids=frozenset(all_ids), val_ids=frozenset(),
                               seed=seed, val_fraction=val_fraction)

    for label, ids in by_class.items():
        if len(ids) < 2:
            raise ClassTooSmall(f"class {label!r} has {len(ids)} member(s); need >= 2")

    total_val = _round_half_up(val_fraction * len(manifest))
    labels = sorted(by_class)
    quotas = {label: len(by_class[label]) * val_fraction for label in labels}
    alloc = {label: math.floor(quotas[label]) for label in labels}
    leftovers = total_val - sum(alloc.values())
    # Largest-remainder: hand leftover slots to the classes that lost the most
    # to flooring; ties break on class name for determinism.
    by_remainder = sorted(labels, key=lambda lb: (-(quotas[lb] - alloc[lb]), lb))
    for label in by_remainder[:max(leftovers, 0)]:
        alloc[label] += 1
    for label in labels:
        alloc[label] = min(alloc[label], len(by_class[label]))

    val_ids: set[str] = set()
    for label in labels:
        ids = sorted(by_class[label])
        rng = random.Random(f"{seed}|{label}")
        rng.shuffle(ids)
        val_ids.update(ids[: alloc[label]])
    return SplitAssignment(train_ids=frozenset(all_ids - val_ids),
                           val_ids=frozenset(val_ids),
                           seed=seed, val_fraction=val_fraction)
