from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from promptlf.dataset import GOLD_LABELS, SplitAssignment, load_manifest
from promptlf.extraction import FeatureMatrix
from promptlf.gateway import BackendConfig, MockBackend, lf_answer_sets
from promptlf.registry import KINDS, LFRegistry, load_registry

_LANG_CYCLE = ("en", "hi", "zh")


def question_text(i: int, kind: str) -> str:
    """Synthetic question wording, distinct per index and kind."""
    stems = {
        "binary": f"q{i:03d}: does the image contain marker {i}?",
        "ordinal": f"q{i:03d}: how many shaded panels appear (0-5)?",
        "categorical3": f"q{i:03d}: which bucket fits best (A/B/C)?",
        "target3": f"q{i:03d}: which target field applies here?",
    }
    return stems[kind]


def write_registry_file(path: Path, n: int, start: int = 0,
                        with_batch: str | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for i in range(start, start + n):
            kind = KINDS[i % len(KINDS)]
            obj = {"lf_id": f"lf{i:03d}", "question": question_text(i, kind),
                   "kind": kind}
            if with_batch:
                obj["batch"] = with_batch
            fh.write(json.dumps(obj) + "\n")
    return path


def make_images(root: Path, meme_ids: list[str]) -> None:
    root.mkdir(parents=True, exist_ok=True)
    for i, meme_id in enumerate(meme_ids):
        color = ((i * 37) % 256, (i * 101) % 256, (i * 193) % 256)
        Image.new("RGB", (8, 8), color=color).save(root / f"{meme_id}.png")


def write_manifest(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def make_corpus(root: Path, n_memes: int, labeled: bool = True
                ) -> tuple[Path, Path]:
    """Write a manifest plus matching PNG files; returns (manifest, images)."""
    meme_ids = [f"m{i:03d}" for i in range(n_memes)]
    images = root / "images"
    make_images(images, meme_ids)
    rows = []
    for i, meme_id in enumerate(meme_ids):
        row = {"meme_id": meme_id,
               "image_path": f"images/{meme_id}.png",
               "language": _LANG_CYCLE[i % 3]}
        if labeled:
            row["label"] = GOLD_LABELS[i % 3]
        rows.append(row)
    manifest = write_manifest(root / "train.jsonl", rows)
    return manifest, root


def mock_backend(registry: LFRegistry, seed: int = 0,
                 invalid_probability: float = 0.0,
                 extra_answers: dict | None = None) -> MockBackend:
    config = BackendConfig(kind="mock", mock_seed=seed,
                           mock_invalid_probability=invalid_probability)
    answers = lf_answer_sets(registry)
    if extra_answers:
        answers.update(extra_answers)
    return MockBackend(config, answer_sets=answers)


def _codes(n: int) -> np.ndarray:
    return np.array([i % 3 for i in range(n)], dtype=np.int64)


def _as_matrix(X: np.ndarray) -> FeatureMatrix:
    ids = tuple(f"m{i:03d}" for i in range(X.shape[0]))
    return FeatureMatrix(meme_ids=ids,
                         lf_ids=tuple(f"lf{j:03d}" for j in range(X.shape[1])),
                         values=X.astype(np.int64))


def forest_oracle_fixture(n: int = 300, m: int = 5, seed: int = 123):
    """3-class set where feature 0 encodes the label; the rest is junk.

    Returns (matrix, labels, split); every fifth meme is validation.
    """
    rng = np.random.default_rng(seed)
    codes = _codes(n)
    X = rng.integers(0, 7, size=(n, m))
    X[:, 0] = codes
    matrix = _as_matrix(X)
    labels = [GOLD_LABELS[c] for c in codes]
    val_ids = frozenset(matrix.meme_ids[i] for i in range(0, n, 5))
    split = SplitAssignment(train_ids=frozenset(matrix.meme_ids) - val_ids,
                            val_ids=val_ids, seed=0, val_fraction=0.2)
    return matrix, labels, split


def f1prune_fixture(junk_seed: int = 5):
    """Feature 0 encodes the label; feature 1 agrees on train but flips every
    validation row to the next class; features 2-5 are uniform junk.

    The forest cannot tell features 0 and 1 apart on train (identical
    columns there), so half its splits ride the saboteur and validation
    scores stay depressed until f1_prune removes lf001.
    """
    rng = np.random.default_rng(junk_seed)
    n = 120
    codes = _codes(n)
    val_mask = np.arange(n) >= 90
    X = rng.integers(0, 7, size=(n, 6))
    X[:, 0] = codes
    X[:, 1] = np.where(val_mask, (codes + 1) % 3, codes)
    matrix = _as_matrix(X)
    labels = [GOLD_LABELS[c] for c in codes]
    split = SplitAssignment(train_ids=frozenset(matrix.meme_ids[:90]),
                            val_ids=frozenset(matrix.meme_ids[90:]),
                            seed=0, val_fraction=0.25)
    return matrix, labels, split


def f1prune_no_gain_fixture():
    """Two jointly necessary features: col0 splits class 0 off, col1 splits
    class 2 off. Dropping either one merges two classes, so no removal can
    beat the perfect base score.
    """
    n = 120
    codes = _codes(n)
    X = np.stack([(codes != 0).astype(np.int64),
                  (codes == 2).astype(np.int64)], axis=1)
    matrix = _as_matrix(X)
    labels = [GOLD_LABELS[c] for c in codes]
    split = SplitAssignment(train_ids=frozenset(matrix.meme_ids[:90]),
                            val_ids=frozenset(matrix.meme_ids[90:]),
                            seed=0, val_fraction=0.25)
    return matrix, labels, split


def impprune_fixture():
    """Seven constant features plus three informative ones arranged so the
    best k removes everything but lf009.

    lf009 encodes the label except inside a four-meme pocket where it reads
    6. The two trap features (lf007/lf008) are 6 everywhere else, so they
    only ever split inside that pocket — where three validation memes carry
    trap readings pointing at the wrong class. Any k that keeps a trap
    misroutes those memes; k=9 leaves the pocket to the class-skewed leaf,
    which votes them correctly.
    """
    pocket_train = [(0, "pocket"), (0, "pocket"), (1, "pocket"), (2, "pocket")]
    fill = {0: 38, 1: 39, 2: 39}
    train = pocket_train + [(c, "plain") for c in fill for _ in range(fill[c])]
    val = [(0, "pocket_val")] * 3 + [(0, "plain")] * 7 \
        + [(1, "plain")] * 10 + [(2, "plain")] * 10
    rows, labels, train_ids, val_ids = [], [], set(), set()
    for i, (code, kind) in enumerate(train + val):
        meme_id = f"m{i:03d}"
        labels.append(GOLD_LABELS[code])
        (train_ids if i < len(train) else val_ids).add(meme_id)
        row = [3] * 7
        if kind == "pocket":
            row += [code, code, 6]
        elif kind == "pocket_val":
            row += [2, 2, 6]
        else:
            row += [6, 6, code]
        rows.append(row)
    matrix = _as_matrix(np.array(rows, dtype=np.int64))
    split = SplitAssignment(train_ids=frozenset(train_ids),
                            val_ids=frozenset(val_ids), seed=0, val_fraction=0.2)
    return matrix, labels, split


@pytest.fixture
def tiny_registry(tmp_path: Path) -> LFRegistry:
    return load_registry(write_registry_file(tmp_path / "lfs.jsonl", 4))


@pytest.fixture
def tiny_corpus(tmp_path: Path):
    manifest_path, root = make_corpus(tmp_path / "corpus", 6)
    manifest = load_manifest(manifest_path, split="train")
    return manifest, root
