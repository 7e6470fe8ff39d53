"""Macro-F1 evaluation, pruning (F1Prune / ImpPrune), Jaccard, error reports.

Classes are scored over the sorted union of gold and predicted labels, but
the macro average runs only over classes actually present in gold; a
predicted-only label (e.g. an unparseable-output marker) therefore counts
as always wrong without contributing an undefined recall term.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import SplitAssignment
from .errors import EmptyInput, KOutOfRange, LengthMismatch
from .extraction import FeatureMatrix
from .forest import ForestConfig, ForestModel, fit, predict
from .registry import LFRegistry


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvaluationReport:
    macro_f1: float
    per_class: dict[str, ClassScores]
    confusion: np.ndarray
    classes: tuple[str, ...]
    split_tag: str = "validation"

    def render(self) -> str:
        width = max([len(c) for c in self.classes] + [8])
        lines = [f"split: {self.split_tag}",
                 f"macro_f1: {self.macro_f1:.4f}",
                 "",
                 f"{'class'.ljust(width)}  precision  recall  f1      support"]
        for name in self.classes:
            s = self.per_class[name]
            lines.append(f"{name.ljust(width)}  {s.precision:.4f}     "
                         f"{s.recall:.4f}  {s.f1:.4f}  {s.support}")
        lines.append("")
        lines.append("confusion (rows=gold, cols=pred):")
        header = " ".join(c.rjust(width) for c in ("", *self.classes))
        lines.append(header)
        for i, name in enumerate(self.classes):
            row = " ".join(str(int(v)).rjust(width) for v in self.confusion[i])
            lines.append(f"{name.rjust(width)} {row}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"split_tag": self.split_tag,
                "macro_f1": self.macro_f1,
                "classes": list(self.classes),
                "per_class": {c: {"precision": s.precision, "recall": s.recall,
                                  "f1": s.f1, "support": s.support}
                              for c, s in self.per_class.items()},
                "confusion": self.confusion.tolist()}


def macro_f1(gold: Sequence[str], pred: Sequence[str],
             split_tag: str = "validation") -> EvaluationReport:
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted")
    if not gold:
        raise EmptyInput("nothing to evaluate")
    classes = tuple(sorted(set(gold) | set(pred)))
    index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for g, p in zip(gold, pred):
        confusion[index[g], index[p]] += 1

    per_class: dict[str, ClassScores] = {}
    f1_present: list[float] = []
    for i, name in enumerate(classes):
        tp = int(confusion[i, i])
        support = int(confusion[i].sum())
        predicted = int(confusion[:, i].sum())
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[name] = ClassScores(precision, recall, f1, support)
        if support:
            f1_present.append(f1)
    return EvaluationReport(macro_f1=float(np.mean(f1_present)),
                            per_class=per_class, confusion=confusion,
                            classes=classes, split_tag=split_tag)


@dataclass
class TraceStep:
    step: int
    candidate: str
    score: float
    accepted: bool


@dataclass
class PruneResult:
    method: str
    removed_lf_ids: tuple[str, ...]
    trace: list[TraceStep]
    retained_count: int
    base_score: float
    final_score: float

    def to_dict(self) -> dict:
        return {"method": self.method,
                "removed_lf_ids": list(self.removed_lf_ids),
                "retained_count": self.retained_count,
                "base_score": self.base_score,
                "final_score": self.final_score,
                "trace": [{"step": t.step, "candidate": t.candidate,
                           "score": t.score, "accepted": t.accepted}
                          for t in self.trace]}


def split_xy(matrix: FeatureMatrix, labels: Sequence[str],
             split: SplitAssignment
             ) -> tuple[FeatureMatrix, list[str], FeatureMatrix, list[str]]:
    """Slice (matrix, labels) into aligned train and validation parts."""
    if len(labels) != matrix.n_memes:
        raise LengthMismatch(f"{len(labels)} labels for {matrix.n_memes} rows")
    if not split.train_ids or not split.val_ids:
        raise EmptyInput("split must have nonempty train and validation parts")
    by_id = dict(zip(matrix.meme_ids, labels))
    train_m = matrix.select_rows(split.train_ids)
    val_m = matrix.select_rows(split.val_ids)
    return (train_m, [by_id[mid] for mid in train_m.meme_ids],
            val_m, [by_id[mid] for mid in val_m.meme_ids])


def _score_features(train_m: FeatureMatrix, train_y: list[str],
                    val_m: FeatureMatrix, val_y: list[str],
                    removed: Iterable[str], config: ForestConfig) -> float:
    removed = list(removed)
    model = fit(train_m.drop_columns(removed), train_y, config)
    preds = predict(model, val_m.drop_columns(removed))
    return macro_f1(val_y, preds).macro_f1


def f1_prune(matrix: FeatureMatrix, labels: Sequence[str],
             split: SplitAssignment, config: ForestConfig) -> PruneResult:
    """Greedy backward elimination, one pass in registry column order.

    A candidate's removal is accepted iff the validation macro-F1 after
    refitting strictly beats the best score seen so far. Every refit reuses
    the same forest seed so resampling noise cannot masquerade as signal.
    """
    train_m, train_y, val_m, val_y = split_xy(matrix, labels, split)
    base = _score_features(train_m, train_y, val_m, val_y, [], config)
    removed: list[str] = []
    best = base
    trace: list[TraceStep] = []
    for step, lf_id in enumerate(matrix.lf_ids, start=1):
        score = _score_features(train_m, train_y, val_m, val_y,
                                removed + [lf_id], config)
        accepted = score > best
        trace.append(TraceStep(step=step, candidate=lf_id,
                               score=score, accepted=accepted))
        if accepted:
            removed.append(lf_id)
            best = score
    return PruneResult(method="f1prune", removed_lf_ids=tuple(removed),
                       trace=trace,
                       retained_count=matrix.n_features - len(removed),
                       base_score=base, final_score=best)


def imp_prune(matrix: FeatureMatrix, labels: Sequence[str],
              split: SplitAssignment, config: ForestConfig,
              k_grid: Sequence[int] | None = None) -> PruneResult:
    """Drop the k least-important features, k chosen on validation macro-F1.

    Ranking comes from the base model's importances (ascending, stable over
    column order). Ties between k values go to the smallest k; k=0 reuses
    the base score rather than refitting.
    """
    train_m, train_y, val_m, val_y = split_xy(matrix, labels, split)
    m = matrix.n_features
    ks = list(range(m)) if k_grid is None else list(k_grid)
    bad = [k for k in ks if k < 0 or k >= m]
    if bad:
        raise KOutOfRange(f"k values {bad} outside 0..{m - 1}")

    base_model = fit(train_m, train_y, config)
    base = macro_f1(val_y, predict(base_model, val_m)).macro_f1
    order = np.argsort(base_model.importances, kind="stable")
    ranking = [matrix.lf_ids[j] for j in order]

    scores: dict[int, float] = {}
    for k in sorted(set(ks)):
        if k == 0:
            scores[k] = base
        else:
            scores[k] = _score_features(train_m, train_y, val_m, val_y,
                                        ranking[:k], config)
    chosen = max(sorted(scores), key=lambda k: (scores[k], -k))
    trace = [TraceStep(step=i, candidate=str(k), score=scores[k],
                       accepted=(k == chosen))
             for i, k in enumerate(sorted(scores), start=1)]
    removed = tuple(ranking[:chosen])
    return PruneResult(method="impprune", removed_lf_ids=removed,
                       trace=trace, retained_count=m - chosen,
                       base_score=base, final_score=scores[chosen])


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def jaccard_matrix(named_sets: Mapping[str, Iterable[str]]
                   ) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Pairwise Jaccard similarities and shared counts, in mapping order."""
    names = list(named_sets)
    sets = [set(named_sets[n]) for n in names]
    n = len(names)
    sims = np.zeros((n, n), dtype=np.float64)
    shared = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            sims[i, j] = jaccard(sets[i], sets[j])
            shared[i, j] = len(sets[i] & sets[j])
    return names, sims, shared


def save_jaccard_csv(named_sets: Mapping[str, Iterable[str]],
                     path: str | Path) -> None:
    """Square CSV with 'similarity (shared count)' cells, e.g. 0.689 (44)."""
    names, sims, shared = jaccard_matrix(named_sets)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", *names])
        for i, name in enumerate(names):
            cells = [f"{sims[i, j]:.3f} ({int(shared[i, j])})"
                     for j in range(len(names))]
            writer.writerow([name, *cells])


@dataclass
class ErrorEntry:
    meme_id: str
    gold: str
    predicted: str
    answers: tuple[tuple[str, str, int], ...]  # (lf_id, question, code)


def error_report(model: ForestModel, matrix: FeatureMatrix,
                 labels: Sequence[str], split: SplitAssignment,
                 registry: LFRegistry | None = None) -> list[ErrorEntry]:
    """Misclassified validation memes with their full LF answer rows."""
    _, _, val_m, val_y = split_xy(matrix, labels, split)
    preds = predict(model, val_m)
    questions = {}
    if registry is not None:
        questions = {lf.lf_id: lf.question for lf in registry}
    entries: list[ErrorEntry] = []
    for i, (gold, predicted) in enumerate(zip(val_y, preds)):
        if gold == predicted:
            continue
        answers = tuple((lf_id, questions.get(lf_id, ""), int(code))
                        for lf_id, code in zip(val_m.lf_ids, val_m.values[i]))
        entries.append(ErrorEntry(meme_id=val_m.meme_ids[i], gold=gold,
                                  predicted=predicted, answers=answers))
    return entries


def render_error_report(entries: Sequence[ErrorEntry]) -> str:
    if not entries:
        return "no misclassified validation memes\n"
    blocks: list[str] = []
    for e in entries:
        lines = [f"meme {e.meme_id}: gold={e.gold} predicted={e.predicted}"]
        for lf_id, question, code in e.answers:
            suffix = f"  # {question}" if question else ""
            lines.append(f"  {lf_id} = {code}{suffix}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def save_error_report_csv(entries: Sequence[ErrorEntry], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["meme_id", "gold", "predicted", "lf_id", "code", "question"])
        for e in entries:
            for lf_id, question, code in e.answers:
                writer.writerow([e.meme_id, e.gold, e.predicted, lf_id, code, question])


def save_trace_csv(result: PruneResult, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "candidate", "val_macro_f1", "accepted"])
        for t in result.trace:
            writer.writerow([t.step, t.candidate, f"{t.score:.6f}",
                             "true" if t.accepted else "false"])


def save_importances_csv(model: ForestModel, path: str | Path,
                         top_n: int = 20) -> None:
    """Importance vector export with descending rank and a top-N flag."""
    order = sorted(range(len(model.feature_ids)),
                   key=lambda j: (-model.importances[j], j))
    rank = {j: r for r, j in enumerate(order, start=1)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lf_id", "importance", "rank", "is_top20"])
        for j, lf_id in enumerate(model.feature_ids):
            writer.writerow([lf_id, repr(float(model.importances[j])),
                             rank[j], 1 if rank[j] <= top_n else 0])
