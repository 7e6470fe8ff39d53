"""Labeling-function registry.

A labeling function (LF) is a natural-language question plus an answer schema
that maps the model's short textual answers onto integer codes. The registry
holds an ordered list of LFs; that order defines feature-column order for
every downstream artifact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateId, EmptyRegistry, ParseError

KINDS = ("binary", "ordinal", "categorical3", "target3")
BATCHES = ("base", "added")

# Code 6 is reserved for the give-up fallback after exhausting answer retries.
# It never appears in any variant map, so the classifier can tell "model kept
# answering garbage" apart from every real answer.
FALLBACK_CODE = 6

# Built-in answer vocabularies. Surfaces are matched verbatim (case-sensitive)
# after whitespace/terminal-punctuation trimming; case variants are therefore
# enumerated explicitly.
BUILTIN_VARIANTS: dict[str, tuple[tuple[str, int], ...]] = {
    "binary": (
        ("no", 0), ("No", 0), ("NO", 0), ("nah", 0), ("n", 0),
        ("false", 0), ("False", 0),
        ("yes", 1), ("Yes", 1), ("YES", 1), ("yeah", 1), ("y", 1),
        ("true", 1), ("True", 1),
    ),
    "ordinal": (
        ("0", 0), ("zero", 0),
        ("1", 1), ("one", 1),
        ("2", 2), ("two", 2),
        ("3", 3), ("three", 3),
        ("4", 4), ("four", 4),
        ("5", 5), ("five", 5),
    ),
    "categorical3": (
        ("A", 0), ("a", 0), ("homophobic", 0), ("Homophobic", 0), ("gay people", 0),
        ("B", 1), ("b", 1), ("transphobic", 1), ("Transphobic", 1),
        ("transgender people", 1),
        ("C", 2), ("c", 2), ("neither", 2), ("Neither", 2), ("neutral", 2),
        ("none", 2), ("no group", 2),
    ),
    "target3": (
        ("sexual orientation", 0), ("orientation", 0),
        ("gender identity", 1), ("gender", 1),
        ("neither", 2), ("neutral", 2), ("none", 2), ("no target", 2),
    ),
}

_KIND_CODES = {
    "binary": frozenset({0, 1}),
    "ordinal": frozenset(range(6)),
    "categorical3": frozenset({0, 1, 2}),
    "target3": frozenset({0, 1, 2}),
}


@dataclass
class AnswerSchema:
    """Maps answer surface strings onto integer codes for one LF kind."""

    kind: str
    variant_map: tuple[tuple[str, int], ...]
    fallback_code: int = FALLBACK_CODE
    _lookup: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schema kind {self.kind!r}")
        if self.fallback_code != FALLBACK_CODE:
            raise ValueError(f"fallback code must be {FALLBACK_CODE}")
        allowed = _KIND_CODES[self.kind]
        surfaces = [s.strip() for s, _ in self.variant_map]
        if len(set(surfaces)) != len(surfaces):
            raise ValueError(f"duplicate answer surfaces in {self.kind} schema")
        for surface, code in self.variant_map:
            if code == FALLBACK_CODE:
                raise ValueError("fallback code must not appear in variant map")
            if code not in allowed:
                raise ValueError(
                    f"code {code} out of range for kind {self.kind!r}"
                )
        self._lookup = {s.strip(): c for s, c in self.variant_map}

    @property
    def codes(self) -> frozenset[int]:
        return frozenset(c for _, c in self.variant_map)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.variant_map)


def builtin_schema(kind: str) -> AnswerSchema:
    if kind not in BUILTIN_VARIANTS:
        raise ValueError(f"unknown schema kind {kind!r}")
    return AnswerSchema(kind=kind, variant_map=BUILTIN_VARIANTS[kind])


def normalize_answer(raw: str, schema: AnswerSchema) -> int | None:
    """Map raw model text to its integer code, or None when invalid.

    Only surrounding whitespace and trailing sentence punctuation (``. , !``)
    are stripped before the verbatim, case-sensitive match. Never returns the
    fallback code; that is assigned exclusively by the extraction retry loop.
    """
    text = raw.strip().rstrip(".,!").strip()
    return schema._lookup.get(text)


@dataclass
class LabelingFunction:
    lf_id: str
    question: str
    schema: AnswerSchema
    batch: str = "base"

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError(f"LF {self.lf_id!r} has an empty question")
        if self.batch not in BATCHES:
            raise ValueError(f"unknown batch {self.batch!r}")

    def content_hash(self) -> str:
        """Digest over id, question, and schema; batch is bookkeeping only."""
        payload = [self.lf_id, self.question, self.schema.kind,
                   [list(pair) for pair in self.schema.variant_map]]
        blob = json.dumps(payload, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class LFRegistry:
    """Ordered, immutable-after-load collection of labeling functions."""

    lfs: tuple[LabelingFunction, ...]

    def __post_init__(self):
        self.lfs = tuple(self.lfs)
        seen: set[str] = set()
        for lf in self.lfs:
            if lf.lf_id in seen:
                raise DuplicateId(f"duplicate lf_id {lf.lf_id!r}")
            seen.add(lf.lf_id)

    def __len__(self) -> int:
        return len(self.lfs)

    def __iter__(self) -> Iterator[LabelingFunction]:
        return iter(self.lfs)

    @property
    def lf_ids(self) -> list[str]:
        return [lf.lf_id for lf in self.lfs]

    def get(self, lf_id: str) -> LabelingFunction:
        for lf in self.lfs:
            if lf.lf_id == lf_id:
                return lf
        raise KeyError(lf_id)

    @property
    def registry_hash(self) -> str:
        blobs = [lf.content_hash() for lf in self.lfs]
        return hashlib.sha256("\n".join(blobs).encode("ascii")).hexdigest()

    def batch_lfs(self, batch: str) -> list[LabelingFunction]:
        if batch not in BATCHES:
            raise ValueError(f"unknown batch {batch!r}")
        return [lf for lf in self.lfs if lf.batch == batch]

    def subset(self, lf_ids: Iterable[str]) -> "LFRegistry":
        """Sub-registry with the given ids, preserving registry order."""
        wanted = set(lf_ids)
        missing = wanted - set(self.lf_ids)
        if missing:
            raise KeyError(f"unknown lf_ids: {sorted(missing)}")
        return LFRegistry(tuple(lf for lf in self.lfs if lf.lf_id in wanted))

    @staticmethod
    def combine(*parts: "LFRegistry") -> "LFRegistry":
        lfs: list[LabelingFunction] = []
        for part in parts:
            lfs.extend(part.lfs)
        return LFRegistry(tuple(lfs))


def _parse_record(path: str, line_no: int, obj: dict, default_batch: str,
                  synth_index: int) -> LabelingFunction:
    if not isinstance(obj, dict):
        raise ParseError(path, line_no, "record is not an object")
    question = obj.get("question")
    if not isinstance(question, str) or not question.strip():
        raise ParseError(path, line_no, "missing or empty 'question'")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise ParseError(path, line_no, f"unknown kind {kind!r}")
    lf_id = obj.get("lf_id")
    if lf_id is None:
        lf_id = f"lf{synth_index:03d}"
    elif not isinstance(lf_id, str) or not lf_id.strip():
        raise ParseError(path, line_no, "lf_id must be a non-empty string")
    batch = obj.get("batch", default_batch)
    if batch not in BATCHES:
        raise ParseError(path, line_no, f"unknown batch {batch!r}")

    answers = obj.get("acceptable_answers")
    if answers is None:
        schema = builtin_schema(kind)
    else:
        if not isinstance(answers, dict):
            raise ParseError(path, line_no, "'acceptable_answers' must map codes to variants")
        variant_map: list[tuple[str, int]] = []
        try:
            for code_str in sorted(answers, key=lambda c: int(c)):
                code = int(code_str)
                for surface in answers[code_str]:
                    variant_map.append((str(surface), code))
            schema = AnswerSchema(kind=kind, variant_map=tuple(variant_map))
        except (TypeError, ValueError) as exc:
            raise ParseError(path, line_no, f"bad acceptable_answers: {exc}") from exc
    try:
        return LabelingFunction(lf_id=lf_id, question=question, schema=schema, batch=batch)
    except ValueError as exc:
        raise ParseError(path, line_no, str(exc)) from exc


def load_registry(path: str | Path, batch: str = "base") -> LFRegistry:
    """Load an LF file (UTF-8 JSON lines), preserving file order.

    ``batch`` is the default batch tag for records that do not carry their
    own; expansion-round files are loaded with ``batch="added"``.
    """
    path = Path(path)
    lfs: list[LabelingFunction] = []
    index = 0
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            index += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(path), line_no, f"invalid JSON: {exc.msg}") from exc
            lfs.append(_parse_record(str(path), line_no, obj, batch, index))
    if not lfs:
        raise EmptyRegistry(f"{path}: no labeling functions")
    try:
        return LFRegistry(tuple(lfs))
    except DuplicateId as exc:
        raise DuplicateId(f"{path}: {exc}") from exc


def save_registry(registry: LFRegistry, path: str | Path) -> None:
    """Write a registry back to the JSON-lines format ``load_registry`` reads.

    Round-trips exactly: built-in schemas are stored by kind reference, custom
    variant maps inline, and non-default batch tags per record.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for lf in registry:
            obj: dict = {"lf_id": lf.lf_id, "question": lf.question, "kind": lf.schema.kind}
            if lf.schema.variant_map != BUILTIN_VARIANTS[lf.schema.kind]:
                answers: dict[str, list[str]] = {}
                for surface, code in lf.schema.variant_map:
                    answers.setdefault(str(code), []).append(surface)
                obj["acceptable_answers"] = answers
            if lf.batch != "base":
                obj["batch"] = lf.batch
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
