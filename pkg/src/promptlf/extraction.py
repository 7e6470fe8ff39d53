"""Feature extraction: per-(meme, LF) queries, retry/fallback, cache, matrix.

Every meme is asked every registered question. A cell is retried until the
answer normalizes to a valid code, up to ten attempts, after which the
reserved fallback code 6 is assigned. Resolved cells land in an append-only
cache so interrupted or incremental runs never repeat a settled query.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import DatasetManifest, MemeRecord
from .errors import (ExtractionAborted, ImageLoadError, MissingBaseFeatures,
                     ParseError, TransportError)
from .gateway import FEATURE_SYSTEM_PROMPT, VlmBackend, VlmRequest, prompt_digest
from .registry import FALLBACK_CODE, LabelingFunction, LFRegistry, normalize_answer

MAX_ATTEMPTS = 10
FIRST_ATTEMPT_TEMPERATURE = 0.0
RETRY_TEMPERATURE = 0.7

_MEDIA_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".webp": "image/webp",
    ".gif": "image/gif",
}


def resolve_image(record: MemeRecord, image_root: str | Path | None) -> Path:
    ref = Path(record.image_ref)
    if not ref.is_absolute() and image_root is not None:
        ref = Path(image_root) / ref
    return ref


def load_image_bytes(record: MemeRecord, image_root: str | Path | None) -> tuple[bytes, str]:
    path = resolve_image(record, image_root)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageLoadError(f"{record.meme_id}: cannot read image {path}: {exc}") from exc
    if not data:
        raise ImageLoadError(f"{record.meme_id}: image {path} is empty")
    return data, _MEDIA_TYPES.get(path.suffix.lower(), "image/png")


def cache_key(meme_id: str, lf: LabelingFunction, model_id: str,
              system_prompt_digest: str) -> str:
    payload = [meme_id, lf.lf_id, lf.content_hash(), model_id, system_prompt_digest]
    blob = json.dumps(payload, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class CellResult:
    code: int
    raw_final_answer: str
    attempts_used: int

    def __post_init__(self):
        if self.code == FALLBACK_CODE:
            if self.attempts_used != MAX_ATTEMPTS:
                raise ValueError("fallback requires all attempts to be spent")
        elif not 1 <= self.attempts_used <= MAX_ATTEMPTS:
            raise ValueError(f"attempts_used {self.attempts_used} out of range")


class AnswerCache:
    """Append-only JSON-lines cache of resolved cells, keyed by content digest.

    Loading tolerates a torn final line (crash mid-append); any earlier
    malformed line is corruption and raises. Appends are serialized and
    flushed per entry so a killed run loses at most the entry in flight.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, CellResult] = {}
        self._load()

    def _load(self) -> None:
        if not self._path.exists():
            return
        with self._path.open("r", encoding="utf-8") as fh:
            lines = fh.readlines()
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                result = CellResult(code=int(obj["code"]),
                                    raw_final_answer=str(obj["raw"]),
                                    attempts_used=int(obj["attempts"]))
                key = obj["key"]
            except (ValueError, KeyError, TypeError) as exc:
                if line_no == len(lines):
                    break  # torn final line from an interrupted append
                raise ParseError(str(self._path), line_no, f"bad cache entry: {exc}") from exc
            self._entries[key] = result

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> CellResult | None:
        return self._entries.get(key)

    def put(self, key: str, meme_id: str, lf_id: str, result: CellResult) -> None:
        entry = {"key": key, "meme_id": meme_id, "lf_id": lf_id,
                 "code": result.code, "raw": result.raw_final_answer,
                 "attempts": result.attempts_used}
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            self._entries[key] = result
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()


def extract_cell(meme: MemeRecord, lf: LabelingFunction, gateway: VlmBackend,
                 image_root: str | Path | None = None, *,
                 image_bytes: bytes | None = None,
                 image_media_type: str | None = None) -> CellResult:
    """Resolve one (meme, LF) cell via the retry/fallback protocol.

    Attempt 1 decodes greedily; retries resend the identical prompt at a
    higher temperature. The first answer that normalizes wins; after
    MAX_ATTEMPTS invalid answers the cell settles at the fallback code.
    """
    if image_bytes is None:
        image_bytes, image_media_type = load_image_bytes(meme, image_root)
    raw = ""
    for attempt in range(1, MAX_ATTEMPTS + 1):
        temperature = FIRST_ATTEMPT_TEMPERATURE if attempt == 1 else RETRY_TEMPERATURE
        request = VlmRequest(system_prompt=FEATURE_SYSTEM_PROMPT,
                             user_text=lf.question,
                             image_bytes=image_bytes,
                             image_media_type=image_media_type or "image/png",
                             temperature=temperature,
                             model_id=gateway.config.model_id)
        raw = gateway.ask(request, attempt=attempt).text
        code = normalize_answer(raw, lf.schema)
        if code is not None:
            return CellResult(code=code, raw_final_answer=raw, attempts_used=attempt)
    return CellResult(code=FALLBACK_CODE, raw_final_answer=raw, attempts_used=MAX_ATTEMPTS)


@dataclass
class FeatureMatrix:
    """Dense integer answer matrix: one row per meme, one column per LF."""

    meme_ids: tuple[str, ...]
    lf_ids: tuple[str, ...]
    values: np.ndarray
    registry_hash: str = ""
    model_id: str = ""

    def __post_init__(self):
        self.meme_ids = tuple(self.meme_ids)
        self.lf_ids = tuple(self.lf_ids)
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.shape != (len(self.meme_ids), len(self.lf_ids)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.meme_ids)} memes x {len(self.lf_ids)} LFs"
            )
        if self.values.size and (self.values.min() < 0 or self.values.max() > FALLBACK_CODE):
            raise ValueError("feature codes must lie in 0..6")

    @property
    def n_memes(self) -> int:
        return len(self.meme_ids)

    @property
    def n_features(self) -> int:
        return len(self.lf_ids)

    def row_index(self) -> dict[str, int]:
        return {mid: i for i, mid in enumerate(self.meme_ids)}

    def select_rows(self, meme_ids: Iterable[str]) -> "FeatureMatrix":
        """Rows for the given ids, keeping this matrix's row order."""
        wanted = set(meme_ids)
        missing = wanted - set(self.meme_ids)
        if missing:
            raise KeyError(f"unknown meme_ids: {sorted(missing)[:5]}")
        keep = [i for i, mid in enumerate(self.meme_ids) if mid in wanted]
        return FeatureMatrix(meme_ids=tuple(self.meme_ids[i] for i in keep),
                             lf_ids=self.lf_ids,
                             values=self.values[keep, :],
                             registry_hash=self.registry_hash,
                             model_id=self.model_id)

    def drop_columns(self, lf_ids: Iterable[str]) -> "FeatureMatrix":
        dropped = set(lf_ids)
        missing = dropped - set(self.lf_ids)
        if missing:
            raise KeyError(f"unknown lf_ids: {sorted(missing)[:5]}")
        keep = [j for j, fid in enumerate(self.lf_ids) if fid not in dropped]
        return FeatureMatrix(meme_ids=self.meme_ids,
                             lf_ids=tuple(self.lf_ids[j] for j in keep),
                             values=self.values[:, keep],
                             registry_hash="",
                             model_id=self.model_id)


@dataclass
class ExtractionStats:
    """Volatile run telemetry; reported alongside, never inside, artifacts."""

    cells_total: int = 0
    cache_hits: int = 0
    fresh_chains: int = 0
    gateway_calls: int = 0
    fallback_cells: int = 0
    errored_cells: int = 0
    error_examples: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cells_total": self.cells_total,
            "cache_hits": self.cache_hits,
            "fresh_chains": self.fresh_chains,
            "gateway_calls": self.gateway_calls,
            "fallback_cells": self.fallback_cells,
            "errored_cells": self.errored_cells,
            "error_examples": self.error_examples[:20],
            "cache_hit_rate": (self.cache_hits / self.cells_total
                               if self.cells_total else 0.0),
            "fallback_rate": (self.fallback_cells / self.cells_total
                              if self.cells_total else 0.0),
        }


def extract_matrix(manifest: DatasetManifest, registry: LFRegistry,
                   gateway: VlmBackend, cache: AnswerCache,
                   image_root: str | Path | None = None,
                   only_batch: str | None = None,
                   error_threshold: float = 0.01,
                   max_workers: int | None = None,
                   ) -> tuple[FeatureMatrix, ExtractionStats]:
    """Fill every (meme, LF) cell, serving settled cells from the cache.

    ``only_batch="base"`` restricts columns to the base batch.
    ``only_batch="added"`` keeps all columns but demands every base-batch
    cell be already cached (MissingBaseFeatures otherwise), so an expanded
    registry costs only |memes| x |new LFs| fresh query chains.

    Cells whose query chain dies on transport/image errors are recorded and
    temporarily filled with the fallback code without being cached (a rerun
    retries them); when more than ``error_threshold`` of all cells error,
    the run aborts instead.
    """
    if only_batch not in (None, "base", "added"):
        raise ValueError(f"only_batch must be 'base' or 'added', got {only_batch!r}")
    if only_batch == "base":
        columns = registry.batch_lfs("base")
    else:
        columns = list(registry)
    column_registry = LFRegistry(tuple(columns))
    sys_digest = prompt_digest(FEATURE_SYSTEM_PROMPT)
    model_id = gateway.config.model_id
    stats = ExtractionStats(cells_total=len(manifest) * len(columns))
    calls_before = gateway.calls

    if only_batch == "added":
        missing = [
            (meme.meme_id, lf.lf_id)
            for meme in manifest
            for lf in registry.batch_lfs("base")
            if cache_key(meme.meme_id, lf, model_id, sys_digest) not in cache
        ]
        if missing:
            shown = ", ".join(f"{m}/{l}" for m, l in missing[:5])
            raise MissingBaseFeatures(
                f"{len(missing)} base-batch cells absent from cache; first: {shown}"
            )

    values = np.zeros((len(manifest), len(columns)), dtype=np.int64)
    pending: list[tuple[int, int, MemeRecord, LabelingFunction]] = []
    for i, meme in enumerate(manifest):
        for j, lf in enumerate(columns):
            key = cache_key(meme.meme_id, lf, model_id, sys_digest)
            hit = cache.get(key)
            if hit is not None:
                values[i, j] = hit.code
                stats.cache_hits += 1
                if hit.code == FALLBACK_CODE:
                    stats.fallback_cells += 1
            else:
                pending.append((i, j, meme, lf))

    lock = threading.Lock()

    def resolve(task: tuple[int, int, MemeRecord, LabelingFunction]) -> None:
        i, j, meme, lf = task
        try:
            data, media = load_image_bytes(meme, image_root)
            result = extract_cell(meme, lf, gateway,
                                  image_bytes=data, image_media_type=media)
        except (TransportError, ImageLoadError) as exc:
            with lock:
                values[i, j] = FALLBACK_CODE
                stats.errored_cells += 1
                stats.fallback_cells += 1
                if len(stats.error_examples) < 20:
                    stats.error_examples.append(f"{meme.meme_id}/{lf.lf_id}: {exc}")
            return
        cache.put(cache_key(meme.meme_id, lf, model_id, sys_digest),
                  meme.meme_id, lf.lf_id, result)
        with lock:
            values[i, j] = result.code
            stats.fresh_chains += 1
            if result.code == FALLBACK_CODE:
                stats.fallback_cells += 1

    workers = max_workers if max_workers is not None else gateway.config.max_in_flight
    if pending:
        if workers <= 1:
            for task in pending:
                resolve(task)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(resolve, pending))

    stats.gateway_calls = gateway.calls - calls_before
    if stats.cells_total and stats.errored_cells / stats.cells_total > error_threshold:
        raise ExtractionAborted(stats.errored_cells, stats.cells_total,
                                stats.error_examples)

    matrix = FeatureMatrix(meme_ids=tuple(m.meme_id for m in manifest),
                           lf_ids=tuple(lf.lf_id for lf in columns),
                           values=values,
                           registry_hash=column_registry.registry_hash,
                           model_id=model_id)
    return matrix, stats


def save_features_csv(matrix: FeatureMatrix, path: str | Path,
                      config_snapshot: dict | None = None) -> None:
    """Write the feature CSV plus its metadata sidecar (``.meta.json``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["meme_id", *matrix.lf_ids]) + "\n")
        for i, meme_id in enumerate(matrix.meme_ids):
            row = ",".join(str(int(v)) for v in matrix.values[i])
            fh.write(f"{meme_id},{row}\n")
    sidecar = {
        "registry_hash": matrix.registry_hash,
        "model_id": matrix.model_id,
        "system_prompt_sha256": prompt_digest(FEATURE_SYSTEM_PROMPT),
        "n_memes": matrix.n_memes,
        "n_features": matrix.n_features,
        "config_snapshot": config_snapshot or {},
    }
    sidecar_path = path.with_suffix(".meta.json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")


def load_features_csv(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        fields = header.split(",")
        if not fields or fields[0] != "meme_id":
            raise ParseError(str(path), 1, "first column must be meme_id")
        lf_ids = tuple(fields[1:])
        meme_ids: list[str] = []
        rows: list[list[int]] = []
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(fields):
                raise ParseError(str(path), line_no,
                                 f"expected {len(fields)} columns, got {len(parts)}")
            meme_ids.append(parts[0])
            try:
                rows.append([int(p) for p in parts[1:]])
            except ValueError as exc:
                raise ParseError(str(path), line_no, f"non-integer cell: {exc}") from exc
    values = np.asarray(rows, dtype=np.int64) if rows else np.zeros((0, len(lf_ids)), dtype=np.int64)
    registry_hash = ""
    model_id = ""
    sidecar_path = path.with_suffix(".meta.json")
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
        registry_hash = meta.get("registry_hash", "")
        model_id = meta.get("model_id", "")
    return FeatureMatrix(meme_ids=tuple(meme_ids), lf_ids=lf_ids, values=values,
                         registry_hash=registry_hash, model_id=model_id)


def labels_for(matrix: FeatureMatrix, manifest: DatasetManifest,
               ids: Sequence[str] | None = None) -> list[str]:
    """Gold labels aligned to matrix rows (optionally restricted to ids)."""
    by_id = {r.meme_id: r for r in manifest}
    wanted = set(ids) if ids is not None else None
    labels: list[str] = []
    for meme_id in matrix.meme_ids:
        if wanted is not None and meme_id not in wanted:
            continue
        record = by_id.get(meme_id)
        if record is None or record.gold_label is None:
            raise KeyError(f"no gold label for meme {meme_id}")
        labels.append(record.gold_label)
    return labels
