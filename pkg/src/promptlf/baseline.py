"""Direct VLM classification baselines (single-shot and reasoning-tagged).

Both modes send a fixed system prompt and parse the reply into one of three
label strings. Replies that refuse to parse are retried up to the same
ten-attempt limit as feature extraction, then marked Unparseable — which
scores as always wrong, never as a dropped example.
"""

from __future__ import annotations

import csv
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .dataset import DatasetManifest, MemeRecord
from .extraction import MAX_ATTEMPTS, FIRST_ATTEMPT_TEMPERATURE, RETRY_TEMPERATURE, load_image_bytes
from .gateway import BASELINE_MODES, VlmBackend, VlmRequest, baseline_system_prompt
from .metrics import EvaluationReport, macro_f1

BASELINE_LABELS = ("Homophobia", "Transphobia", "Non_Anti_LGBT")
UNPARSEABLE = "Unparseable"

# The prompts spell labels one way, the dataset another; evaluation happens
# in dataset spelling. Unparseable maps to itself so it can never match gold.
BASELINE_TO_GOLD = {
    "Homophobia": "Homophobic",
    "Transphobia": "Transphobic",
    "Non_Anti_LGBT": "NonAntiLGBT",
    UNPARSEABLE: UNPARSEABLE,
}

# Fixed user-turn text per mode; the task itself lives in the system prompt.
BASELINE_USER_TEXT = {
    "direct": "Classify this meme.",
    "reasoning": "Classify this meme. Think step by step.",
}

_MAX_TOKENS = {"direct": 16, "reasoning": 512}

_CANONICAL = {re.sub(r"[\s_]+", " ", label).lower(): label
              for label in BASELINE_LABELS}

_OUTPUT_TAG = re.compile(r"<output>(.*?)</output>", re.DOTALL)


@dataclass
class BaselinePrediction:
    meme_id: str
    mode: str
    label: str
    raw: str
    attempts: int


def _normalize_label(text: str) -> str | None:
    """Case-insensitive, underscore/space-tolerant match to a label string."""
    key = text.strip().rstrip(".,!").strip()
    key = re.sub(r"[\s_]+", " ", key).lower()
    return _CANONICAL.get(key)


def parse_direct(raw: str) -> str | None:
    return _normalize_label(raw)


def parse_reasoning(raw: str) -> str | None:
    """Label from the first well-formed <output> pair; None otherwise."""
    match = _OUTPUT_TAG.search(raw)
    if match is None:
        return None
    return _normalize_label(match.group(1))


def classify(meme: MemeRecord, gateway: VlmBackend, mode: str,
             image_root: str | Path | None = None, *,
             image_bytes: bytes | None = None,
             image_media_type: str | None = None) -> BaselinePrediction:
    if mode not in BASELINE_MODES:
        raise ValueError(f"unknown baseline mode {mode!r}")
    if image_bytes is None:
        image_bytes, image_media_type = load_image_bytes(meme, image_root)
    parser = parse_direct if mode == "direct" else parse_reasoning
    raw = ""
    for attempt in range(1, MAX_ATTEMPTS + 1):
        temperature = FIRST_ATTEMPT_TEMPERATURE if attempt == 1 else RETRY_TEMPERATURE
        request = VlmRequest(system_prompt=baseline_system_prompt(mode),
                             user_text=BASELINE_USER_TEXT[mode],
                             image_bytes=image_bytes,
                             image_media_type=image_media_type or "image/png",
                             temperature=temperature,
                             max_output_tokens=_MAX_TOKENS[mode],
                             model_id=gateway.config.model_id)
        raw = gateway.ask(request, attempt=attempt).text
        label = parser(raw)
        if label is not None:
            return BaselinePrediction(meme_id=meme.meme_id, mode=mode,
                                      label=label, raw=raw, attempts=attempt)
    return BaselinePrediction(meme_id=meme.meme_id, mode=mode,
                              label=UNPARSEABLE, raw=raw, attempts=MAX_ATTEMPTS)


def classify_direct(meme: MemeRecord, gateway: VlmBackend,
                    image_root: str | Path | None = None) -> BaselinePrediction:
    return classify(meme, gateway, "direct", image_root)


def classify_reasoning(meme: MemeRecord, gateway: VlmBackend,
                       image_root: str | Path | None = None) -> BaselinePrediction:
    return classify(meme, gateway, "reasoning", image_root)


def classify_batch(manifest: DatasetManifest, gateway: VlmBackend, mode: str,
                   image_root: str | Path | None = None,
                   max_workers: int | None = None) -> list[BaselinePrediction]:
    """Classify every meme; output order follows manifest order."""
    records = list(manifest)
    out: list[BaselinePrediction | None] = [None] * len(records)
    lock = threading.Lock()

    def run(i: int) -> None:
        prediction = classify(records[i], gateway, mode, image_root)
        with lock:
            out[i] = prediction

    workers = max_workers if max_workers is not None else gateway.config.max_in_flight
    if workers <= 1 or len(records) <= 1:
        for i in range(len(records)):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(len(records))))
    return [p for p in out if p is not None]


def evaluate_baseline(predictions: Sequence[BaselinePrediction],
                      manifest: DatasetManifest,
                      split_tag: str = "validation") -> EvaluationReport:
    by_id = {r.meme_id: r for r in manifest}
    gold: list[str] = []
    mapped: list[str] = []
    for p in predictions:
        record = by_id.get(p.meme_id)
        if record is None or record.gold_label is None:
            raise KeyError(f"no gold label for meme {p.meme_id}")
        gold.append(record.gold_label)
        mapped.append(BASELINE_TO_GOLD[p.label])
    return macro_f1(gold, mapped, split_tag=split_tag)


def unparseable_rate(predictions: Sequence[BaselinePrediction]) -> float:
    if not predictions:
        return 0.0
    return sum(1 for p in predictions if p.label == UNPARSEABLE) / len(predictions)


def save_predictions_csv(predictions: Sequence[BaselinePrediction],
                         path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["meme_id", "mode", "label", "attempts"])
        for p in predictions:
            writer.writerow([p.meme_id, p.mode, p.label, p.attempts])


def baseline_answer_sets() -> dict[str, tuple[str, ...]]:
    """Mock vocabulary for the two baseline user texts.

    The reasoning variants come pre-wrapped in tags; one malformed variant
    (label outside the tags) is included so mock runs exercise the retry
    path the way a real model would.
    """
    wrapped = tuple(
        f"<reason>\nThe meme's text and imagery point at this target.\n</reason>\n\n"
        f"<output>\n{label}\n</output>"
        for label in BASELINE_LABELS
    )
    return {
        BASELINE_USER_TEXT["direct"]: (*BASELINE_LABELS, "non anti lgbt"),
        BASELINE_USER_TEXT["reasoning"]: (*wrapped, "The label is Homophobia."),
    }


def save_transcripts(predictions: Sequence[BaselinePrediction],
                     path: str | Path) -> None:
    """Optional raw-response log (JSON lines), one entry per meme."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps({"meme_id": p.meme_id, "mode": p.mode,
                                 "label": p.label, "attempts": p.attempts,
                                 "raw": p.raw}, ensure_ascii=False) + "\n")
