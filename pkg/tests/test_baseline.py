from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from promptlf.baseline import (BASELINE_LABELS, BASELINE_TO_GOLD,
                               BASELINE_USER_TEXT, UNPARSEABLE,
                               BaselinePrediction, baseline_answer_sets,
                               classify, classify_batch, classify_direct,
                               classify_reasoning, evaluate_baseline,
                               parse_direct, parse_reasoning,
                               save_predictions_csv, save_transcripts,
                               unparseable_rate)
from promptlf.dataset import MemeRecord, load_manifest
from promptlf.extraction import MAX_ATTEMPTS
from promptlf.gateway import (BASELINE_DIRECT_SYSTEM_PROMPT,
                              BASELINE_REASONING_SYSTEM_PROMPT, BackendConfig,
                              MockBackend, ScriptedBackend)

from conftest import make_corpus


def _meme() -> MemeRecord:
    return MemeRecord(meme_id="m0", image_ref="m0.png", language="en",
                      gold_label="Homophobic")


class RecordingBackend(ScriptedBackend):
    def __init__(self, script):
        super().__init__(script)
        self.requests = []

    def ask(self, request, attempt=1):
        self.requests.append(request)
        return super().ask(request, attempt)


# --- parsing ---------------------------------------------------------------

@pytest.mark.parametrize("raw,label", [
    ("Transphobia", "Transphobia"),
    ("Homophobia", "Homophobia"),
    ("Non_Anti_LGBT", "Non_Anti_LGBT"),
    ("non anti lgbt", "Non_Anti_LGBT"),
    ("NON_ANTI_LGBT", "Non_Anti_LGBT"),
    ("  homophobia.  ", "Homophobia"),
    ("transphobia!", "Transphobia"),
    ("non_anti lgbt", "Non_Anti_LGBT"),
])
def test_parse_direct_accepts_label_variants(raw, label):
    assert parse_direct(raw) == label


@pytest.mark.parametrize("raw", [
    "This meme is transphobic.",
    "I think the answer is Homophobia",
    "anti lgbt",
    "",
    "Homophobia and Transphobia",
])
def test_parse_direct_rejects_prose(raw):
    assert parse_direct(raw) is None


def test_parse_reasoning_extracts_tagged_label():
    raw = ("<reason>\nThe meme mocks a gay couple.\n</reason>\n\n"
           "<output>\nHomophobia\n</output>")
    assert parse_reasoning(raw) == "Homophobia"


def test_parse_reasoning_first_well_formed_pair_wins():
    raw = ("<output>Transphobia</output> ignored tail "
           "<output>Homophobia</output>")
    assert parse_reasoning(raw) == "Transphobia"
    nested = "<output>noise <output>Homophobia</output>"
    # The first <output> opens the pair; its body fails label matching.
    assert parse_reasoning(nested) is None


def test_parse_reasoning_rejects_label_outside_tags():
    assert parse_reasoning("The label is Homophobia.") is None
    assert parse_reasoning("<output>Homophobia") is None
    assert parse_reasoning("Homophobia</output>") is None
    assert parse_reasoning("<output></output>") is None


# --- classify retry protocol ----------------------------------------------

def test_classify_direct_first_attempt_hit():
    backend = RecordingBackend(["Transphobia"])
    prediction = classify(_meme(), backend, "direct", image_bytes=b"img")
    assert prediction.label == "Transphobia"
    assert prediction.attempts == 1
    assert prediction.raw == "Transphobia"
    request = backend.requests[0]
    assert request.system_prompt == BASELINE_DIRECT_SYSTEM_PROMPT
    assert request.user_text == BASELINE_USER_TEXT["direct"]
    assert request.max_output_tokens == 16
    assert request.temperature == 0.0


def test_classify_retries_then_succeeds():
    backend = RecordingBackend(["gibberish", "more prose", "non anti lgbt"])
    prediction = classify(_meme(), backend, "direct", image_bytes=b"img")
    assert prediction.label == "Non_Anti_LGBT"
    assert prediction.attempts == 3
    assert [r.temperature for r in backend.requests] == [0.0, 0.7, 0.7]


def test_classify_unparseable_after_all_attempts():
    backend = RecordingBackend(["never a label"])
    prediction = classify(_meme(), backend, "direct", image_bytes=b"img")
    assert prediction.label == UNPARSEABLE
    assert prediction.attempts == MAX_ATTEMPTS
    assert backend.calls == MAX_ATTEMPTS


def test_classify_reasoning_request_shape_and_retry():
    tagged = "<reason>\nwhy\n</reason>\n\n<output>\nTransphobia\n</output>"
    backend = RecordingBackend(["The label is Homophobia.", tagged])
    prediction = classify(_meme(), backend, "reasoning", image_bytes=b"img")
    assert prediction.label == "Transphobia"
    assert prediction.attempts == 2
    assert prediction.raw == tagged  # reason text retained
    request = backend.requests[0]
    assert request.system_prompt == BASELINE_REASONING_SYSTEM_PROMPT
    assert request.user_text == BASELINE_USER_TEXT["reasoning"]
    assert request.max_output_tokens == 512


def test_classify_rejects_unknown_mode():
    backend = RecordingBackend(["x"])
    with pytest.raises(ValueError):
        classify(_meme(), backend, "chain", image_bytes=b"img")


def test_classify_mode_helpers(tmp_path: Path):
    manifest_path, root = make_corpus(tmp_path / "corpus", 1)
    manifest = load_manifest(manifest_path, split="train")
    backend = MockBackend(BackendConfig(mock_seed=0),
                          answer_sets=baseline_answer_sets())
    direct = classify_direct(manifest.records[0], backend, image_root=root)
    reasoning = classify_reasoning(manifest.records[0], backend, image_root=root)
    assert direct.mode == "direct"
    assert reasoning.mode == "reasoning"
    assert direct.label in (*BASELINE_LABELS, UNPARSEABLE)
    assert reasoning.label in (*BASELINE_LABELS, UNPARSEABLE)


# --- batch + evaluation ----------------------------------------------------

def test_classify_batch_preserves_manifest_order(tmp_path: Path):
    manifest_path, root = make_corpus(tmp_path / "corpus", 6)
    manifest = load_manifest(manifest_path, split="train")
    backend = MockBackend(BackendConfig(mock_seed=3),
                          answer_sets=baseline_answer_sets())
    batch = classify_batch(manifest, backend, "direct", image_root=root)
    assert [p.meme_id for p in batch] == list(manifest.meme_ids)
    serial = classify_batch(manifest, backend, "direct", image_root=root,
                            max_workers=1)
    assert [(p.meme_id, p.label, p.attempts) for p in batch] \
        == [(p.meme_id, p.label, p.attempts) for p in serial]


def test_evaluate_baseline_maps_spellings(tmp_path: Path):
    manifest_path, _ = make_corpus(tmp_path / "corpus", 3)
    manifest = load_manifest(manifest_path, split="train")
    # Labels cycle Homophobic, Transphobic, NonAntiLGBT; predict all three
    # correctly in prompt spelling.
    predictions = [
        BaselinePrediction("m000", "direct", "Homophobia", "Homophobia", 1),
        BaselinePrediction("m001", "direct", "Transphobia", "Transphobia", 1),
        BaselinePrediction("m002", "direct", "Non_Anti_LGBT", "non anti lgbt", 2),
    ]
    report = evaluate_baseline(predictions, manifest, split_tag="test")
    assert report.macro_f1 == 1.0
    assert report.split_tag == "test"


def test_evaluate_baseline_unparseable_is_always_wrong(tmp_path: Path):
    manifest_path, _ = make_corpus(tmp_path / "corpus", 3)
    manifest = load_manifest(manifest_path, split="train")
    predictions = [
        BaselinePrediction("m000", "direct", "Homophobia", "", 1),
        BaselinePrediction("m001", "direct", UNPARSEABLE, "prose", 10),
        BaselinePrediction("m002", "direct", UNPARSEABLE, "prose", 10),
    ]
    report = evaluate_baseline(predictions, manifest)
    # Homophobic: perfect; the other two classes score 0 via Unparseable.
    assert report.macro_f1 == pytest.approx(1 / 3)
    assert "Unparseable" in report.classes
    assert unparseable_rate(predictions) == pytest.approx(2 / 3)
    assert unparseable_rate([]) == 0.0


def test_evaluate_baseline_requires_gold(tmp_path: Path):
    manifest_path, _ = make_corpus(tmp_path / "corpus", 2, labeled=False)
    manifest = load_manifest(manifest_path, split="test")
    predictions = [BaselinePrediction("m000", "direct", "Homophobia", "", 1)]
    with pytest.raises(KeyError):
        evaluate_baseline(predictions, manifest)


def test_baseline_to_gold_covers_labels():
    assert set(BASELINE_TO_GOLD) == {*BASELINE_LABELS, UNPARSEABLE}
    assert BASELINE_TO_GOLD[UNPARSEABLE] == UNPARSEABLE
    gold_side = {BASELINE_TO_GOLD[l] for l in BASELINE_LABELS}
    assert gold_side == {"Homophobic", "Transphobic", "NonAntiLGBT"}


def test_baseline_answer_sets_shapes():
    sets = baseline_answer_sets()
    assert set(sets) == {BASELINE_USER_TEXT["direct"],
                         BASELINE_USER_TEXT["reasoning"]}
    assert all(parse_direct(s) for s in sets[BASELINE_USER_TEXT["direct"]][:3])
    reasoning = sets[BASELINE_USER_TEXT["reasoning"]]
    parsed = [parse_reasoning(s) for s in reasoning]
    assert parsed[:3] == list(BASELINE_LABELS)
    assert parsed[3] is None  # deliberate malformed variant


# --- artifacts -------------------------------------------------------------

def test_save_predictions_csv_and_transcripts(tmp_path: Path):
    predictions = [
        BaselinePrediction("m000", "direct", "Homophobia", "Homophobia", 1),
        BaselinePrediction("m001", "direct", UNPARSEABLE, "prose body", 10),
    ]
    csv_path = tmp_path / "predictions.csv"
    save_predictions_csv(predictions, csv_path)
    rows = list(csv.reader(csv_path.open(encoding="utf-8")))
    assert rows[0] == ["meme_id", "mode", "label", "attempts"]
    assert rows[1] == ["m000", "direct", "Homophobia", "1"]
    assert rows[2] == ["m001", "direct", "Unparseable", "10"]

    raw_path = tmp_path / "transcripts.jsonl"
    save_transcripts(predictions, raw_path)
    lines = raw_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert json.loads(lines[1])["raw"] == "prose body"
