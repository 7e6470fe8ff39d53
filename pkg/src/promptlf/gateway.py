"""Vision-language-model backends and the system prompts they serve.

Two backends implement the same interface: an HTTP backend speaking the
chat-completion wire format with an inline base64 image, and a hash-based
mock whose answers are a pure function of (image digest, question, attempt,
config) so whole pipeline runs are bit-reproducible offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .errors import AuthError, ConfigError, RequestTimeout, TransportError
from .registry import LFRegistry

FEATURE_SYSTEM_PROMPT = """You are a labeling system.

You will be shown a meme image and then asked a single question about it.

Rules:
- Do NOT explain your reasoning.
- Do NOT add extra words, punctuation, or commentary.
- Output only the answer.
- Be concise and deterministic.
- If unsure, choose the closest valid answer.
- The meme may contain English, Hindi, or Chinese text.
- Focus on meaning rather than language.
- Watch for sarcasm or parody.
- If the meme criticizes hateful views, do NOT mark it as hateful.
- Never include explanations.
- Never include multiple answers."""

BASELINE_DIRECT_SYSTEM_PROMPT = """You are a labeling system.

You will be shown a meme image.

Your task is to classify the meme into exactly one of the following categories:
- Homophobia
- Transphobia
- Non_Anti_LGBT

Rules:
- Do NOT explain your reasoning.
- Do NOT add extra words, punctuation, or commentary.
- Output only one of the three labels exactly as written.
- Be concise and deterministic.
- If unsure, choose the closest valid label.
- The meme may contain English, Hindi, or Chinese text.
- Focus on meaning rather than language.
- Watch for sarcasm, irony, or parody.
- If the meme criticizes or mocks homophobia or transphobia, classify it as Non_Anti_LGBT.
- The label should reflect the target and intent of the meme, not just keywords.
- Never include explanations.
- Never include multiple labels."""

BASELINE_REASONING_SYSTEM_PROMPT = """You are a labeling system.

You will be shown a meme image.

Your task is to classify the meme into exactly one of the following categories:
- Homophobia
- Transphobia
- Non_Anti_LGBT

Instructions:
- Carefully analyze the meme step by step.
- Consider text, visuals, context, sarcasm, irony, and intent.
- Explicitly explain your reasoning before giving the final label.

Rules:
- The meme may contain English, Hindi, or Chinese text.
- Focus on meaning rather than language.
- Watch for sarcasm, irony, or parody.
- If the meme criticizes or mocks homophobia or transphobia, classify it as Non_Anti_LGBT.
- The label should reflect the target and intent of the meme, not just keywords.
- If unsure, choose the closest valid label.

Output format (strictly follow this format):

<reason>
Your step-by-step reasoning here.
</reason>

<output>
One label only: Homophobia, Transphobia, or Non_Anti_LGBT
</output>

- Do NOT put the label outside the <output> tags.
- Do NOT include anything outside these tags.
- Do NOT include multiple labels.
- Ensure the final answer appears only inside <output> tags."""

BASELINE_MODES = ("direct", "reasoning")

# Text the mock emits when forced (or unable) to answer from a vocabulary.
MOCK_INVALID_TEXT = "UNPARSEABLE"


def feature_system_prompt() -> str:
    """System prompt for per-question feature extraction (constant)."""
    return FEATURE_SYSTEM_PROMPT


def baseline_system_prompt(mode: str) -> str:
    """System prompt for the direct or reasoning classification baseline."""
    if mode == "direct":
        return BASELINE_DIRECT_SYSTEM_PROMPT
    if mode == "reasoning":
        return BASELINE_REASONING_SYSTEM_PROMPT
    raise ValueError(f"unknown baseline mode {mode!r}")


def prompt_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class VlmRequest:
    system_prompt: str
    user_text: str
    image_bytes: bytes
    image_media_type: str = "image/png"
    temperature: float = 0.0
    max_output_tokens: int = 16
    model_id: str = ""

    def __post_init__(self):
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass
class VlmResponse:
    text: str
    latency_ms: float
    attempt: int


@dataclass
class BackendConfig:
    kind: str = "mock"
    endpoint_url: str | None = None
    api_key_env: str | None = None
    model_id: str = "mock-vlm"
    timeout_s: float = 60.0
    max_retries_transport: int = 3
    max_in_flight: int = 8
    mock_invalid_probability: float = 0.0
    mock_seed: int = 0
    audit_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("http", "mock"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint_url:
            raise ConfigError("http backend requires endpoint_url")
        if not 0.0 <= self.mock_invalid_probability <= 1.0:
            raise ConfigError("mock_invalid_probability must be in [0, 1]")


class AuditLog:
    """Optional JSON-lines call log; prompts are redacted to digests."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, request: VlmRequest, response: VlmResponse) -> None:
        entry = {
            "model_id": request.model_id,
            "system_prompt_sha256": prompt_digest(request.system_prompt),
            "user_text_sha256": prompt_digest(request.user_text),
            "image_sha256": hashlib.sha256(request.image_bytes).hexdigest(),
            "temperature": request.temperature,
            "attempt": response.attempt,
            "latency_ms": round(response.latency_ms, 3),
            "response_text": response.text,
        }
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class VlmBackend:
    """Base backend: call counting and optional audit logging."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._calls = 0
        self._lock = threading.Lock()
        self._audit = AuditLog(config.audit_path) if config.audit_path else None

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls

    def reset_calls(self) -> None:
        with self._lock:
            self._calls = 0

    def ask(self, request: VlmRequest, attempt: int = 1) -> VlmResponse:
        if not request.image_bytes:
            raise ValueError("request image is empty")
        started = time.perf_counter()
        text = self._answer(request, attempt)
        response = VlmResponse(text=text,
                               latency_ms=(time.perf_counter() - started) * 1000.0,
                               attempt=attempt)
        with self._lock:
            self._calls += 1
        if self._audit is not None:
            self._audit.record(request, response)
        return response

    def _answer(self, request: VlmRequest, attempt: int) -> str:
        raise NotImplementedError


class MockBackend(VlmBackend):
    """Deterministic offline stand-in for a hosted VLM.

    The answer for a call is a pure function of (image digest, user text,
    attempt, mock seed): a 256-bit hash drives both the invalid-answer coin
    flip and the pick from the vocabulary registered for that user text.
    Unknown user texts always come back unparseable.
    """

    def __init__(self, config: BackendConfig,
                 answer_sets: Mapping[str, Sequence[str]] | None = None):
        super().__init__(config)
        self._answer_sets = {k: tuple(v) for k, v in (answer_sets or {}).items()}

    def _answer(self, request: VlmRequest, attempt: int) -> str:
        image_digest = hashlib.sha256(request.image_bytes).hexdigest()
        seed_blob = f"{self.config.mock_seed}|{image_digest}|{request.user_text}|{attempt}"
        key = hashlib.sha256(seed_blob.encode("utf-8")).digest()
        vocab = self._answer_sets.get(request.user_text)
        if vocab is None:
            return MOCK_INVALID_TEXT
        coin = int.from_bytes(key[:8], "big") / 2.0 ** 64
        if coin < self.config.mock_invalid_probability:
            return MOCK_INVALID_TEXT
        pick = int.from_bytes(key[8:16], "big") % len(vocab)
        return vocab[pick]


class ScriptedBackend(VlmBackend):
    """Plays back a fixed sequence of responses; for retry-protocol tests.

    Script entries may be strings (returned) or exceptions (raised). The
    script index advances per call; when exhausted the last entry repeats.
    """

    def __init__(self, script: Sequence[str | Exception],
                 config: BackendConfig | None = None):
        super().__init__(config or BackendConfig(kind="mock"))
        if not script:
            raise ValueError("script must be non-empty")
        self._script = list(script)
        self._cursor = 0
        self._cursor_lock = threading.Lock()

    def _answer(self, request: VlmRequest, attempt: int) -> str:
        with self._cursor_lock:
            entry = self._script[min(self._cursor, len(self._script) - 1)]
            self._cursor += 1
        if isinstance(entry, Exception):
            raise entry
        return entry


class HttpBackend(VlmBackend):
    """Chat-completion HTTP backend with inline base64 image attachment."""

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        self._local = threading.local()
        self._api_key = None
        if config.api_key_env:
            self._api_key = os.environ.get(config.api_key_env)
            if not self._api_key:
                raise AuthError(f"environment variable {config.api_key_env!r} is not set")

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _payload(self, request: VlmRequest) -> dict:
        encoded = base64.b64encode(request.image_bytes).decode("ascii")
        data_url = f"data:{request.image_media_type};base64,{encoded}"
        return {
            "model": request.model_id or self.config.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": [
                    {"type": "text", "text": request.user_text},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ]},
            ],
        }

    def _answer(self, request: VlmRequest, attempt: int) -> str:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = self._payload(request)
        last_error: Exception | None = None
        for transport_try in range(self.config.max_retries_transport):
            if transport_try:
                time.sleep(min(0.5 * 2 ** (transport_try - 1), 4.0))
            try:
                resp = self._session().post(self.config.endpoint_url, json=payload,
                                            headers=headers, timeout=self.config.timeout_s)
            except requests.Timeout as exc:
                last_error = RequestTimeout(str(exc))
                continue
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint returned {resp.status_code}")
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = TransportError(f"endpoint returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                content = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed response body: {exc}") from exc
            if not isinstance(content, str):
                raise TransportError("response content is not text")
            return content
        assert last_error is not None
        raise last_error


def lf_answer_sets(registry: LFRegistry) -> dict[str, tuple[str, ...]]:
    """Mock vocabulary for every LF question: its declared answer surfaces."""
    return {lf.question: lf.schema.surfaces for lf in registry}


def build_backend(config: BackendConfig,
                  answer_sets: Mapping[str, Sequence[str]] | None = None) -> VlmBackend:
    if config.kind == "http":
        return HttpBackend(config)
    return MockBackend(config, answer_sets=answer_sets)
