"""Provider-agnostic LLM client: batched generation with retries and an offline mock."""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

SPEAKERS = ("Patient", "Clinician")
PROVENANCES = ("template", "llm", "ngram", "gan", "mixture")


class ProviderError(Exception):
    """Base class for provider failures."""


class TransientProviderError(ProviderError):
    """Retryable failure: timeout, rate limit, or 5xx-class response."""


class PermanentProviderError(ProviderError):
    """Non-retryable failure: 4xx-class response or malformed payload."""


class TranscriptParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class GenerationRequest:
    request_id: str
    prompt: str
    model: str = "default"
    temperature: float = 0.7
    max_tokens: int = 512
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.request_id:
            raise ValueError("request_id must be nonempty")
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class ProviderResult:
    completion: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0


@dataclass(frozen=True)
class GenerationResponse:
    request_id: str
    completion: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    attempts: int


@dataclass(frozen=True)
class BatchError:
    request_id: str
    message: str
    attempts: int
    permanent: bool


class Provider(Protocol):
    def complete(self, request: GenerationRequest) -> ProviderResult: ...


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str

    def __post_init__(self):
        if self.speaker not in SPEAKERS:
            raise ValueError(f"speaker must be one of {SPEAKERS}")
        if not self.text.strip():
            raise ValueError("turn text must be nonempty")


@dataclass(frozen=True)
class TranscriptRecord:
    turns: tuple[Turn, ...]
    scenario: str = ""
    provenance: str = "llm"

    def __post_init__(self):
        if not self.turns:
            raise ValueError("a transcript needs at least one turn")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")

    def to_text(self) -> str:
        return " ".join(f"{t.speaker}: {t.text}" for t in self.turns)

    def as_dict(self) -> dict:
        return {
            "turns": [{"speaker": t.speaker, "text": t.text} for t in self.turns],
            "scenario": self.scenario,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "TranscriptRecord":
        turns = tuple(Turn(t["speaker"], t["text"]) for t in record["turns"])
        return cls(turns=turns, scenario=record.get("scenario", ""),
                   provenance=record.get("provenance", "llm"))


_MARKER_RE = re.compile(r"(Patient:|Clinician:)")


def parse_transcript_response(completion: str, scenario: str = "") -> TranscriptRecord:
    """Split a completion into Patient/Clinician turns on the speaker markers.

    The concatenated markers and turn texts cover every non-whitespace
    character of the completion; anything else is a parse error carrying the
    raw text.
    """
    pieces = _MARKER_RE.split(completion)
    if len(pieces) < 3:
        raise TranscriptParseError("no Patient:/Clinician: speaker markers found", completion)
    if pieces[0].strip():
        raise TranscriptParseError(
            f"unexpected text before the first speaker marker: {pieces[0].strip()[:40]!r}",
            completion,
        )
    turns = []
    for marker, text in zip(pieces[1::2], pieces[2::2]):
        speaker = marker[:-1]
        if not text.strip():
            raise TranscriptParseError(f"empty {speaker} turn", completion)
        turns.append(Turn(speaker=speaker, text=text.strip()))
    return TranscriptRecord(turns=tuple(turns), scenario=scenario, provenance="llm")


def generate_batch(
    requests: Sequence[GenerationRequest],
    provider: Provider,
    max_retries: int = 2,
    max_inflight: int = 4,
    backoff_base: float = 0.1,
    backoff_cap: float = 5.0,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[list[GenerationResponse], list[BatchError]]:
    """Run a request batch with bounded concurrency and per-request retries.

    Transient failures back off exponentially and retry up to max_retries
    times; permanent failures and retry exhaustion become per-request errors,
    never a batch abort. Results come back sorted by request id, and a
    request id that somehow completes twice keeps its first response.
    """
    if max_inflight < 1:
        raise ValueError("max_inflight must be >= 1")
    if max_retries < 0:
        raise ValueError("max_retries must be >= 0")
    ids = [r.request_id for r in requests]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate request ids in batch: {dupes}")

    responses: dict[str, GenerationResponse] = {}
    errors: dict[str, BatchError] = {}
    lock = threading.Lock()

    def run_one(request: GenerationRequest) -> None:
        attempts = 0
        while True:
            attempts += 1
            try:
                result = provider.complete(request)
            except TransientProviderError as exc:
                if attempts > max_retries:
                    with lock:
                        errors.setdefault(request.request_id, BatchError(
                            request.request_id, f"retries exhausted: {exc}", attempts, False))
                    return
                sleep(min(backoff_cap, backoff_base * (2 ** (attempts - 1))))
                continue
            except Exception as exc:  # permanent provider errors and bugs alike
                with lock:
                    errors.setdefault(request.request_id, BatchError(
                        request.request_id, str(exc), attempts, True))
                return
            response = GenerationResponse(
                request_id=request.request_id,
                completion=result.completion,
                prompt_tokens=result.prompt_tokens,
                completion_tokens=result.completion_tokens,
                latency=result.latency,
                attempts=attempts,
            )
            with lock:
                responses.setdefault(request.request_id, response)
            return

    with ThreadPoolExecutor(max_workers=max_inflight) as pool:
        futures = [pool.submit(run_one, r) for r in requests]
        for future in futures:
            future.result()

    return (
        sorted(responses.values(), key=lambda r: r.request_id),
        sorted(errors.values(), key=lambda e: e.request_id),
    )


def prompt_key(prompt: str) -> str:
    """Stable fixture key for a prompt: first 16 hex chars of its SHA-256."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


_CONDITION_RE = re.compile(r"presenting with ([^.\n]+)")

_FALLBACK_TEMPLATE = (
    "Patient: I've been having {condition} and it has started to affect my daily life. "
    "Clinician: Thank you for sharing that. Let's go through your history and symptoms "
    "so we can work out the next steps together."
)


class MockProvider:
    """Deterministic offline provider.

    Completions come from a fixtures directory keyed by ``prompt_key`` when
    available, otherwise from a fixed template fill echoing the condition
    mentioned in the prompt. Failure scripting and an in-flight counter
    support retry and concurrency tests.
    """

    def __init__(
        self,
        fixtures_dir: str | Path | None = None,
        transient_failures: int = 0,
        permanent_ids: Sequence[str] = (),
        latency: float = 0.0,
    ):
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self.transient_failures = transient_failures
        self.permanent_ids = set(permanent_ids)
        self.latency = latency
        self.attempt_counts: dict[str, int] = {}
        self.max_observed_inflight = 0
        self._inflight = 0
        self._lock = threading.Lock()

    def complete(self, request: GenerationRequest) -> ProviderResult:
        with self._lock:
            self._inflight += 1
            self.max_observed_inflight = max(self.max_observed_inflight, self._inflight)
            self.attempt_counts[request.request_id] = (
                self.attempt_counts.get(request.request_id, 0) + 1
            )
            attempt = self.attempt_counts[request.request_id]
        try:
            if self.latency:
                time.sleep(self.latency)
            if attempt <= self.transient_failures:
                raise TransientProviderError(f"scripted transient failure {attempt}")
            if request.request_id in self.permanent_ids:
                raise PermanentProviderError("scripted permanent failure")
            completion = self._lookup(request.prompt)
            return ProviderResult(
                completion=completion,
                prompt_tokens=len(request.prompt.split()),
                completion_tokens=len(completion.split()),
                latency=self.latency,
            )
        finally:
            with self._lock:
                self._inflight -= 1

    def _lookup(self, prompt: str) -> str:
        if self.fixtures_dir is not None:
            candidate = self.fixtures_dir / f"{prompt_key(prompt)}.txt"
            if candidate.exists():
                return candidate.read_text("utf-8")
        m = _CONDITION_RE.search(prompt)
        condition = m.group(1).strip() if m else "the symptoms you describe"
        return _FALLBACK_TEMPLATE.format(condition=condition)


class HttpProvider:
    """Generic JSON-over-HTTP provider.

    POSTs {model, prompt, temperature, max_tokens, stop} to the endpoint and
    expects {completion, usage: {prompt_tokens, completion_tokens}} back.
    Timeouts and 429/5xx responses are transient; other HTTP errors are
    permanent.
    """

    def __init__(self, endpoint: str, auth_token: str = "", timeout: float = 30.0):
        self.endpoint = endpoint
        self.auth_token = auth_token
        self.timeout = timeout

    def complete(self, request: GenerationRequest) -> ProviderResult:
        body = json.dumps({
            "model": request.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": list(request.stop),
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers)
        started = time.monotonic()
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code == 429 or exc.code >= 500:
                raise TransientProviderError(f"HTTP {exc.code}") from exc
            raise PermanentProviderError(f"HTTP {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError) as exc:
            raise TransientProviderError(str(exc)) from exc
        if "completion" not in payload:
            raise PermanentProviderError("response is missing the completion field")
        usage = payload.get("usage", {})
        return ProviderResult(
            completion=payload["completion"],
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency=time.monotonic() - started,
        )
