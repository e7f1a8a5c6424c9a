"""Reasoning backends: wire requests, retrying invocation, and offline mocks.

A BackendProfile describes one chat-completion endpoint (real or mock) and
its dialect. build_request turns a PromptSpec into the wire body; invoke
executes it with bounded concurrency and exponential backoff and returns the
verbatim response payload for audit and offline re-parsing.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import (
    AuthMissing,
    BackendExhausted,
    DataError,
    DialectMismatch,
    FingerprintMismatch,
    NonRetryableStatus,
)
from .labels import normalize_label
from .prompts import (
    LABEL_LIST_MARKER,
    SYSTEM_LABEL_MARKER,
    SYSTEM_LABEL_SUFFIX,
    Dialect,
    PromptSpec,
)

DEFAULT_RETRYABLE_STATUSES = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_backoff_ms: int = 500
    retryable_status_codes: tuple[int, ...] = DEFAULT_RETRYABLE_STATUSES

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class BackendProfile:
    """One reasoning backend: endpoint, dialect, and client policy.

    base_url is the chat endpoint to POST to; "mock://keyword" and
    "mock://oracle" select the built-in offline backends. api_flavor picks
    between the OpenAI-compatible and the Anthropic-style wire shape.
    """

    name: str
    base_url: str
    dialect: Dialect
    model_id: str = ""
    auth_env_var: str = ""
    max_in_flight: int = 4
    retry_policy: RetryPolicy = field(default_factory=RetryPolicy)
    api_flavor: str = "openai"

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.api_flavor not in ("openai", "anthropic"):
            raise ValueError(f"unknown api_flavor {self.api_flavor!r}")


def load_profiles(path: str | Path) -> dict[str, BackendProfile]:
    """Load backend profiles from a JSON list; see configs/profiles.example.json."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    profiles: dict[str, BackendProfile] = {}
    for item in raw:
        try:
            policy = RetryPolicy(
                max_attempts=item.get("retry_policy", {}).get("max_attempts", 4),
                base_backoff_ms=item.get("retry_policy", {}).get("base_backoff_ms", 500),
                retryable_status_codes=tuple(
                    item.get("retry_policy", {}).get(
                        "retryable_status_codes", DEFAULT_RETRYABLE_STATUSES
                    )
                ),
            )
            profile = BackendProfile(
                name=item["name"],
                base_url=item["base_url"],
                dialect=Dialect(item["dialect"]),
                model_id=item.get("model_id", ""),
                auth_env_var=item.get("auth_env_var", ""),
                max_in_flight=item.get("max_in_flight", 4),
                retry_policy=policy,
                api_flavor=item.get("api_flavor", "openai"),
            )
        except (KeyError, ValueError) as exc:
            raise DataError(f"profiles {path}: {exc}") from exc
        if profile.name in profiles:
            raise DataError(f"profiles {path}: duplicate name {profile.name!r}")
        profiles[profile.name] = profile
    if not profiles:
        raise DataError(f"profiles {path}: no profiles defined")
    return profiles


@dataclass(frozen=True)
class WireRequest:
    """A prepared backend call: the JSON body plus routing metadata."""

    body: dict
    dialect: Dialect
    video_id: str
    prompt_fingerprint: str


@dataclass(frozen=True)
class BackendResult:
    """What one attempt against a backend produced."""

    status_code: int
    payload: str
    tool_arguments: str | None = None


@dataclass(frozen=True)
class RawResponse:
    """Verbatim backend response, preserved byte-exact for audit and replay."""

    video_id: str
    prompt_fingerprint: str
    payload: str
    tool_arguments: str | None
    latency_ms: int
    attempt_count: int


# ---------------------------------------------------------------------------
# request construction
# ---------------------------------------------------------------------------

CLASSIFY_FUNCTION_NAME = "classify_video"


def _labels_schema(enum: tuple[str, ...]) -> dict:
    return {
        "type": "object",
        "properties": {
            "labels": {
                "type": "array",
                "minItems": 1,
                "maxItems": 5,
                "items": {"type": "string", "enum": list(enum)},
            }
        },
        "required": ["labels"],
    }


def build_request(spec: PromptSpec, profile: BackendProfile, video_id: str = "") -> WireRequest:
    """Turn a PromptSpec into the wire body for this profile.

    For FUNCTION_CALL the body declares a single forced function whose
    "labels" parameter is constrained to the enum of permitted class names.

    Raises:
        DialectMismatch: spec and profile disagree on the dialect.
    """
    if spec.dialect is not profile.dialect:
        raise DialectMismatch(
            f"prompt dialect {spec.dialect.value} != profile dialect {profile.dialect.value}"
        )

    if profile.api_flavor == "anthropic":
        body: dict = {
            "model": profile.model_id,
            "system": spec.system_text,
            "messages": [{"role": "user", "content": spec.user_text}],
            "temperature": spec.temperature,
            "max_tokens": 1024,
        }
        if spec.dialect is Dialect.FUNCTION_CALL:
            body["tools"] = [
                {
                    "name": CLASSIFY_FUNCTION_NAME,
                    "description": "Report the ranked action labels for the video.",
                    "input_schema": _labels_schema(spec.label_enum or ()),
                }
            ]
            body["tool_choice"] = {"type": "tool", "name": CLASSIFY_FUNCTION_NAME}
    else:
        body = {
            "model": profile.model_id,
            "messages": [
                {"role": "system", "content": spec.system_text},
                {"role": "user", "content": spec.user_text},
            ],
            "temperature": spec.temperature,
        }
        if spec.dialect is Dialect.FUNCTION_CALL:
            body["tools"] = [
                {
                    "type": "function",
                    "function": {
                        "name": CLASSIFY_FUNCTION_NAME,
                        "description": "Report the ranked action labels for the video.",
                        "parameters": _labels_schema(spec.label_enum or ()),
                    },
                }
            ]
            body["tool_choice"] = {
                "type": "function",
                "function": {"name": CLASSIFY_FUNCTION_NAME},
            }

    return WireRequest(
        body=body,
        dialect=spec.dialect,
        video_id=video_id,
        prompt_fingerprint=spec.fingerprint,
    )


# ---------------------------------------------------------------------------
# payload extraction
# ---------------------------------------------------------------------------

def extract_content(payload: str) -> str:
    """Pull the assistant message text out of a chat-completion envelope.

    Mock backends return the message content directly; real backends return
    the full envelope. Non-envelope payloads pass through unchanged.
    """
    try:
        obj = json.loads(payload)
    except ValueError:
        return payload
    if not isinstance(obj, dict):
        return payload
    if "choices" in obj:  # OpenAI-compatible
        try:
            content = obj["choices"][0]["message"].get("content")
            return content if isinstance(content, str) else ""
        except (KeyError, IndexError, TypeError, AttributeError):
            return ""
    if "content" in obj and "role" in obj:  # Anthropic-style
        blocks = obj["content"]
        if isinstance(blocks, list):
            return "\n".join(
                b.get("text", "") for b in blocks if isinstance(b, dict) and b.get("type") == "text"
            )
        return blocks if isinstance(blocks, str) else ""
    return payload


def _extract_tool_arguments(payload: str) -> str | None:
    try:
        obj = json.loads(payload)
    except ValueError:
        return None
    if not isinstance(obj, dict):
        return None
    try:
        if "choices" in obj:
            calls = obj["choices"][0]["message"].get("tool_calls") or []
            if calls:
                return calls[0]["function"]["arguments"]
        elif "content" in obj and isinstance(obj["content"], list):
            for block in obj["content"]:
                if isinstance(block, dict) and block.get("type") == "tool_use":
                    return json.dumps(block.get("input", {}))
    except (KeyError, IndexError, TypeError):
        return None
    return None


# ---------------------------------------------------------------------------
# offline mock backends
# ---------------------------------------------------------------------------

def _request_user_text(request: WireRequest) -> str:
    for message in request.body.get("messages", []):
        if message.get("role") == "user":
            return message.get("content", "")
    return ""


def _request_system_text(request: WireRequest) -> str:
    if "system" in request.body:
        return request.body["system"]
    for message in request.body.get("messages", []):
        if message.get("role") == "system":
            return message.get("content", "")
    return ""


def _request_clue_text(request: WireRequest) -> str:
    """Clue portion of the user text, excluding the inline label list."""
    text = _request_user_text(request)
    cut = text.rfind(LABEL_LIST_MARKER)
    if cut < 0:
        cut = text.rfind(" Please return the 5 labels")
    return text[:cut] if cut >= 0 else text


def _request_labels(request: WireRequest) -> list[str]:
    """Recover the label vocabulary carried by the request itself."""
    if request.dialect is Dialect.FUNCTION_CALL:
        tools = request.body.get("tools", [])
        if tools:
            tool = tools[0]
            schema = tool.get("function", {}).get("parameters") or tool.get("input_schema", {})
            enum = schema.get("properties", {}).get("labels", {}).get("items", {}).get("enum", [])
            return list(enum)
        return []
    if request.dialect is Dialect.JSON_TEXT:
        text = _request_user_text(request)
        start = text.rfind(LABEL_LIST_MARKER)
        if start < 0:
            return []
        start += len(LABEL_LIST_MARKER)
        end = text.rfind(" Please return the 5 labels")
        listing = text[start:end] if end > start else text[start:]
        return [name.strip() for name in listing.split(",") if name.strip()]
    # NUMBERED_LIST carries the class names in the system message
    text = _request_system_text(request)
    start = text.rfind(SYSTEM_LABEL_MARKER)
    if start < 0:
        return []
    start += len(SYSTEM_LABEL_MARKER)
    end = text.rfind(SYSTEM_LABEL_SUFFIX)
    listing = text[start:end] if end > start else text[start:]
    return [name.strip() for name in listing.split(",") if name.strip()]


def _shape_ranking(ranked: list[str], dialect: Dialect) -> BackendResult:
    if dialect is Dialect.FUNCTION_CALL:
        args = json.dumps({"labels": ranked})
        return BackendResult(status_code=200, payload=args, tool_arguments=args)
    if dialect is Dialect.JSON_TEXT:
        return BackendResult(status_code=200, payload=json.dumps({"labels": ranked}))
    lines = "\n".join(f"{i}. {name}" for i, name in enumerate(ranked, start=1))
    return BackendResult(status_code=200, payload=lines)


def _pad_ranking(ranked: list[str], vocabulary: list[str]) -> list[str]:
    chosen = list(ranked)
    for name in vocabulary:
        if len(chosen) >= 5:
            break
        if name not in chosen:
            chosen.append(name)
    return chosen[:5]


def keyword_backend(request: WireRequest) -> BackendResult:
    """Deterministic test backend: rank labels by first occurrence in the clues.

    The 5 labels whose normalized names appear earliest as substrings of the
    normalized clue text win, padded with the first unused vocabulary labels.
    A pure function of the request, which makes closed-loop tests exact.
    """
    vocabulary = _request_labels(request)
    clues = normalize_label(_request_clue_text(request))
    hits = []
    for i, name in enumerate(vocabulary):
        pos = clues.find(normalize_label(name))
        if pos >= 0:
            hits.append((pos, i, name))
    hits.sort()
    ranked = _pad_ranking([name for _, _, name in hits[:5]], vocabulary)
    return _shape_ranking(ranked, request.dialect)


class OracleBackend:
    """Test backend that answers with the known ground truth ranked first."""

    def __init__(self, truths: dict[str, str]):
        self.truths = truths

    def __call__(self, request: WireRequest) -> BackendResult:
        vocabulary = _request_labels(request)
        truth = self.truths.get(request.video_id)
        first = [truth] if truth else []
        return _shape_ranking(_pad_ranking(first, vocabulary), request.dialect)


# ---------------------------------------------------------------------------
# response log
# ---------------------------------------------------------------------------

class ResponseLog:
    """Append-only JSONL log of raw responses, resumable by prompt fingerprint.

    The first line stamps the run's config fingerprint; opening the log with
    a different fingerprint is rejected to keep run directories coherent.
    """

    def __init__(self, path: str | Path, config_fingerprint: str):
        self.path = Path(path)
        self.config_fingerprint = config_fingerprint
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str], dict] = {}
        if self.path.exists() and self.path.stat().st_size > 0:
            self._load()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as fh:
                fh.write(json.dumps({"kind": "raw_responses", "config_fingerprint": config_fingerprint}) + "\n")

    def _load(self) -> None:
        text = self.path.read_text(encoding="utf-8")
        lines = text.split("\n")
        if text and not text.endswith("\n"):
            lines = lines[:-1]  # torn write; that video will be re-queried
        header = json.loads(lines[0]) if lines and lines[0].strip() else {}
        if header.get("config_fingerprint") != self.config_fingerprint:
            raise FingerprintMismatch(
                f"{self.path} belongs to config {header.get('config_fingerprint')!r}, "
                f"current config is {self.config_fingerprint!r}"
            )
        for line in lines[1:]:
            if not line.strip():
                continue
            rec = json.loads(line)
            self._index[(rec["video_id"], rec["prompt_fingerprint"])] = rec

    def __len__(self) -> int:
        return len(self._index)

    def get(self, video_id: str, prompt_fingerprint: str) -> RawResponse | None:
        rec = self._index.get((video_id, prompt_fingerprint))
        if rec is None:
            return None
        return RawResponse(
            video_id=rec["video_id"],
            prompt_fingerprint=rec["prompt_fingerprint"],
            payload=rec["payload"],
            tool_arguments=rec.get("tool_arguments"),
            latency_ms=rec.get("latency_ms", 0),
            attempt_count=rec.get("attempt_count", 1),
        )

    def append(self, response: RawResponse, profile_name: str) -> None:
        rec = {
            "video_id": response.video_id,
            "prompt_fingerprint": response.prompt_fingerprint,
            "payload": response.payload,
            "tool_arguments": response.tool_arguments,
            "latency_ms": response.latency_ms,
            "attempt_count": response.attempt_count,
            "profile": profile_name,
        }
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
                fh.flush()
            self._index[(response.video_id, response.prompt_fingerprint)] = rec

    def records(self) -> list[dict]:
        return list(self._index.values())


# ---------------------------------------------------------------------------
# gateway
# ---------------------------------------------------------------------------

class ReasoningGateway:
    """Executes wire requests with per-profile admission control and retries.

    backend_override, when given, replaces transport resolution entirely;
    tests use it to instrument or fail calls deterministically.
    """

    def __init__(
        self,
        backend_override=None,
        oracle_truths: dict[str, str] | None = None,
        timeout_s: float = 120.0,
        sleep=time.sleep,
    ):
        self._backend_override = backend_override
        self._oracle = OracleBackend(oracle_truths or {})
        self._timeout_s = timeout_s
        self._sleep = sleep
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._sem_lock = threading.Lock()
        self._client: httpx.Client | None = None

    def _semaphore(self, profile: BackendProfile) -> threading.BoundedSemaphore:
        with self._sem_lock:
            sem = self._semaphores.get(profile.name)
            if sem is None:
                sem = threading.BoundedSemaphore(profile.max_in_flight)
                self._semaphores[profile.name] = sem
            return sem

    def _http_client(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self._timeout_s)
        return self._client

    def _headers(self, profile: BackendProfile) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if profile.auth_env_var:
            key = os.environ.get(profile.auth_env_var)
            if not key:
                raise AuthMissing(
                    f"profile {profile.name!r} needs credential in ${profile.auth_env_var}"
                )
            if profile.api_flavor == "anthropic":
                headers["x-api-key"] = key
                headers["anthropic-version"] = "2023-06-01"
            else:
                headers["authorization"] = f"Bearer {key}"
        return headers

    def _call_once(self, request: WireRequest, profile: BackendProfile) -> BackendResult:
        if self._backend_override is not None:
            return self._backend_override(request)
        if profile.base_url == "mock://keyword":
            return keyword_backend(request)
        if profile.base_url == "mock://oracle":
            return self._oracle(request)
        if profile.base_url.startswith("mock://"):
            raise DataError(f"unknown mock backend {profile.base_url!r}")
        headers = self._headers(profile)
        try:
            resp = self._http_client().post(profile.base_url, json=request.body, headers=headers)
        except httpx.HTTPError as exc:
            # transport failure: treated like a retryable status
            return BackendResult(status_code=-1, payload=str(exc))
        return BackendResult(status_code=resp.status_code, payload=resp.text)

    def invoke(self, request: WireRequest, profile: BackendProfile) -> RawResponse:
        """Execute one request, retrying transient failures with backoff.

        Raises:
            BackendExhausted: retryable failures persisted through max_attempts.
            NonRetryableStatus: a non-retryable 4xx came back.
            AuthMissing: required credential not present in the environment.
        """
        policy = profile.retry_policy
        with self._semaphore(profile):
            started = time.monotonic()
            last: BackendResult | None = None
            for attempt in range(1, policy.max_attempts + 1):
                result = self._call_once(request, profile)
                retryable = result.status_code < 0 or (
                    result.status_code in policy.retryable_status_codes
                )
                if 200 <= result.status_code < 300:
                    tool_arguments = result.tool_arguments
                    if tool_arguments is None and request.dialect is Dialect.FUNCTION_CALL:
                        tool_arguments = _extract_tool_arguments(result.payload)
                    return RawResponse(
                        video_id=request.video_id,
                        prompt_fingerprint=request.prompt_fingerprint,
                        payload=result.payload,
                        tool_arguments=tool_arguments,
                        latency_ms=int((time.monotonic() - started) * 1000),
                        attempt_count=attempt,
                    )
                if not retryable:
                    raise NonRetryableStatus(
                        f"profile {profile.name!r}: status {result.status_code}: "
                        f"{result.payload[:200]}"
                    )
                last = result
                if attempt < policy.max_attempts:
                    # exponential, deterministic, non-decreasing across attempts
                    self._sleep(policy.base_backoff_ms * (2 ** (attempt - 1)) / 1000.0)
        raise BackendExhausted(
            f"profile {profile.name!r}: {policy.max_attempts} attempts failed, "
            f"last status {last.status_code if last else '?'}"
        )

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
