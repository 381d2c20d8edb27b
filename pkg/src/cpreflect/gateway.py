"""Uniform client layer over chat-completion providers.

One :class:`Gateway` serves every pipeline role. Each request carries its
role explicitly and no conversation history is shared between roles:
context moves only through the delimited sections of the next request,
which is what keeps the generation and review stages from bleeding into
each other.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import httpx

from .audit import AuditLog
from .domain import ValidationError

API_KEY_ENV = "LLM_API_KEY"


class ClientRole(enum.Enum):
    """Which pipeline persona a request is issued under."""

    GENERATOR = "Generator"
    REVIEWER = "Reviewer"
    FORMATTER = "Formatter"
    FEEDBACK = "Feedback"
    SUMMARY_MAKER = "SummaryMaker"

    def to_json(self) -> str:
        return self.value

    @classmethod
    def from_json(cls, value: str) -> "ClientRole":
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"role: unknown role {value!r}") from None


@dataclass(frozen=True)
class PromptRequest:
    """A fully-specified prompt: persona, delimited sections, instruction."""

    role: ClientRole
    persona: str
    sections: tuple[tuple[str, str], ...]
    instruction: str
    temperature: float
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if not self.persona.strip():
            raise ValidationError("persona: must be non-empty")
        if not self.instruction.strip():
            raise ValidationError("instruction: must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValidationError("temperature: must be within [0, 1]")
        if self.max_output_tokens < 1:
            raise ValidationError("max_output_tokens: must be positive")
        seen: set[str] = set()
        for tag, _body in self.sections:
            if not tag or not tag.replace("_", "").isalnum():
                raise ValidationError(f"sections: invalid tag {tag!r}")
            if tag in seen:
                raise ValidationError(f"sections: duplicate tag {tag!r}")
            seen.add(tag)


@dataclass(frozen=True)
class ProviderResponse:
    """Raw provider output, stored verbatim for audit."""

    text: str
    provider_id: str
    latency_ms: int
    token_usage: tuple[int, int] | None = None


def render_prompt(request: PromptRequest) -> str:
    """Deterministic text layout for a request.

    Persona line, each section wrapped in ``<tag>``/``</tag>`` delimiters,
    then the instruction; pure function of the request.
    """
    parts = [request.persona]
    for tag, body in request.sections:
        parts.append(f"<{tag}>\n{body}\n</{tag}>")
    parts.append(request.instruction)
    return "\n\n".join(parts)


def prompt_digest(rendered: str) -> str:
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()


class GatewayError(Exception):
    """Base for provider/transport failures; retryable when transient."""

    retryable = False


class TransportError(GatewayError):
    """Network-level failure or provider overload; safe to retry."""

    retryable = True


class StageTimeoutError(GatewayError):
    """A stage exceeded its wall-clock budget; retryable by the caller."""

    retryable = True


class CredentialError(GatewayError):
    """Provider rejected our credentials; terminal configuration error."""


class ProviderRejectionError(GatewayError):
    """Provider refused the request; carries the provider's message."""


class MockProvider:
    """Deterministic offline provider.

    Scripted responses are keyed on (role, digest of the rendered prompt);
    fallbacks are looked up by stage name (optionally qualified by a
    section tag the request must carry, written ``stage@tag``), then by
    role, then a global default. A script value may be a single text
    (always returned), a sequence (consumed in order, last value
    repeating — how bad-then-good regeneration runs are staged), or, for
    in-process tests, a callable of (request, rendered prompt). Each
    entry may also carry a ``delay_s`` to simulate a slow provider.
    """

    provider_id = "mock"

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._exact: dict[tuple[str, str], "_Script"] = {}
        self._stage_defaults: dict[str, "_Script"] = {}
        self._role_defaults: dict[str, "_Script"] = {}
        self._default: "_Script | None" = None
        self.calls: list[dict[str, Any]] = []

    # -- scripting -------------------------------------------------------

    def script(self, role: ClientRole, digest: str, response: Any) -> None:
        self._exact[(role.value, digest)] = _Script.of(response)

    def script_stage(self, stage: str, response: Any) -> None:
        self._stage_defaults[stage] = _Script.of(response)

    def script_role(self, role: ClientRole, response: Any) -> None:
        self._role_defaults[role.value] = _Script.of(response)

    def script_default(self, response: Any) -> None:
        self._default = _Script.of(response)

    @classmethod
    def from_script_file(cls, path: str | os.PathLike[str]) -> "MockProvider":
        """Load a JSON script: exact (role, prompt-digest) entries + fallbacks."""
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        provider = cls()
        for entry in data.get("responses", []):
            key = (entry["role"], entry["prompt_sha256"])
            provider._exact[key] = _Script.of(entry.get("text", entry.get("texts")))
        for stage, value in data.get("stage_defaults", {}).items():
            provider._stage_defaults[stage] = _Script.of(value)
        for role, value in data.get("role_defaults", {}).items():
            provider._role_defaults[role] = _Script.of(value)
        if "default" in data:
            provider._default = _Script.of(data["default"])
        return provider

    # -- provider API ------------------------------------------------------

    def generate(self, request: PromptRequest, rendered: str, stage: str | None) -> str:
        digest = prompt_digest(rendered)
        with self._lock:
            self.calls.append(
                {"role": request.role.value, "stage": stage, "prompt_sha256": digest}
            )
            script = self._exact.get((request.role.value, digest))
            if script is None and stage is not None:
                for tag, _body in request.sections:
                    script = self._stage_defaults.get(f"{stage}@{tag}")
                    if script is not None:
                        break
                if script is None:
                    script = self._stage_defaults.get(stage)
            if script is None:
                script = self._role_defaults.get(request.role.value) or self._default
            if script is None:
                raise ProviderRejectionError(
                    f"mock provider has no script for role={request.role.value} "
                    f"stage={stage} digest={digest[:12]}"
                )
            text, delay_s = script.next(request, rendered)
        if delay_s:
            time.sleep(delay_s)
        return text

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.calls)


class _Script:
    """One scripted response source: text, consumed sequence, or callable."""

    def __init__(self, entries: list[tuple[Any, float]]):
        if not entries:
            raise ValidationError("mock script: empty response sequence")
        self._entries = entries
        self._cursor = 0

    @classmethod
    def of(cls, value: Any) -> "_Script":
        if isinstance(value, (str, dict)) or callable(value):
            value = [value]
        entries: list[tuple[Any, float]] = []
        for item in value:
            if isinstance(item, str) or callable(item):
                entries.append((item, 0.0))
            else:
                entries.append((item["text"], float(item.get("delay_s", 0.0))))
        return cls(entries)

    def next(self, request: PromptRequest, rendered: str) -> tuple[str, float]:
        text, delay_s = self._entries[min(self._cursor, len(self._entries) - 1)]
        self._cursor += 1
        if callable(text):
            text = text(request, rendered)
        return text, delay_s


class HttpChatProvider:
    """HTTP+JSON chat-completion client.

    Endpoint and model come from configuration; the credential comes from
    the ``LLM_API_KEY`` environment variable. A custom transport can be
    injected for tests.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        request_timeout_s: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.provider_id = f"http:{model}"
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise CredentialError(f"no API credential: set {API_KEY_ENV}")
        self._headers = {"Authorization": f"Bearer {key}"}
        self._client = httpx.Client(timeout=request_timeout_s, transport=transport)

    def generate(self, request: PromptRequest, rendered: str, stage: str | None) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": rendered}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        try:
            response = self._client.post(self.endpoint, json=payload, headers=self._headers)
        except httpx.TransportError as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise CredentialError(f"provider rejected credentials ({response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"provider overloaded ({response.status_code})")
        if response.status_code >= 400:
            raise ProviderRejectionError(
                f"provider rejected request ({response.status_code}): {response.text[:500]}"
            )
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise ProviderRejectionError(f"malformed provider response: {exc}") from exc

    def close(self) -> None:
        self._client.close()


class Gateway:
    """Role-aware completion client with audit logging and retry.

    Every ``complete()`` call appends exactly one audit record, failures
    included. Concurrent in-flight requests are capped, and retryable
    transport errors get a fixed-interval retry.
    """

    def __init__(
        self,
        provider: Any,
        audit: AuditLog,
        max_concurrency: int = 4,
        transport_attempts: int = 2,
        retry_interval_s: float = 0.2,
    ):
        self.provider = provider
        self.audit = audit
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._transport_attempts = max(1, transport_attempts)
        self._retry_interval_s = retry_interval_s

    def complete(
        self,
        request: PromptRequest,
        stage: str | None = None,
        run_id: str | None = None,
    ) -> ProviderResponse:
        rendered = render_prompt(request)
        started = time.monotonic()
        record: dict[str, Any] = {
            "event": "completion",
            "run_id": run_id,
            "stage": stage,
            "role": request.role.value,
            "provider_id": getattr(self.provider, "provider_id", "unknown"),
            "prompt_sha256": prompt_digest(rendered),
            "prompt": rendered,
        }
        try:
            with self._slots:
                text = self._generate_with_retry(request, rendered, stage)
        except Exception as exc:
            record.update(
                {
                    "latency_ms": int((time.monotonic() - started) * 1000),
                    "outcome": "error",
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
            self.audit.append(record)
            raise
        latency_ms = int((time.monotonic() - started) * 1000)
        record.update({"latency_ms": latency_ms, "outcome": "ok", "response": text})
        self.audit.append(record)
        return ProviderResponse(
            text=text,
            provider_id=getattr(self.provider, "provider_id", "unknown"),
            latency_ms=latency_ms,
        )

    def _generate_with_retry(
        self, request: PromptRequest, rendered: str, stage: str | None
    ) -> str:
        last: Exception | None = None
        for attempt in range(self._transport_attempts):
            try:
                return self.provider.generate(request, rendered, stage)
            except TransportError as exc:
                last = exc
                if attempt + 1 < self._transport_attempts:
                    time.sleep(self._retry_interval_s)
        assert last is not None
        raise last


def load_provider(
    provider_kind: str,
    endpoint: str = "",
    model: str = "",
    script_path: str | os.PathLike[str] | None = None,
    request_timeout_s: float = 60.0,
) -> Any:
    """Build a provider from configuration values."""
    if provider_kind == "mock":
        if script_path is None:
            return MockProvider()
        return MockProvider.from_script_file(Path(script_path))
    if provider_kind == "real":
        if not endpoint or not model:
            raise ValidationError("provider: real provider needs endpoint and model")
        return HttpChatProvider(endpoint, model, request_timeout_s=request_timeout_s)
    raise ValidationError(f"provider: unknown kind {provider_kind!r}")
