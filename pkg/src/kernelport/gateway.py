"""Uniform access to chat-completion endpoints.

One client serves hosted and self-hosted providers through the
OpenAI-compatible chat-completions protocol. A record/replay provider
makes every test deterministic: transcripts are keyed by a stable hash
of (role, system prompt, user content) and a replay miss is a hard
error, never a silent live fallback.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx

from .errors import MalformedResponse, ProviderUnavailable, RateLimited

MODE_ENV_VAR = "PIPELINE_LLM_MODE"  # live | replay | record


@dataclass(frozen=True)
class ModelRef:
    name: str
    endpoint: str = "https://api.openai.com/v1"
    price_in_per_mtok: float = 0.0
    price_out_per_mtok: float = 0.0
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if self.price_in_per_mtok < 0 or self.price_out_per_mtok < 0:
            raise ValueError("prices must be >= 0")
        if not self.endpoint.startswith(("http://", "https://")):
            raise ValueError(f"endpoint must be http(s): {self.endpoint}")


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: TokenUsage
    model: str
    latency: float = 0.0


def compute_cost(usage: TokenUsage, model: ModelRef) -> float:
    """USD cost of a usage record at the model's per-1M-token prices."""
    return (
        usage.input_tokens * model.price_in_per_mtok
        + usage.output_tokens * model.price_out_per_mtok
    ) / 1_000_000


_FENCE_RE = re.compile(
    r"```[ \t]*[A-Za-z0-9_+#.-]*[ \t]*\r?\n(.*?)\r?\n?```", re.DOTALL
)


def extract_code_block(raw: str) -> str:
    """Interior of the first fenced code block, or the trimmed input.

    Idempotent: extracting from an already-extracted text is a no-op.
    """
    match = _FENCE_RE.search(raw)
    if match:
        return match.group(1).strip("\n")
    return raw.strip()


def transcript_key(role: str, system: str, user: str) -> str:
    payload = json.dumps([role, system, user], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:32]


class CompletionProvider(Protocol):
    def complete(self, model: ModelRef, role: str, system: str, user: str) -> CompletionResult:
        ...


class HttpProvider:
    """OpenAI-compatible chat-completions client with bounded retries.

    Transport errors and HTTP 429 are retried with exponential backoff
    up to `max_attempts`; semantic errors are never retried.
    """

    def __init__(self, max_attempts: int = 3, backoff_base: float = 0.5,
                 timeout: float = 300.0, sleep: Callable[[float], None] = time.sleep):
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._sleep = sleep

    def complete(self, model: ModelRef, role: str, system: str, user: str) -> CompletionResult:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(model.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": model.name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        url = model.endpoint.rstrip("/") + "/chat/completions"
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            started = time.monotonic()
            try:
                resp = httpx.post(url, json=body, headers=headers, timeout=self.timeout)
            except httpx.HTTPError as exc:
                last_exc = exc
                self._sleep(self.backoff_base * 2**attempt)
                continue
            if resp.status_code == 429:
                last_exc = RateLimited(f"429 from {url}")
                self._sleep(self.backoff_base * 2**attempt)
                continue
            if resp.status_code != 200:
                raise ProviderUnavailable(f"{url} returned {resp.status_code}: {resp.text[:500]}")
            return self._parse(model, resp, time.monotonic() - started)
        if isinstance(last_exc, RateLimited):
            raise last_exc
        raise ProviderUnavailable(f"{url} unreachable after {self.max_attempts} attempts: {last_exc}")

    @staticmethod
    def _parse(model: ModelRef, resp: httpx.Response, latency: float) -> CompletionResult:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {})
            result = CompletionResult(
                text=text,
                usage=TokenUsage(
                    int(usage.get("prompt_tokens", 0)),
                    int(usage.get("completion_tokens", 0)),
                ),
                model=model.name,
                latency=latency,
            )
        except (KeyError, IndexError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MalformedResponse(str(exc)) from exc
        if result.text is None or result.text == "":
            raise MalformedResponse("provider returned empty completion text")
        return result


class ReplayProvider:
    """Serves recorded transcripts; a cache miss is a hard error."""

    def __init__(self, store_dir):
        self.store_dir = Path(store_dir)

    def complete(self, model: ModelRef, role: str, system: str, user: str) -> CompletionResult:
        key = transcript_key(role, system, user)
        path = self.store_dir / f"{key}.json"
        if not path.exists():
            raise ProviderUnavailable(
                f"replay miss for role={role} key={key} in {self.store_dir}"
            )
        record = json.loads(path.read_text())
        return CompletionResult(
            text=record["response"],
            usage=TokenUsage(record["input_tokens"], record["output_tokens"]),
            model=model.name,
            latency=0.0,
        )


class RecordingProvider:
    """Wraps a live provider and persists every transcript as a fixture."""

    def __init__(self, inner: CompletionProvider, store_dir):
        self.inner = inner
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)

    def complete(self, model: ModelRef, role: str, system: str, user: str) -> CompletionResult:
        result = self.inner.complete(model, role, system, user)
        key = transcript_key(role, system, user)
        record = {
            "role": role,
            "system": system,
            "user": user,
            "response": result.text,
            "input_tokens": result.usage.input_tokens,
            "output_tokens": result.usage.output_tokens,
        }
        (self.store_dir / f"{key}.json").write_text(
            json.dumps(record, indent=2, ensure_ascii=False)
        )
        return result


class TokenLedger:
    """Thread-safe accumulator of token usage and cost across agent calls."""

    def __init__(self):
        self._lock = threading.Lock()
        self._usage = TokenUsage()
        self._cost = 0.0

    def add(self, usage: TokenUsage, model: ModelRef) -> None:
        with self._lock:
            self._usage = self._usage + usage
            self._cost += compute_cost(usage, model)

    def snapshot(self) -> tuple[TokenUsage, float]:
        with self._lock:
            return self._usage, self._cost


@dataclass
class Gateway:
    """Provider plus per-run accounting; the single entry point agents use."""

    provider: CompletionProvider
    ledger: TokenLedger = field(default_factory=TokenLedger)
    trace_hook: Optional[Callable[[dict], None]] = None

    def complete(self, model: ModelRef, role: str, system: str, user: str) -> CompletionResult:
        if not system.strip() or not user.strip():
            raise ValueError("prompts must be non-empty")
        result = self.provider.complete(model, role, system, user)
        self.ledger.add(result.usage, model)
        if self.trace_hook is not None:
            self.trace_hook({
                "event": "agent",
                "role": role,
                "model": model.name,
                "input_tokens": result.usage.input_tokens,
                "output_tokens": result.usage.output_tokens,
                "cost_usd": compute_cost(result.usage, model),
                "latency_s": result.latency,
            })
        return result


def provider_from_env(store_dir=None, default_mode: str = "live") -> CompletionProvider:
    """Pick the provider from PIPELINE_LLM_MODE (live | replay | record)."""
    mode = os.environ.get(MODE_ENV_VAR, default_mode)
    if mode == "live":
        return HttpProvider()
    if store_dir is None:
        raise ProviderUnavailable(f"mode {mode} requires a transcript store directory")
    if mode == "replay":
        return ReplayProvider(store_dir)
    if mode == "record":
        return RecordingProvider(HttpProvider(), store_dir)
    raise ProviderUnavailable(f"unknown {MODE_ENV_VAR}={mode}")
