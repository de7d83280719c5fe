"""Chat-completion clients.

``ChatClient`` talks to any OpenAI-compatible ``/chat/completions`` endpoint.
``ReplayClient`` and ``OfflineClient`` are drop-in stand-ins for tests and
for runs that must not touch the network.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Callable, Mapping

import httpx

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-3.5-turbo-0301"
API_KEY_ENV = "OPENAI_API_KEY"


class LLMRequestError(RuntimeError):
    pass


class NetworkDisabledError(LLMRequestError):
    pass


class TokenBucket:
    """Blocking token-bucket rate limiter (``rate`` requests per second)."""

    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class ChatClient:
    def __init__(
        self,
        model_id: str = DEFAULT_MODEL,
        base_url: str = DEFAULT_BASE_URL,
        api_key_env: str = API_KEY_ENV,
        temperature: float = 0.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        rate_per_sec: float = 2.0,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.model_id = model_id
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self.bucket = TokenBucket(rate_per_sec, sleep=sleep)
        self._sleep = sleep
        self._http = httpx.Client(timeout=timeout, transport=transport)
        self.usage = {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0}
        self._usage_lock = threading.Lock()

    def _api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "").strip()
        if not key:
            raise LLMRequestError(f"environment variable {self.api_key_env} is not set")
        return key

    def complete(self, prompt: str) -> str:
        body = {
            "model": self.model_id,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_err: Exception | None = None
        for attempt in range(self.max_retries):
            self.bucket.acquire()
            logger.debug("POST %s/chat/completions (Authorization: Bearer ***) body=%s", self.base_url, body)
            try:
                resp = self._http.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
                resp.raise_for_status()
                data = resp.json()
                content = data["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_err = exc
                logger.warning("request attempt %d/%d failed: %s", attempt + 1, self.max_retries, exc)
                if attempt + 1 < self.max_retries:
                    self._sleep(self.backoff * 2**attempt)
                continue
            logger.debug("response: %s", data)
            usage = data.get("usage") or {}
            with self._usage_lock:
                self.usage["requests"] += 1
                self.usage["prompt_tokens"] += usage.get("prompt_tokens", 0)
                self.usage["completion_tokens"] += usage.get("completion_tokens", 0)
            return content
        raise LLMRequestError(f"request failed after {self.max_retries} attempts: {last_err}")


class ReplayClient:
    """Answers prompts from a mapping or a function; counts calls."""

    def __init__(self, responses: Mapping[str, str] | Callable[[str], str], model_id: str = "replay"):
        self.responses = responses
        self.model_id = model_id
        self.calls = 0
        self.usage = {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0}

    def complete(self, prompt: str) -> str:
        self.calls += 1
        self.usage["requests"] += 1
        if callable(self.responses):
            return self.responses(prompt)
        try:
            return self.responses[prompt]
        except KeyError:
            raise LLMRequestError("no recorded response for prompt") from None


class OfflineClient:
    """Fails every request; use with a populated cache."""

    def __init__(self, model_id: str = DEFAULT_MODEL):
        self.model_id = model_id
        self.calls = 0
        self.usage = {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0}

    def complete(self, prompt: str) -> str:
        self.calls += 1
        raise NetworkDisabledError("network access is disabled (offline mode)")
