"""Vision-chat HTTP client that turns a snapshot into a compass direction."""

from __future__ import annotations

import base64
import logging
import os
import threading
import time

import httpx

from .base import ZERO_SHOT, DirectionOracle, OracleAnswer, OracleError, OracleQuery, parse_direction
from .prompts import build_prompt

log = logging.getLogger(__name__)

ENV_ENDPOINT = "ORACLE_ENDPOINT"
ENV_MODEL = "ORACLE_MODEL"
ENV_API_KEY = "ORACLE_API_KEY"


def request_body(model: str, system_text: str, user_text: str, image_png: bytes | None,
                 temperature: float, max_tokens: int) -> dict:
    content: list[dict] = [{"type": "text", "text": user_text}]
    if image_png is not None:
        b64 = base64.b64encode(image_png).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": content},
        ],
        "temperature": temperature,
        "max_tokens": max_tokens,
    }


def response_text(payload: dict) -> str:
    """Assistant text from an OpenAI-style chat completion payload."""
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise OracleError(OracleError.PARSE, "malformed completion payload", str(payload)[:2000])
    if isinstance(content, list):  # some servers return content parts
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return content or ""


class RemoteOracle(DirectionOracle):
    """Queries a vision-chat endpoint.

    A call makes up to ``max_attempts`` requests. Transport failures and
    unparseable replies are retried (retries sample at ``retry_temperature``
    so a deterministic model gets a chance to answer differently); the last
    failure is raised as an :class:`OracleError`. HTTP 429 on the final
    attempt is reported as ``RateLimit``.
    """

    needs_snapshot = True

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 prompt_mode: str = ZERO_SHOT, timeout: float = 30.0, max_attempts: int = 3,
                 max_in_flight: int = 4, temperature: float = 0.0, retry_temperature: float = 0.7,
                 max_tokens: int = 512, backoff: float = 0.5, client: httpx.Client | None = None):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.prompt_mode = prompt_mode
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.temperature = temperature
        self.retry_temperature = retry_temperature
        self.max_tokens = max_tokens
        self.backoff = backoff
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, **kw) -> "RemoteOracle":
        endpoint = os.environ.get(ENV_ENDPOINT)
        model = os.environ.get(ENV_MODEL)
        if not endpoint or not model:
            raise OracleError(OracleError.TRANSPORT,
                              f"{ENV_ENDPOINT} and {ENV_MODEL} must be set for the remote oracle")
        return cls(endpoint, model, os.environ.get(ENV_API_KEY), **kw)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        if self.api_key:
            h["Authorization"] = f"Bearer {self.api_key}"
        return h

    def answer(self, query: OracleQuery) -> OracleAnswer:
        if query.snapshot is None:
            raise OracleError(OracleError.TRANSPORT, "remote oracle needs a snapshot")
        system_text, user_text, png = build_prompt(query, self.prompt_mode)
        last: OracleError | None = None
        t0 = time.perf_counter()
        for attempt in range(self.max_attempts):
            if attempt and self.backoff > 0:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            temp = self.temperature if attempt == 0 else max(self.temperature, self.retry_temperature)
            body = request_body(self.model, system_text, user_text, png, temp, self.max_tokens)
            try:
                text = self._post(body)
                direction = parse_direction(text)
            except OracleError as exc:
                log.info("oracle attempt %d/%d failed: %s", attempt + 1, self.max_attempts, exc)
                last = exc
                continue
            return OracleAnswer(direction, text, time.perf_counter() - t0, self.prompt_mode)
        assert last is not None
        raise last

    def _post(self, body: dict) -> str:
        with self._sem:
            try:
                resp = self._client.post(self.endpoint, json=body, headers=self._headers(),
                                         timeout=self.timeout)
            except httpx.HTTPError as exc:
                raise OracleError(OracleError.TRANSPORT, f"{type(exc).__name__}: {exc}") from None
        if resp.status_code == 429:
            raise OracleError(OracleError.RATE_LIMIT, "HTTP 429", resp.text[:2000])
        if resp.status_code >= 400:
            raise OracleError(OracleError.TRANSPORT, f"HTTP {resp.status_code}", resp.text[:2000])
        try:
            payload = resp.json()
        except ValueError:
            raise OracleError(OracleError.PARSE, "response is not JSON", resp.text[:2000]) from None
        return response_text(payload)
