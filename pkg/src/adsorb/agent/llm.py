"""Chat-completions client.

The wire format is the common ``/chat/completions`` shape: POST
``{"model", "messages": [{"role", "content"}], "temperature", "top_p"}`` and
read ``choices[0].message.content``.  Anything that can be called as
``backend(messages) -> str`` can stand in for the client.
"""
from __future__ import annotations

import json
import os
import socket
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, replace

from ..errors import ChatAuthError, ChatError, ChatHTTPError, ChatSchemaError, ChatTimeoutError

API_KEY_ENV = "ADSORB_AGENT_API_KEY"
BASE_URL_ENV = "ADSORB_AGENT_BASE_URL"
ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    temperature: float = 1.0
    top_p: float = 1.0
    max_retries: int = 3
    timeout: float = 60.0
    backoff: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    def resolved(self):
        """Copy with the base URL taken from the environment when set."""
        env = os.environ.get(BASE_URL_ENV)
        return replace(self, base_url=env) if env else self


def check_messages(messages):
    if not messages:
        raise ValueError("chat needs at least one message")
    for m in messages:
        if m.get("role") not in ROLES:
            raise ValueError(f"invalid role {m.get('role')!r}; expected one of {ROLES}")
        if not isinstance(m.get("content"), str):
            raise ValueError("message content must be a string")


def _excerpt(raw, n=200):
    text = raw.decode(errors="replace") if isinstance(raw, bytes) else str(raw)
    return text[:n]


def _chat_once(config: LlmConfig, messages, api_key):
    url = config.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": config.model,
        "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
        "temperature": config.temperature,
        "top_p": config.top_p,
    }
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    req = urllib.request.Request(url, data=json.dumps(payload).encode(), headers=headers,
                                 method="POST")
    try:
        with urllib.request.urlopen(req, timeout=config.timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        body = _excerpt(exc.read())
        if exc.code in (401, 403):
            raise ChatAuthError(
                f"HTTP {exc.code} from {url}: check the API key in ${API_KEY_ENV} ({body})"
            ) from None
        raise ChatHTTPError(f"HTTP {exc.code} from {url}: {body}", exc.code) from None
    except (socket.timeout, TimeoutError) as exc:
        raise ChatTimeoutError(f"no response from {url} within {config.timeout} s") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise ChatTimeoutError(f"no response from {url} within {config.timeout} s") from None
        raise ChatHTTPError(f"cannot reach {url}: {exc.reason}") from None
    try:
        doc = json.loads(raw)
        content = doc["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError):
        raise ChatSchemaError(
            f"unexpected response body from {url}: {_excerpt(raw)!r}") from None
    if not isinstance(content, str):
        raise ChatSchemaError(f"message content is not a string: {_excerpt(raw)!r}")
    return content


def chat(config: LlmConfig, messages, api_key=None, sleep=time.sleep) -> str:
    """One completion, retried with exponential backoff on transport errors.

    Authentication failures are raised at once: retrying cannot fix them.
    """
    check_messages(messages)
    config = config.resolved()
    if api_key is None:
        api_key = os.environ.get(API_KEY_ENV)
    last = None
    for attempt in range(config.max_retries):
        try:
            return _chat_once(config, messages, api_key)
        except ChatAuthError:
            raise
        except ChatError as exc:
            last = exc
            if attempt + 1 < config.max_retries and config.backoff > 0:
                sleep(config.backoff * 2 ** attempt)
    raise last


class HttpChat:
    """Chat backend bound to one configuration."""

    def __init__(self, config: LlmConfig, api_key=None):
        self.config = config
        self.api_key = api_key

    def __call__(self, messages) -> str:
        return chat(self.config, messages, self.api_key)
