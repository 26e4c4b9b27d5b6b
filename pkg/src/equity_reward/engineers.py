"""Reward engineers: whoever proposes the weight vector each round.

``ScriptedEngineer`` replays fixed weight tables.  ``HttpEngineer`` talks to
any OpenAI-style chat-completion endpoint (``POST {base_url}/chat/completions``).
"""

from __future__ import annotations

import json
import logging
import os
import time
from typing import Protocol

import httpx

from .errors import ConfigurationError, TransportError

log = logging.getLogger(__name__)

API_KEY_ENV = "OCCUREWARD_API_KEY"

# Only the round-3 equity weight (0.15) and the direction of the round-3
# solar/SoC shift come from the reference study; the other numbers are ours.
DEFAULT_WEIGHT_TABLE = {
    1: {"cost": 1.0, "carbon": 0.8, "solar": 0.2, "soc": 0.2, "equity": 0.0},
    2: {"cost": 1.2, "carbon": 1.0, "solar": 0.2, "soc": 0.2, "equity": 0.0},
    3: {"cost": 1.0, "carbon": 0.8, "solar": 0.6, "soc": 0.5, "equity": 0.15},
}


class Engineer(Protocol):
    provenance: str
    calls: int

    def complete(self, messages: list[dict], round_no: int) -> str: ...


class ScriptedEngineer:
    """Deterministic engineer.

    ``responses`` optionally maps a round to a list of raw replies that are
    returned in order before falling back to the weight table, which is how
    tests script a protocol violation followed by a repaired answer.
    """

    provenance = "scripted"

    def __init__(self, table: dict | None = None, responses: dict | None = None):
        self.table = {int(k): dict(v) for k, v in (table or DEFAULT_WEIGHT_TABLE).items()}
        self.responses = {int(k): list(v) for k, v in (responses or {}).items()}
        self.calls = 0
        self.calls_by_round: dict[int, int] = {}

    def complete(self, messages: list[dict], round_no: int) -> str:
        self.calls += 1
        self.calls_by_round[round_no] = self.calls_by_round.get(round_no, 0) + 1
        queued = self.responses.get(round_no)
        if queued:
            return queued.pop(0)
        if round_no not in self.table:
            raise ConfigurationError(f"scripted engineer has no weights for round {round_no}")
        return json.dumps(self.table[round_no])


class HttpEngineer:
    provenance = "remote-engineer"

    def __init__(self, base_url: str, model: str, *, api_key: str | None = None,
                 timeout: float = 60.0, retries: int = 3, temperature: float | None = 0.0,
                 backoff: float = 1.0, client: httpx.Client | None = None):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise ConfigurationError(f"{API_KEY_ENV} is not set")
        if not base_url or not model:
            raise ConfigurationError("remote engineer needs a base URL and a model name")
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.retries = max(1, retries)
        self.backoff = backoff
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._client = client or httpx.Client(timeout=timeout)
        self.calls = 0

    def complete(self, messages: list[dict], round_no: int) -> str:
        self.calls += 1
        body = {"model": self.model, "messages": messages}
        if self.temperature is not None:
            body["temperature"] = self.temperature
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._client.post(self.url, json=body, headers=self._headers)
            except httpx.HTTPError as e:
                last = e
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = TransportError(f"HTTP {resp.status_code} from {self.url}")
                elif resp.status_code >= 400:
                    # client errors will not improve on retry
                    raise TransportError(f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}")
                else:
                    return _message_text(resp)
            log.warning("engineer request failed (attempt %d/%d): %s", attempt + 1, self.retries, last)
            if attempt + 1 < self.retries and self.backoff:
                time.sleep(self.backoff * 2**attempt)
        raise TransportError(f"engineer unreachable after {self.retries} attempts: {last}")


def _message_text(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise TransportError(f"malformed chat-completion response: {e!r}") from e
    if not isinstance(content, str):
        raise TransportError("endpoint returned non-text content")
    return content
