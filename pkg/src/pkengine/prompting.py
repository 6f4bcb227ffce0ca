"""Condition evaluation by prompting a remote completion endpoint.

The wire contract is a single text-in/text-out completion call so any
provider or local stub satisfies it: POST ``{"prompt": <text>}`` to the
endpoint, read the completion from a ``text`` field (or the raw body).
Verdicts come from the response's first alphabetic token, parsed
case-insensitively as yes/no; anything else is an abstain, which counts
as unsatisfied for labeling but stays flagged.  Label derivation reuses
the rule engine's hard semantics so prompting differs from embedding
evaluation only in how condition truths are produced.

Replay fixtures map sha256(prompt) to response text, which makes batch
runs byte-deterministic and network-free.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from .engine import rule_trace
from .errors import PkEngineError, ReplayError, TransportError
from .pk import Condition, ProcessKnowledge

logger = logging.getLogger(__name__)

SATISFIED = "satisfied"
UNSATISFIED = "unsatisfied"
ABSTAIN = "abstain"

SENTIMENT_QUESTION = "positive sentiment"

AUTH_TOKEN_ENV = "PK_COMPLETION_TOKEN"

_FIRST_WORD_RE = re.compile(r"[A-Za-z]+")


@dataclass(frozen=True)
class PromptTemplate:
    """Template with exactly one {question} and one {post} placeholder."""

    template: str

    def __post_init__(self):
        for placeholder in ("{question}", "{post}"):
            count = self.template.count(placeholder)
            if count != 1:
                raise PkEngineError(
                    f"template must contain {placeholder} exactly once, found {count}"
                )

    def render(self, question: str, post: str) -> str:
        return self.template.replace("{question}", question).replace("{post}", post)

    @classmethod
    def load(cls, path: str | Path) -> "PromptTemplate":
        return cls(Path(path).read_text(encoding="utf-8"))


class CompletionClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class TokenBucket:
    """Blocking token-bucket rate limiter shared by a client's requests."""

    def __init__(self, rate_per_second: float, capacity: int = 1):
        if rate_per_second <= 0:
            raise PkEngineError("rate must be positive")
        self.rate = rate_per_second
        self.capacity = float(capacity)
        self.tokens = float(capacity)
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


@dataclass
class HttpCompletionClient:
    """Minimal completion client; auth token read from the environment.

    The token is attached as a bearer header and never logged.
    """

    endpoint: str
    timeout: float = 30.0
    retries: int = 3
    token_env: str = AUTH_TOKEN_ENV
    bucket: TokenBucket | None = None

    def complete(self, prompt: str) -> str:
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if self.bucket is not None:
                self.bucket.acquire()
            try:
                resp = httpx.post(
                    self.endpoint, json={"prompt": prompt}, headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                try:
                    body = resp.json()
                    if isinstance(body, dict) and "text" in body:
                        return str(body["text"])
                except json.JSONDecodeError:
                    pass
                return resp.text
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("completion attempt %d/%d failed: %s",
                               attempt + 1, self.retries, type(exc).__name__)
                time.sleep(min(2.0**attempt * 0.1, 2.0))
        raise TransportError(f"completion endpoint failed after {self.retries} attempts: "
                             f"{type(last_error).__name__}")


def request_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ReplayClient:
    """Record-replay wrapper keyed by request hash.

    In replay mode (no inner client) a missing fixture entry is an error;
    in record mode responses from the inner client are appended to the
    fixture file as they arrive.
    """

    def __init__(self, fixture_path: str | Path, inner: CompletionClient | None = None):
        self.path = Path(fixture_path)
        self.inner = inner
        self.responses: dict[str, str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        self.responses[rec["hash"]] = rec["response"]
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise ReplayError(f"{self.path}:{lineno}: bad fixture record: {exc}")

    def complete(self, prompt: str) -> str:
        key = request_hash(prompt)
        if key in self.responses:
            return self.responses[key]
        if self.inner is None:
            raise ReplayError(f"no recorded response for request hash {key}")
        response = self.inner.complete(prompt)
        self.responses[key] = response
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"hash": key, "prompt": prompt, "response": response}) + "\n")
        return response


def parse_answer(response: str) -> str:
    """First alphabetic token, case-insensitive yes/no; anything else abstains."""
    m = _FIRST_WORD_RE.search(response)
    if m:
        word = m.group(0).lower()
        if word == "yes":
            return SATISFIED
        if word == "no":
            return UNSATISFIED
    logger.info("abstaining on unparseable answer: %r", response)
    return ABSTAIN


def evaluate_condition_by_prompt(
    client: CompletionClient, template: PromptTemplate, condition: Condition, post: str
) -> str:
    if not post:
        raise PkEngineError("post must be non-empty")
    return parse_answer(client.complete(template.render(condition.text, post)))


@dataclass
class PromptPrediction:
    label: str
    verdicts: dict[str, str]
    abstained: list[str] = field(default_factory=list)
    sentiment: str = ABSTAIN
    trace: list[str] = field(default_factory=list)


def prompt_predict(
    client: CompletionClient,
    template: PromptTemplate,
    pk: ProcessKnowledge,
    post: str,
) -> PromptPrediction:
    """Evaluate every condition (plus a sentiment probe) and derive the label.

    Abstains count as unsatisfied but are listed in ``abstained``.
    """
    verdicts: dict[str, str] = {}
    for cond in pk.conditions:
        verdicts[cond.id] = evaluate_condition_by_prompt(client, template, cond, post)
    satisfied = {cid: verdict == SATISFIED for cid, verdict in verdicts.items()}
    label, trace = rule_trace(pk, satisfied)
    sentiment = parse_answer(client.complete(template.render(SENTIMENT_QUESTION, post)))
    return PromptPrediction(
        label=label,
        verdicts=verdicts,
        abstained=[cid for cid, verdict in verdicts.items() if verdict == ABSTAIN],
        sentiment=sentiment,
        trace=trace,
    )
