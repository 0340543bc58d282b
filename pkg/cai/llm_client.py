"""
LLM Client
Provider-agnostic completion calls with a concurrency cap, a per-minute request
budget and retries with exponential backoff.

Backends:
- mock:   the commitment pattern grammar answering the three prompt kinds
- remote: HTTP POST {"prompt", "temperature", "top_p", "top_k", "max_tokens", "seed"?}
          -> {"text"} with a bearer token
"""

import collections
import json
import logging
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import requests

from cai import patterns
from cai.errors import ConfigError, ExtractionError

logger = logging.getLogger(__name__)

TASK_EXTRACT, TASK_ENTITY, TASK_BOUNDARY = 'extract', 'entity_match', 'boundary'

INPUT_MARKER = '### Input context'
OUTPUT_MARKER = '### Output'

_RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}
_TOKEN_LIMIT_STATUS = {400, 413}
_AUTH_STATUS = {401, 403}


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    temperature: float = 0.0
    top_p: float = 0.0
    top_k: int = 1
    max_output_tokens: int = 1024
    seed: Optional[int] = None
    # hints for the mock backend; never sent over the wire
    task: str = TASK_EXTRACT
    leading_fragment: bool = False

    def payload(self) -> Dict[str, Any]:
        body = {
            'prompt': self.prompt,
            'temperature': self.temperature,
            'top_p': self.top_p,
            'top_k': self.top_k,
            'max_tokens': self.max_output_tokens,
        }
        if self.seed is not None:
            body['seed'] = self.seed
        return body


@dataclass(frozen=True)
class LlmResponse:
    text: str


class TransientLlmError(ExtractionError):
    """A failure worth retrying (timeouts, connection resets, 429, 5xx)."""


class MockLlmBackend:
    """
    Deterministic stand-in for a hosted model.

    Extraction prompts are answered by running the pattern grammar over the text
    between the input marker and the output marker; auxiliary prompts are answered
    from their "Entity name:"/"Company name:" or "Target wording:"/"Sub-context:" lines.
    """
    name = 'mock'

    def complete(self, request: LlmRequest) -> LlmResponse:
        if request.task == TASK_ENTITY:
            entity = _prompt_field(request.prompt, 'Entity name')
            company = _prompt_field(request.prompt, 'Company name')
            return LlmResponse('yes' if patterns.entity_matches(entity, company) else 'no')
        if request.task == TASK_BOUNDARY:
            wording = _prompt_field(request.prompt, 'Target wording')
            sub_context = _prompt_field(request.prompt, 'Sub-context')
            return LlmResponse(patterns.boundary_of(wording, sub_context))
        records = patterns.pattern_extract(input_section(request.prompt), request.leading_fragment)
        return LlmResponse(json.dumps(records, ensure_ascii=False))


def input_section(prompt: str) -> str:
    """Text between the last input marker and the output marker (whole prompt if unmarked)."""
    start = prompt.rfind(INPUT_MARKER)
    if start < 0:
        return prompt
    body = prompt[start + len(INPUT_MARKER):]
    end = body.rfind(OUTPUT_MARKER)
    return body[:end] if end >= 0 else body


def _prompt_field(prompt: str, label: str) -> str:
    match = re.search(rf'^{re.escape(label)}:[ \t]*(.*)$', prompt, re.MULTILINE)
    return match.group(1).strip() if match else ''


class RemoteLlmBackend:
    name = 'remote'

    def __init__(self, url: str, token: Optional[str] = None, timeout: int = 60,
                 session: Optional[requests.Session] = None):
        if not url:
            raise ConfigError("CAI_LLM_URL is not set for the remote LLM backend")
        self.url = url
        self.token = token
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete(self, request: LlmRequest) -> LlmResponse:
        headers = {'Content-Type': 'application/json'}
        if self.token:
            headers['Authorization'] = f'Bearer {self.token}'
        try:
            response = self.session.post(self.url, json=request.payload(),
                                         headers=headers, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            raise TransientLlmError(f"LLM endpoint unreachable: {e}") from e
        except requests.RequestException as e:
            raise ExtractionError(f"LLM request failed: {e}") from e

        status = response.status_code
        if status in _AUTH_STATUS:
            raise ExtractionError(f"LLM authentication failed (HTTP {status})")
        if status in _TOKEN_LIMIT_STATUS:
            raise ExtractionError(
                f"LLM rejected the request (HTTP {status}, token limit?): {response.text[:200]}")
        if status in _RETRYABLE_STATUS:
            raise TransientLlmError(f"LLM HTTP {status}")
        if status != 200:
            raise ExtractionError(f"LLM HTTP {status}: {response.text[:200]}")
        try:
            return LlmResponse(str(response.json()['text']))
        except (ValueError, KeyError, TypeError) as e:
            raise ExtractionError(f"malformed LLM response: {e}") from e


class RateLimiter:
    """Sliding one-minute window of request start times."""

    def __init__(self, requests_per_minute: int,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.requests_per_minute = requests_per_minute
        self.clock = clock
        self.sleep = sleep
        self._starts: collections.deque = collections.deque()
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            now = self.clock()
            while self._starts and now - self._starts[0] >= 60.0:
                self._starts.popleft()
            if len(self._starts) >= self.requests_per_minute:
                wait = 60.0 - (now - self._starts[0])
                logger.debug(f"Request budget spent, waiting {wait:.1f}s")
                self.sleep(wait)
                self._starts.popleft()
                now = self.clock()
            self._starts.append(now)


class LlmClient:
    """
    Wraps a backend with the run-wide limits.

    Features:
    - at most max_concurrency requests in flight
    - at most requests_per_minute request starts per minute
    - up to max_attempts tries on transient failures, backoff doubling each time
    """

    def __init__(self, backend, max_concurrency: int = 4, requests_per_minute: int = 60,
                 max_attempts: int = 3, backoff_seconds: float = 1.0,
                 sleep: Callable[[float], None] = time.sleep,
                 clock: Callable[[], float] = time.monotonic):
        self.backend = backend
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._limiter = RateLimiter(requests_per_minute, clock=clock, sleep=sleep)

    @classmethod
    def from_config(cls, config, session: Optional[requests.Session] = None) -> 'LlmClient':
        if config['llm.backend'] == 'remote':
            secrets = config.secrets('llm')
            backend = RemoteLlmBackend(secrets['url'], secrets['token'],
                                       timeout=config['llm.timeout_seconds'], session=session)
        else:
            backend = MockLlmBackend()
        logger.info(f"LLM backend: {backend.name}")
        return cls(backend,
                   max_concurrency=config['llm.max_concurrency'],
                   requests_per_minute=config['llm.requests_per_minute'],
                   max_attempts=config['llm.max_attempts'],
                   backoff_seconds=config['llm.backoff_seconds'])

    def complete(self, request: LlmRequest,
                 provenance: Optional[Dict[str, Any]] = None) -> LlmResponse:
        last_error: Optional[Exception] = None
        for attempt in range(1, self.max_attempts + 1):
            self._limiter.acquire()
            with self._slots:
                try:
                    return self.backend.complete(request)
                except TransientLlmError as e:
                    last_error = e
                except ExtractionError as e:
                    raise ExtractionError(e.message, provenance) from e
            if attempt < self.max_attempts:
                delay = self.backoff_seconds * (2 ** (attempt - 1))
                logger.warning(f"LLM attempt {attempt}/{self.max_attempts} failed "
                               f"({last_error.message}); retrying in {delay:.1f}s")
                self.sleep(delay)
        raise ExtractionError(
            f"LLM call failed after {self.max_attempts} attempts: {last_error.message}",
            provenance) from last_error


def call_llm(request: LlmRequest, backend,
             provenance: Optional[Dict[str, Any]] = None) -> LlmResponse:
    """Complete a request through a client, wrapping a bare backend with default limits."""
    client = backend if isinstance(backend, LlmClient) else LlmClient(backend)
    return client.complete(request, provenance)
