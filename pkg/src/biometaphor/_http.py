"""JSON-over-HTTP POST with bounded retries, shared by the remote backends."""

from __future__ import annotations

import logging
import random
import time
from typing import Callable

import httpx

from .errors import BackendError, SizeLimitError, TransportError

log = logging.getLogger(__name__)

BACKOFF_BASE_S = 0.25
_TRANSIENT_STATUS = frozenset({408, 429, 500, 502, 503, 504})


def redact(text: str, secret: str | None) -> str:
    if secret:
        text = text.replace(secret, "***")
    return text


def post_json(
    url: str,
    payload: dict,
    *,
    headers: dict[str, str],
    timeout_s: float,
    max_retries: int,
    transport: httpx.BaseTransport | None = None,
    secret: str | None = None,
    max_response_bytes: int | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: Callable[[], float] = random.random,
) -> httpx.Response:
    """POST ``payload``; retry network errors and transient statuses.

    Backoff is full jitter: ``uniform(0, base * 2**attempt)``.
    """
    attempts = 0
    last_error = ""
    with httpx.Client(transport=transport, timeout=timeout_s) as client:
        while True:
            attempts += 1
            try:
                response = client.post(url, json=payload, headers=headers)
            except httpx.TransportError as exc:  # includes timeouts
                last_error = redact(f"{type(exc).__name__}: {exc}", secret)
                status = None
            else:
                status = response.status_code
                if max_response_bytes is not None and len(response.content) > max_response_bytes:
                    raise SizeLimitError(
                        f"response of {len(response.content)} bytes exceeds "
                        f"limit of {max_response_bytes}"
                    )
                if 200 <= status < 300:
                    return response
                excerpt = redact(response.text[:200], secret)
                if status not in _TRANSIENT_STATUS or attempts > max_retries:
                    raise BackendError(
                        f"{url} answered {status}: {excerpt}", status=status, body_excerpt=excerpt
                    )
                last_error = f"status {status}"
            if attempts > max_retries:
                raise TransportError(
                    f"{url} unreachable after {attempts} attempts: {last_error}", attempts
                )
            delay = rng() * BACKOFF_BASE_S * (2 ** (attempts - 1))
            log.warning("attempt %d to %s failed (%s); retrying in %.2fs", attempts, url, last_error, delay)
            sleep(delay)
