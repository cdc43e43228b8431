from __future__ import annotations

import socket
import threading

import httpx
import pytest

from biometaphor.reasoning import ChatRequest

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    if report.when == "call" or failed:
        previous = _ACCEPTANCE.get(number, ("PASS", title))[0]
        status = "FAIL" if failed or previous == "FAIL" else "PASS"
        _ACCEPTANCE[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"AC{number} {status} {title}")


class RecordingTransport(httpx.BaseTransport):
    """httpx transport that records requests and answers through ``handler``.

    With no handler every request fails as a connection error.
    """

    def __init__(self, handler=None) -> None:
        self.handler = handler
        self.requests: list[httpx.Request] = []
        self._lock = threading.Lock()

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        request.read()
        with self._lock:
            self.requests.append(request)
        if self.handler is None:
            raise httpx.ConnectError("connection refused", request=request)
        return self.handler(request)


class CountingBackend:
    """Wraps a reasoning backend and counts ``complete`` calls."""

    def __init__(self, inner, override=None) -> None:
        self.inner = inner
        self.config = inner.config
        self.override = override
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls.append(request)
        if self.override is not None:
            answer = self.override(request)
            if answer is not None:
                return answer
        return self.inner.complete(request)


@pytest.fixture
def no_network(monkeypatch):
    """Any socket connect attempt fails the test."""
    attempts: list = []

    def refuse(self, address, *args, **kwargs):
        attempts.append(address)
        raise AssertionError(f"unexpected network access to {address!r}")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", lambda address, *a, **k: refuse(None, address))
    return attempts


@pytest.fixture
def no_sleep():
    delays: list[float] = []
    return delays, delays.append
