"""Black-box classifiers reached over a subprocess line protocol or HTTP.

Wire format (bit-exact): newline-delimited UTF-8 JSON objects.
Request  ``{"id": n, "features": {name: value, ...}}`` with ``n`` a
nonnegative integer, strictly increasing per transport.
Response ``{"id": n, "label": "token"}``. One object per line, flushed per
line. Responses are matched to requests by id, never by arrival order, so
the remote side may batch or reorder within the pipeline window.
"""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
import urllib.error
import urllib.request
from typing import Sequence

from .classifiers import Classifier, ClassifierError
from .model import Entity

DEFAULT_TIMEOUT = 10.0
DEFAULT_WINDOW = 32


class ExternalError(ClassifierError):
    """Base for transport-level classification failures."""


class ExternalTimeout(ExternalError):
    """No response arrived within the per-response timeout."""


class ExternalProtocol(ExternalError):
    """The remote side broke the wire protocol (bad id, unknown label,
    malformed line, closed stream)."""


_EOF = object()


class SubprocessClassifier(Classifier):
    """Classifier served by a child process speaking the stdio protocol.

    At most ``window`` requests are kept in flight; a single transport is
    serialized behind one lock, so concurrent callers funnel through it and
    results stay deterministic regardless of caller count.
    """

    kind = "external"

    def __init__(
        self,
        argv: Sequence[str],
        classes: Sequence[str],
        window: int = DEFAULT_WINDOW,
        timeout: float = DEFAULT_TIMEOUT,
        cache: bool = True,
    ):
        super().__init__(classes, cache=cache)
        if window < 1:
            raise ValueError("pipeline window must be >= 1")
        self.argv = list(argv)
        self.window = window
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._next_id = 0
        self._lock = threading.Lock()

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as err:
            raise ExternalProtocol(f"cannot start {self.argv[0]!r}: {err}") from None
        thread = threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True)
        thread.start()

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _send(self, obj: dict) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as err:
            raise ExternalProtocol(f"classifier process closed stdin: {err}") from None

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ExternalTimeout(
                f"no response within {self.timeout}s from {self.argv[0]!r}"
            ) from None
        if line is _EOF:
            raise ExternalProtocol("classifier process closed stdout")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise ExternalProtocol(f"malformed response line: {line!r}") from None
        if not isinstance(obj, dict):
            raise ExternalProtocol(f"response is not an object: {line!r}")
        return obj

    def classify_batch(self, es: Sequence[Entity]) -> list[str]:
        with self._lock:
            results: list[str | None] = [None] * len(es)
            todo: list[tuple[int, Entity]] = []
            for i, e in enumerate(es):
                if self._cache is not None:
                    hit = self._cache.get(e.key())
                    if hit is not None:
                        results[i] = hit
                        continue
                todo.append((i, e))
            if not todo:
                return results  # type: ignore[return-value]
            self._ensure_started()
            pending: dict[int, tuple[int, Entity]] = {}
            sent = 0
            while pending or sent < len(todo):
                while sent < len(todo) and len(pending) < self.window:
                    i, e = todo[sent]
                    rid = self._next_id
                    self._next_id += 1
                    self._send({"id": rid, "features": e.as_dict()})
                    pending[rid] = (i, e)
                    sent += 1
                obj = self._recv()
                rid = obj.get("id")
                if not isinstance(rid, int) or rid not in pending:
                    raise ExternalProtocol(f"response carries unexpected id {rid!r}")
                label = obj.get("label")
                i, e = pending.pop(rid)
                if not isinstance(label, str) or label not in self.classes:
                    err = ExternalProtocol(f"unknown label {label!r} for request {rid}")
                    err.batch_index = i
                    raise err
                results[i] = label
                if self._cache is not None:
                    self._cache[e.key()] = label
            return results  # type: ignore[return-value]

    def _classify(self, e: Entity) -> str:
        return self.classify_batch([e])[0]

    def classify(self, e: Entity) -> str:
        # classify_batch already consults the cache; bypass the base wrapper
        return self.classify_batch([e])[0]

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=2)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self) -> "SubprocessClassifier":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class HttpClassifier(Classifier):
    """Classifier behind ``POST /classify``: same request and response
    bodies as the subprocess protocol, one entity per request."""

    kind = "http"

    def __init__(
        self,
        url: str,
        classes: Sequence[str],
        timeout: float = DEFAULT_TIMEOUT,
        cache: bool = True,
    ):
        super().__init__(classes, cache=cache)
        base = url.rstrip("/")
        self.url = base if base.endswith("/classify") else base + "/classify"
        self.timeout = timeout
        self._next_id = 0
        self._lock = threading.Lock()

    def _classify(self, e: Entity) -> str:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
        body = json.dumps({"id": rid, "features": e.as_dict()}).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = resp.read()
        except (TimeoutError, socket.timeout):
            raise ExternalTimeout(f"no response within {self.timeout}s from {self.url}") from None
        except urllib.error.URLError as err:
            if isinstance(err.reason, (TimeoutError, socket.timeout)):
                raise ExternalTimeout(
                    f"no response within {self.timeout}s from {self.url}"
                ) from None
            raise ExternalProtocol(f"request to {self.url} failed: {err}") from None
        try:
            obj = json.loads(payload)
        except json.JSONDecodeError:
            raise ExternalProtocol(f"malformed response body: {payload!r}") from None
        if not isinstance(obj, dict) or obj.get("id") != rid:
            raise ExternalProtocol(f"response does not match request {rid}: {obj!r}")
        label = obj.get("label")
        if not isinstance(label, str) or label not in self.classes:
            raise ExternalProtocol(f"unknown label {label!r} for request {rid}")
        return label
