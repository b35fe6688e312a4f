"""Shared plumbing: hashing, atomic writes, retries, rate limiting, transcripts."""
from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def stable_json(obj: Any) -> str:
    """Deterministic single-line JSON, used for hashing and journal lines."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write-then-rename so a reader never observes a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(Path(path), text.encode("utf-8"))


class TransportError(RuntimeError):
    """Network-level failure (timeout, connection reset, 5xx). Retryable."""


def retry_transport(
    fn: Callable[[], Any],
    attempts: int = 3,
    base_delay: float = 0.5,
    jitter: float = 0.25,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> Any:
    """Call fn(), retrying on TransportError with exponential backoff plus jitter.

    Content-level errors propagate immediately; only transport failures retry.
    """
    rng = rng or random.Random()
    last: TransportError | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except TransportError as exc:
            last = exc
            if attempt + 1 < attempts:
                sleep(base_delay * (2**attempt) + rng.uniform(0.0, jitter))
    raise TransportError(f"gave up after {attempts} attempts: {last}") from last


class TokenBucket:
    """Thread-safe token bucket shared by remote callers of one backend."""

    def __init__(
        self,
        rate_per_sec: float,
        burst: int = 1,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate_per_sec <= 0:
            raise ValueError("rate_per_sec must be positive")
        self.rate = float(rate_per_sec)
        self.capacity = max(1, int(burst))
        self._tokens = float(self.capacity)
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
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]")


class TranscriptWriter:
    """Persists one JSON file per backend call under a run directory."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def write(self, subdir: str, name: str, payload: dict) -> Path:
        target = self.root / subdir
        target.mkdir(parents=True, exist_ok=True)
        path = target / f"{_SAFE_NAME.sub('_', name)}.json"
        atomic_write_text(path, json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
        return path
