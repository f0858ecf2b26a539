"""Rate-limited, restartable search collector writing post records as JSON lines.

Time is injected: ``clock()`` returns monotonic seconds and ``sleep(s)``
waits, so tests drive a ``SimulatedClock`` instead of the wall clock.
"""
from __future__ import annotations

import collections
import json
import logging
import os
import time
import urllib.parse
import urllib.request
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

from .errors import RestartsExhausted, SinkError, TransportError, ValidationError
from .tweet_store import TweetRecord, record_from_obj

log = logging.getLogger(__name__)

DEFAULT_LIMIT = 180
DEFAULT_WINDOW = 15 * 60.0


@dataclass
class RateBudget:
    """Sliding-window request budget: at most ``limit`` requests per ``window`` seconds."""

    limit: int = DEFAULT_LIMIT
    window: float = DEFAULT_WINDOW
    ledger: collections.deque = field(default_factory=collections.deque)

    def __post_init__(self):
        if self.limit < 1 or self.window <= 0:
            raise ValidationError("rate budget needs limit >= 1 and a positive window")


@dataclass(frozen=True)
class Proceed:
    pass


@dataclass(frozen=True)
class Wait:
    duration: float


def acquire(budget: RateBudget, now: float) -> Proceed | Wait:
    """Take a slot if the trailing window has room, else say how long to wait.

    A request at time ``s`` occupies the window ``[s, s + window)``.
    """
    ledger = budget.ledger
    while ledger and ledger[0] + budget.window <= now:
        ledger.popleft()
    if len(ledger) < budget.limit:
        ledger.append(now)
        return Proceed()
    return Wait(ledger[0] + budget.window - now)


@dataclass
class SimulatedClock:
    now: float = 0.0

    def __call__(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("negative sleep")
        self.now += seconds

    def advance(self, seconds: float) -> None:
        self.sleep(seconds)


@dataclass(frozen=True)
class SearchPage:
    records: list[TweetRecord]
    continuation: str | None = None


class Transport(Protocol):
    def fetch(self, query: str, cursor: str | None) -> SearchPage: ...


@dataclass
class CollectorState:
    query: str
    cursor: str | None = None
    pages_fetched: int = 0
    records_written: int = 0
    done: bool = False
    last_error: str | None = None

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in (
            ("query", json.dumps(self.query)),
            ("cursor", json.dumps(self.cursor)),
            ("pages_fetched", self.pages_fetched),
            ("records_written", self.records_written),
            ("done", json.dumps(self.done)),
            ("last_error", json.dumps(self.last_error)),
        ))

    @classmethod
    def from_text(cls, text: str) -> "CollectorState":
        kv = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        return cls(
            query=json.loads(kv["query"]),
            cursor=json.loads(kv.get("cursor", "null")),
            pages_fetched=int(kv.get("pages_fetched", 0)),
            records_written=int(kv.get("records_written", 0)),
            done=json.loads(kv.get("done", "false")),
            last_error=json.loads(kv.get("last_error", "null")),
        )


class StateFile:
    """Key-value state persisted with write-then-rename."""

    def __init__(self, path):
        self.path = os.fspath(path)

    def load(self, query: str) -> CollectorState:
        if not os.path.exists(self.path):
            return CollectorState(query)
        with open(self.path, encoding="utf-8") as fh:
            state = CollectorState.from_text(fh.read())
        if state.query != query:
            raise ValidationError(f"state file belongs to query {state.query!r}")
        return state

    def save(self, state: CollectorState) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(state.to_text())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)


class JsonlSink:
    """Append-only JSON-lines record writer."""

    def __init__(self, path):
        self.path = os.fspath(path)

    def write(self, records: list[TweetRecord]) -> None:
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                for r in records:
                    fh.write(r.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise SinkError(str(exc)) from exc


class MemorySink:
    def __init__(self):
        self.records: list[TweetRecord] = []

    def write(self, records):
        self.records.extend(records)


class MemoryState:
    def __init__(self):
        self.saved: CollectorState | None = None

    def save(self, state):
        self.saved = replace(state)


def collect(
    transport: Transport,
    query: str,
    state: CollectorState,
    budget: RateBudget,
    sink,
    persist: Callable[[CollectorState], None] | None = None,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
) -> CollectorState:
    """Page through ``query`` from ``state.cursor`` until no continuation remains.

    Records reach the sink before the state is persisted, so a crash in
    between replays at most one page. A ``TransportError`` is recorded in
    ``last_error`` and returned; the caller decides whether to restart.
    """
    state = replace(state, query=query, last_error=None)
    save = persist or (lambda s: None)
    while not state.done:
        decision = acquire(budget, clock())
        if isinstance(decision, Wait):
            log.info("rate budget exhausted, waiting %.1fs", decision.duration)
            sleep(decision.duration)
            continue
        try:
            page = transport.fetch(query, state.cursor)
        except TransportError as exc:
            state = replace(state, last_error=str(exc) or type(exc).__name__)
            save(state)
            return state
        sink.write(page.records)
        state = replace(
            state,
            cursor=page.continuation,
            pages_fetched=state.pages_fetched + 1,
            records_written=state.records_written + len(page.records),
            done=page.continuation is None,
        )
        save(state)
    return state


def supervise(
    task: Callable[[CollectorState], CollectorState],
    initial: CollectorState,
    max_restarts: int = 5,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> CollectorState:
    """Rerun ``task`` after recoverable errors with exponential backoff.

    ``task`` takes the state to resume from and returns the state it
    stopped at. Raises ``RestartsExhausted`` once ``max_restarts`` reruns
    have all failed; everything already written stays in the sink.
    """
    if max_restarts < 0:
        raise ValidationError("max_restarts must be >= 0")
    state = task(initial)
    restarts = 0
    while state.last_error is not None:
        if restarts >= max_restarts:
            raise RestartsExhausted(state)
        delay = backoff * (2 ** restarts)
        log.warning("collector stopped (%s); restart %d in %.1fs", state.last_error, restarts + 1, delay)
        sleep(delay)
        restarts += 1
        state = task(state)
    return state


# -- transports ------------------------------------------------------------------

class ScriptedTransport:
    """Deterministic mock search API driven by a script.

    Script (JSON)::

        {"pages": [{"records": [...], "continuation": "p2"}, ...],
         "errors": {"p2": 1}}

    Page ``k`` is served for the cursor named by page ``k-1`` (page 0 for
    cursor ``null``). ``errors`` maps a cursor (``""`` for the first page) to
    how many times fetching it fails before succeeding. Every successful
    fetch is logged in ``served`` as ground truth.
    """

    def __init__(self, pages: list[SearchPage], errors: dict[str, int] | None = None):
        self.pages = pages
        self.by_cursor: dict[str | None, SearchPage] = {None: pages[0]} if pages else {}
        for prev, page in zip(pages, pages[1:]):
            self.by_cursor[prev.continuation] = page
        self.errors = dict(errors or {})
        self.served: list[SearchPage] = []
        self.calls = 0

    @classmethod
    def from_script(cls, script: dict | str) -> "ScriptedTransport":
        if isinstance(script, str):
            script = json.loads(script)
        pages = []
        for k, p in enumerate(script.get("pages", [])):
            recs = []
            for j, obj in enumerate(p.get("records", [])):
                rec = record_from_obj(obj, j + 1)
                if rec is not None:
                    recs.append(rec)
            pages.append(SearchPage(recs, p.get("continuation")))
        return cls(pages, script.get("errors"))

    def fetch(self, query: str, cursor: str | None) -> SearchPage:
        self.calls += 1
        key = "" if cursor is None else cursor
        if self.errors.get(key, 0) > 0:
            self.errors[key] -= 1
            raise TransportError(f"scripted failure at cursor {key!r}")
        if not self.pages:
            page = SearchPage([], None)
        elif cursor not in self.by_cursor:
            raise TransportError(f"unknown cursor {cursor!r}")
        else:
            page = self.by_cursor[cursor]
        self.served.append(page)
        return page


class HttpTransport:
    """Thin adapter for a JSON search endpoint returning ``{"records": [...], "next": ...}``.

    Not exercised by the test suite.
    """

    def __init__(self, url: str, token: str | None = None, timeout: float = 30.0):
        self.url = url
        self.token = token
        self.timeout = timeout

    def fetch(self, query: str, cursor: str | None) -> SearchPage:
        params = {"q": query}
        if cursor:
            params["next"] = cursor
        req = urllib.request.Request(f"{self.url}?{urllib.parse.urlencode(params)}")
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.load(resp)
        except (OSError, ValueError) as exc:
            raise TransportError(str(exc)) from exc
        recs = [r for j, obj in enumerate(body.get("records", []))
                if (r := record_from_obj(obj, j + 1)) is not None]
        return SearchPage(recs, body.get("next"))
