"""Deterministic discrete-event FaaS runtime.

Everything happens on a virtual millisecond clock: function dispatch,
execution, suspension, event delivery. Two runs with the same registrations,
schedule and latency model produce byte-identical traces. Simulated functions
are either pure values or generators that yield commands (sleep, call,
call_async, suspend_on, durable_timer, busy_join) back to the simulation,
which interprets them over virtual time.
"""

from __future__ import annotations

import heapq
import inspect
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional

from .errors import (
    DuplicateName,
    FunctionFailed,
    LivelockGuard,
    NotRunning,
    PayloadTooLarge,
    SimulatedFault,
    SuspendLimitExceeded,
    UnknownFunction,
)

Payload = Any  # any JSON-serializable value

DEFAULT_SUSPEND_LIMIT_MS = 24 * 60 * 60 * 1000  # providers kill suspended state after a day
DEFAULT_ACTION_BUDGET = 5_000_000


def encode_payload(payload: Payload) -> str:
    """Canonical JSON encoding used for sizing and trace export."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def payload_bytes(payload: Payload) -> int:
    """Size of a payload in bytes under the canonical encoding."""
    if payload is None:
        return 0
    return len(encode_payload(payload).encode("utf-8"))


class VirtualClock:
    """Monotonic virtual clock with a FIFO tie-break on equal fire times."""

    def __init__(self) -> None:
        self.now: int = 0
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0

    def push(self, fire_time: int, action: Callable[[], None]) -> None:
        if fire_time < self.now:
            raise ValueError(f"cannot schedule at {fire_time} before now={self.now}")
        self._seq += 1
        heapq.heappush(self._queue, (fire_time, self._seq, action))

    def pop(self) -> Callable[[], None]:
        fire_time, _, action = heapq.heappop(self._queue)
        self.now = fire_time
        return action

    def __len__(self) -> int:
        return len(self._queue)


@dataclass
class LatencyModel:
    """Platform latency parameters, all in virtual milliseconds.

    per_kb_transfer_ms is a serialization cost applied each time a payload
    crosses a boundary; the optional cliff adds a flat penalty once a payload
    reaches cliff_threshold_bytes (models degraded large-message handling).
    active_ack_bypass selects whether async results travel straight through
    the message queue or through the system of record first.
    """

    invoke_latency_ms: int = 0
    queue_latency_ms: int = 0
    log_write_ms: int = 0
    per_kb_transfer_ms: float = 0.0
    active_ack_bypass: bool = True
    cliff_threshold_bytes: int | None = None
    cliff_delay_ms: int = 0

    def __post_init__(self) -> None:
        for name in ("invoke_latency_ms", "queue_latency_ms", "log_write_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.per_kb_transfer_ms < 0 or self.cliff_delay_ms < 0:
            raise ValueError("latencies must be >= 0")

    def transfer_ms(self, nbytes: int) -> int:
        """Serialization cost for moving nbytes across a boundary."""
        cost = round(self.per_kb_transfer_ms * nbytes / 1024)
        if self.cliff_threshold_bytes is not None and nbytes >= self.cliff_threshold_bytes:
            cost += self.cliff_delay_ms
        return cost

    def delivery_extra_ms(self) -> int:
        """Extra delay on async result delivery when the record path is used."""
        return 0 if self.active_ack_bypass else self.log_write_ms


@dataclass(frozen=True)
class Event:
    """A keyed payload delivered through the platform event bus."""

    key: str
    payload: Payload = None
    fire_time: int | None = None

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("event key must be non-empty")


class InvocationState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    SUSPENDED = "suspended"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class InvocationRecord:
    """One function execution with its billing intervals.

    billed_intervals are half-open [start, end) spans of virtual ms during
    which the invocation accrues charges; suspension closes the open interval
    so waits are never billed.
    """

    id: str
    function: str
    parent: str | None = None
    submit_time: int = 0
    start_time: int | None = None
    end_time: int | None = None
    billed_intervals: list[tuple[int, int]] = field(default_factory=list)
    state: InvocationState = InvocationState.PENDING
    input_bytes: int = 0
    output_bytes: int = 0
    output: Payload = None
    orchestrator: bool = False
    failure: str | None = None

    @property
    def billed_ms(self) -> int:
        return sum(b - a for a, b in self.billed_intervals)

    @property
    def done(self) -> bool:
        return self.state in (InvocationState.COMPLETED, InvocationState.FAILED)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "function": self.function,
            "parent": self.parent,
            "submit_time": self.submit_time,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "billed_intervals": [list(iv) for iv in self.billed_intervals],
            "state": self.state.value,
            "input_bytes": self.input_bytes,
            "output_bytes": self.output_bytes,
            "output": self.output,
            "orchestrator": self.orchestrator,
            "failure": self.failure,
        }


# --- commands yielded by simulated function bodies ---------------------------

@dataclass(frozen=True)
class Sleep:
    """Busy-wait for a fixed duration; billing continues."""

    duration_ms: int


@dataclass(frozen=True)
class Call:
    """Invoke a function and block on its result; the caller stays billed."""

    function: str
    payload: Payload = None


@dataclass(frozen=True)
class CallAsync:
    """Start a function; its output is published on completion_key."""

    function: str
    payload: Payload = None
    completion_key: str = ""


@dataclass(frozen=True)
class SuspendOn:
    """Passivate until an event with this key fires; billing stops."""

    key: str


@dataclass(frozen=True)
class DurableTimer:
    """Passivate for a fixed delay without consuming billed time."""

    duration_ms: int


@dataclass(frozen=True)
class BusyJoin:
    """Stay running (billed) until every listed event key has fired."""

    keys: tuple[str, ...]


@dataclass(frozen=True)
class Failure:
    """Payload marker carried by completion events of failed invocations."""

    message: str


# --- function definitions ----------------------------------------------------

Behavior = Callable[[Payload], Any]


@dataclass
class FunctionDef:
    """A registered simulated function.

    orchestrator marks functions that exist to coordinate others (composition
    shells, conductor actions); their records are flagged in traces so that
    accounting can tell composed work from orchestration work.
    """

    name: str
    behavior: Behavior
    max_payload_bytes: int | None = None
    orchestrator: bool = False


def sleep_behavior(duration_ms: int) -> Behavior:
    """A function that sleeps for a fixed time, then returns its input."""
    if duration_ms < 0:
        raise ValueError("sleep duration must be >= 0")

    def run(payload: Payload):
        if duration_ms:
            yield Sleep(duration_ms)
        return payload

    return run


def echo_behavior() -> Behavior:
    """Identity: returns the input payload immediately."""
    return lambda payload: payload


def scripted_behavior(steps: Iterable[tuple]) -> Behavior:
    """A function following a fixed step list.

    Steps: ("sleep", ms), ("suspend", key), ("tag", label),
    ("fail", n_first_calls). The final payload is returned, with "tag" steps
    appending their label to a "via" list so tests can observe ordering.
    """
    steps = list(steps)
    calls = {"n": 0}

    def run(payload: Payload):
        calls["n"] += 1
        for step in steps:
            kind, arg = step
            if kind == "sleep":
                yield Sleep(arg)
            elif kind == "suspend":
                payload = yield SuspendOn(arg)
            elif kind == "tag":
                if isinstance(payload, dict):
                    payload = dict(payload)
                else:
                    payload = {"value": payload}
                payload["via"] = list(payload.get("via", [])) + [arg]
            elif kind == "fail":
                if calls["n"] <= arg:
                    raise SimulatedFault(f"scripted fault #{calls['n']}")
            else:
                raise ValueError(f"unknown scripted step {kind!r}")
        return payload

    return run


class _Exec:
    """Execution state of one in-flight invocation."""

    __slots__ = (
        "record", "gen", "billing_since", "suspend_epoch", "suspended_key",
        "join_pending", "join_results", "completion_key", "on_complete",
    )

    def __init__(self, record: InvocationRecord, completion_key: str | None,
                 on_complete: Optional[Callable[[InvocationRecord], None]]):
        self.record = record
        self.gen = None
        self.billing_since: int | None = None
        self.suspend_epoch = 0
        self.suspended_key: str | None = None
        self.join_pending: set[str] | None = None
        self.join_results: dict[str, Payload] | None = None
        self.completion_key = completion_key
        self.on_complete = on_complete

    def open_billing(self, now: int) -> None:
        self.billing_since = now

    def close_billing(self, now: int) -> None:
        if self.billing_since is not None:
            if now > self.billing_since:
                self.record.billed_intervals.append((self.billing_since, now))
            self.billing_since = None


class Simulation:
    """A single simulated FaaS platform instance.

    Single-threaded: one simulation must not be shared across threads during
    a run, but independent simulations can run side by side.
    """

    def __init__(
        self,
        latency: LatencyModel | None = None,
        *,
        payload_limit_bytes: int | None = None,
        suspend_limit_ms: int = DEFAULT_SUSPEND_LIMIT_MS,
        action_budget: int = DEFAULT_ACTION_BUDGET,
        jitter: float = 0.0,
        seed: int = 0,
    ):
        self.latency = latency or LatencyModel()
        self.clock = VirtualClock()
        self.payload_limit_bytes = payload_limit_bytes
        self.suspend_limit_ms = suspend_limit_ms
        self.action_budget = action_budget
        self.records: list[InvocationRecord] = []
        self._functions: dict[str, FunctionDef] = {}
        self._execs: dict[str, _Exec] = {}
        self._suspended: dict[str, list[_Exec]] = {}
        self._busy: dict[str, list[_Exec]] = {}
        self._latched: dict[str, Payload] = {}
        self._next_id = 0
        self._actions_run = 0
        self._pumping = False
        self._current: _Exec | None = None
        self._jitter = jitter
        self._rng = random.Random(seed) if jitter else None

    # -- clock and latency helpers -------------------------------------------

    @property
    def now(self) -> int:
        return self.clock.now

    @property
    def current_invocation_id(self) -> str | None:
        """Id of the invocation whose behavior is executing right now."""
        return self._current.record.id if self._current is not None else None

    def lat(self, ms: float) -> int:
        """A latency value, with seeded uniform jitter when configured."""
        if self._rng is not None and ms > 0:
            ms = ms * self._rng.uniform(1.0 - self._jitter, 1.0 + self._jitter)
        return max(0, round(ms))

    def transfer_ms(self, nbytes: int) -> int:
        return self.lat(self.latency.transfer_ms(nbytes))

    def schedule(self, delay_ms: int, action: Callable[[], None]) -> None:
        self.clock.push(self.now + max(0, delay_ms), action)

    def schedule_at(self, fire_time: int, action: Callable[[], None]) -> None:
        self.clock.push(fire_time, action)

    # -- registry -------------------------------------------------------------

    def register_function(self, fdef: FunctionDef) -> str:
        if fdef.name in self._functions:
            raise DuplicateName(f"function {fdef.name!r} already registered")
        self._functions[fdef.name] = fdef
        return fdef.name

    def has_function(self, name: str) -> bool:
        return name in self._functions

    # -- invocation lifecycle --------------------------------------------------

    def spawn(
        self,
        function: str,
        payload: Payload = None,
        *,
        parent: str | None = None,
        orchestrator: bool = False,
        completion_key: str | None = None,
        on_complete: Optional[Callable[[InvocationRecord], None]] = None,
        dispatch_delay_ms: int | None = None,
    ) -> InvocationRecord:
        """Schedule an invocation; returns its (pending) record."""
        fdef = self._functions.get(function)
        if fdef is None:
            raise UnknownFunction(f"function {function!r} is not registered")
        size = payload_bytes(payload)
        limit = self.payload_limit_bytes
        if fdef.max_payload_bytes is not None:
            limit = fdef.max_payload_bytes if limit is None else min(limit, fdef.max_payload_bytes)
        if limit is not None and size > limit:
            raise PayloadTooLarge(size, limit)

        self._next_id += 1
        record = InvocationRecord(
            id=f"inv-{self._next_id}",
            function=function,
            parent=parent,
            submit_time=self.now,
            input_bytes=size,
            orchestrator=orchestrator or fdef.orchestrator,
        )
        self.records.append(record)
        ex = _Exec(record, completion_key, on_complete)
        self._execs[record.id] = ex
        delay = self.lat(self.latency.invoke_latency_ms) if dispatch_delay_ms is None else dispatch_delay_ms
        self.schedule(delay, lambda: self._begin(ex, fdef, payload))
        return record

    def invoke(self, function: str, payload: Payload = None, caller: str | None = None) -> InvocationRecord:
        """Invoke synchronously: drives the event loop until completion."""
        if self._pumping:
            raise RuntimeError("invoke() cannot be called from inside the simulation; yield Call(...) instead")
        record = self.spawn(function, payload, parent=caller)
        self.run_until(lambda: record.done)
        if record.state is InvocationState.FAILED:
            raise FunctionFailed(record, record.failure or "")
        return record

    def invoke_async(self, function: str, payload: Payload = None,
                     completion_event_key: str = "", caller: str | None = None) -> str:
        """Schedule an invocation whose output is published as an event."""
        if not completion_event_key:
            raise ValueError("completion_event_key must be non-empty")
        record = self.spawn(function, payload, parent=caller, completion_key=completion_event_key)
        return record.id

    def _begin(self, ex: _Exec, fdef: FunctionDef, payload: Payload) -> None:
        record = ex.record
        record.start_time = self.now
        record.state = InvocationState.RUNNING
        ex.open_billing(self.now)
        # input deserialization is billed to the function itself
        setup = self.transfer_ms(record.input_bytes)
        self.schedule(setup, lambda: self._run_behavior(ex, fdef, payload))

    def _run_behavior(self, ex: _Exec, fdef: FunctionDef, payload: Payload) -> None:
        try:
            result = fdef.behavior(payload)
        except SimulatedFault as fault:
            self._fail(ex, str(fault))
            return
        if inspect.isgenerator(result):
            ex.gen = result
            self._advance(ex, None)
        else:
            self._complete(ex, result)

    def _advance(self, ex: _Exec, send_value: Payload, throw: BaseException | None = None) -> None:
        if ex.record.done:
            return
        self._current = ex
        try:
            cmd = ex.gen.throw(throw) if throw is not None else ex.gen.send(send_value)
        except StopIteration as stop:
            self._current = None
            self._complete(ex, stop.value)
            return
        except (SimulatedFault, FunctionFailed) as fault:
            self._current = None
            self._fail(ex, str(fault))
            return
        finally:
            self._current = None
        self._dispatch_command(ex, cmd)

    def _dispatch_command(self, ex: _Exec, cmd: Any) -> None:
        record = ex.record
        if isinstance(cmd, Sleep):
            self.schedule(cmd.duration_ms, lambda: self._advance(ex, None))
        elif isinstance(cmd, Call):
            def on_child_done(child: InvocationRecord) -> None:
                if child.state is InvocationState.FAILED:
                    self._advance(ex, None, throw=FunctionFailed(child, child.failure or ""))
                else:
                    self._advance(ex, child.output)
            self.spawn(cmd.function, cmd.payload, parent=record.id, on_complete=on_child_done)
        elif isinstance(cmd, CallAsync):
            child = self.spawn(cmd.function, cmd.payload, parent=record.id,
                               completion_key=cmd.completion_key)
            self.schedule(0, lambda: self._advance(ex, child.id))
        elif isinstance(cmd, SuspendOn):
            self._suspend_exec(ex, cmd.key)
        elif isinstance(cmd, DurableTimer):
            ex.close_billing(self.now)
            record.state = InvocationState.SUSPENDED
            ex.suspend_epoch += 1
            epoch = ex.suspend_epoch
            self.schedule(cmd.duration_ms, lambda: self._resume(ex, None, epoch))
        elif isinstance(cmd, BusyJoin):
            ex.join_pending = set(cmd.keys)
            ex.join_results = {}
            for key in list(ex.join_pending):
                if key in self._latched:
                    ex.join_pending.discard(key)
                    ex.join_results[key] = self._latched.pop(key)
                else:
                    self._busy.setdefault(key, []).append(ex)
            if not ex.join_pending:
                results = ex.join_results
                ex.join_pending = ex.join_results = None
                self.schedule(0, lambda: self._advance(ex, results))
        else:
            raise TypeError(f"behavior yielded unknown command {cmd!r}")

    def _suspend_exec(self, ex: _Exec, key: str) -> None:
        record = ex.record
        ex.close_billing(self.now)
        record.state = InvocationState.SUSPENDED
        ex.suspend_epoch += 1
        if key in self._latched:
            # event fired before the suspension: resume with zero billed gap
            payload = self._latched.pop(key)
            self._resume(ex, payload, ex.suspend_epoch)
            return
        ex.suspended_key = key
        self._suspended.setdefault(key, []).append(ex)
        epoch = ex.suspend_epoch
        self.schedule(self.suspend_limit_ms, lambda: self._suspend_guard(ex, epoch))

    def _suspend_guard(self, ex: _Exec, epoch: int) -> None:
        if ex.record.state is InvocationState.SUSPENDED and ex.suspend_epoch == epoch:
            if ex.suspended_key is not None:
                waiters = self._suspended.get(ex.suspended_key, [])
                if ex in waiters:
                    waiters.remove(ex)
                ex.suspended_key = None
            self._fail(ex, "SuspendLimitExceeded")

    def _resume(self, ex: _Exec, payload: Payload, epoch: int) -> None:
        record = ex.record
        if record.state is not InvocationState.SUSPENDED or ex.suspend_epoch != epoch:
            return
        record.state = InvocationState.RUNNING
        ex.suspended_key = None
        ex.open_billing(self.now)
        self._advance(ex, payload)

    def _complete(self, ex: _Exec, output: Payload) -> None:
        record = ex.record
        ex.close_billing(self.now)
        record.state = InvocationState.COMPLETED
        record.end_time = self.now
        record.output = output
        record.output_bytes = payload_bytes(output)
        self._finish(ex, output)

    def _fail(self, ex: _Exec, message: str) -> None:
        record = ex.record
        ex.close_billing(self.now)
        record.state = InvocationState.FAILED
        record.end_time = self.now
        record.failure = message
        self._finish(ex, Failure(message))

    def _finish(self, ex: _Exec, event_payload: Payload) -> None:
        record = ex.record
        if ex.completion_key:
            key = ex.completion_key
            extra = self.lat(self.latency.delivery_extra_ms())
            self.schedule(extra, lambda: self.trigger_event(Event(key, event_payload)))
        if ex.on_complete is not None:
            ex.on_complete(record)

    # -- events ----------------------------------------------------------------

    def suspend(self, invocation_id: str, event_key: str) -> None:
        """Validate a suspension request made through the public API.

        Suspension is self-initiated: a function body suspends by yielding
        SuspendOn(key). This method only enforces the preconditions so that
        misuse fails loudly.
        """
        ex = self._execs.get(invocation_id)
        if ex is None or ex.record.state is not InvocationState.RUNNING:
            raise NotRunning(f"invocation {invocation_id!r} is not running")
        if self._current is not ex:
            raise NotRunning("only the running function itself may suspend")
        raise NotRunning("suspend from inside a behavior by yielding SuspendOn(key)")

    def trigger_event(self, event: Event) -> list[str]:
        """Fire an event; resumes every invocation suspended on its key.

        With no subscriber the payload is latched per key (most recent wins)
        and consumed by the next suspension or join on that key. Returns the
        ids resumed now; a deferred event (fire_time in the future) returns [].
        """
        if event.fire_time is not None and event.fire_time > self.now:
            self.schedule_at(event.fire_time, lambda: self.trigger_event(
                Event(event.key, event.payload)))
            return []
        waiters = self._suspended.pop(event.key, [])
        busy = self._busy.pop(event.key, [])
        if not waiters and not busy:
            self._latched[event.key] = event.payload
            return []
        resumed = []
        for ex in waiters:
            resumed.append(ex.record.id)
            delay = self.lat(self.latency.queue_latency_ms)
            epoch = ex.suspend_epoch
            self.schedule(delay, lambda ex=ex, epoch=epoch: self._resume(ex, event.payload, epoch))
        for ex in busy:
            delay = self.lat(self.latency.queue_latency_ms)
            self.schedule(delay, lambda ex=ex: self._busy_deliver(ex, event.key, event.payload))
        return resumed

    def _busy_deliver(self, ex: _Exec, key: str, payload: Payload) -> None:
        if ex.join_pending is None or key not in ex.join_pending:
            return
        ex.join_pending.discard(key)
        ex.join_results[key] = payload
        if not ex.join_pending:
            results = ex.join_results
            ex.join_pending = ex.join_results = None
            self._advance(ex, results)

    # -- event loop --------------------------------------------------------------

    def run_until_idle(self) -> int:
        """Run every scheduled action in (fire_time, sequence) order."""
        return self.run_until(lambda: False)

    def run_until(self, predicate: Callable[[], bool]) -> int:
        if self._pumping:
            raise RuntimeError("the event loop is already running")
        self._pumping = True
        try:
            while len(self.clock) and not predicate():
                action = self.clock.pop()
                self._actions_run += 1
                if self._actions_run > self.action_budget:
                    raise LivelockGuard(f"exceeded action budget of {self.action_budget}")
                action()
        finally:
            self._pumping = False
        return self.now

    # -- trace export ---------------------------------------------------------

    def export_trace(self, path) -> None:
        """Write one JSON record per line, times in integer virtual ms."""
        with open(path, "w", encoding="utf-8") as fp:
            for record in self.records:
                fp.write(json.dumps(record.to_dict(), sort_keys=True,
                                    separators=(",", ":")))
                fp.write("\n")


def load_trace(path) -> list[dict]:
    """Read a trace file written by Simulation.export_trace."""
    out = []
    with open(path, "r", encoding="utf-8") as fp:
        for line in fp:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
