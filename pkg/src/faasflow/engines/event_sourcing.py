"""Event-sourcing orchestration engine (durable-task style).

Orchestrator progress is persisted as an append-only history. The
orchestrator body is deterministic by construction: it is re-executed
("replayed") against the history, and an await whose result is already
recorded returns it without re-invoking the activity. Without extended
sessions every activity completion re-runs the orchestrator from the top;
with extended sessions one in-memory instance is kept and simply woken.

Payloads above the compression threshold are stored compressed in the
history; reading a compressed event back during replay pays the per-KB
transfer cost on the stored size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import NondeterminismDetected, SimulatedFault, UnsupportedState
from ..runtime import (
    Event,
    Failure,
    FunctionDef,
    InvocationState,
    Payload,
    Sleep,
    SuspendOn,
    payload_bytes,
)
from ..workflow import Choice, Parallel, Repeat, Retry, Sequence, Task, Wait
from .base import Engine, HistoryEvent, HistoryKind, RunContext, SerialActor

_POLL = object()


class _ActivityFault(Exception):
    pass


@dataclass
class EventSourcingOptions:
    replay_start_ms: int = 0        # fixed cost of (re)starting the orchestrator
    replay_per_event_ms: float = 0.0  # cost per history event re-read on replay
    pending_poll_ms: float = 0.0    # per still-pending await, paid when a completion commits
    extended_sessions: bool = False


class EventSourcingEngine(Engine):
    id = "adf"
    options_cls = EventSourcingOptions

    def register_composition(self, sim, spec, name, ctx=None, *,
                             preload_history=None, replay_spec_hook=None, **kwargs) -> str:
        ctx = ctx or RunContext()
        self._precheck(spec)
        engine = self
        sessions: dict[str, _Session] = {}
        orchestrator_fn = f"{name}.orchestrator"

        def orchestrator_behavior(session_id):
            yield from sessions[session_id].orchestrator_pass()

        sim.register_function(FunctionDef(orchestrator_fn, orchestrator_behavior,
                                          orchestrator=True))

        pending_preload = {"history": preload_history}

        def behavior(payload):
            session = _Session(engine, sim, ctx, spec, name, orchestrator_fn, payload,
                               wrapper_id=sim.current_invocation_id,
                               replay_spec_hook=replay_spec_hook)
            preload = pending_preload.pop("history", None)
            if preload:
                session.preload(preload)
            sessions[session.serial] = session
            session.begin()
            out = yield SuspendOn(session.done_key)
            if isinstance(out, Failure):
                raise SimulatedFault(out.message)
            return out

        sim.register_function(FunctionDef(name, behavior, orchestrator=True))
        return name


class _Session:
    """One orchestration instance: history, schedules, and pass driving.

    Completion commits are serialized through a per-session storage actor:
    each ActivityCompleted or TimerFired write occupies the history store for
    the log-write time plus a scan of the still-pending awaits. With wide
    fan-outs those scans dominate and grow quadratically, which is what makes
    parallel compositions expensive on this engine.
    """

    def __init__(self, engine, sim, ctx: RunContext, spec, name, orchestrator_fn,
                 input_payload, wrapper_id, replay_spec_hook=None):
        self.engine = engine
        self.sim = sim
        self.runctx = ctx
        self.spec = spec
        self.name = name
        self.orchestrator_fn = orchestrator_fn
        self.input = input_payload
        self.wrapper_id = wrapper_id
        self.replay_spec_hook = replay_spec_hook
        self.serial = ctx.next_key(f"{name}.session")
        self.done_key = f"{self.serial}.done"
        self.wake_key = f"{self.serial}.wake"
        self.history: list[HistoryEvent] = []
        self.schedules: list[tuple] = []   # ("activity", fn, payload) | ("timer", ms, None)
        self.results: dict[int, Payload] = {}
        self.emissions: list[tuple] = []
        self.cursor = 0
        self.gen = None
        self.pass_index = 0
        self.pass_running = False
        self.dirty = False
        self.finished = False
        self.output: Payload = None
        self.current_record_id: str | None = None
        self.commits = SerialActor(sim)
        ctx.histories.append(self.history)

    # -- deterministic scheduling API used by the evaluator --------------------

    def call_activity(self, fn: str, payload: Payload) -> int:
        idx = self.cursor
        self.cursor += 1
        if idx < len(self.schedules):
            kind, recorded, _ = self.schedules[idx]
            if kind != "activity" or recorded != fn:
                raise NondeterminismDetected(
                    f"replay scheduled activity {fn!r} at step {idx}, "
                    f"history recorded {kind} {recorded!r}")
        else:
            self.schedules.append(("activity", fn, payload))
            self.emissions.append(("activity", idx, fn, payload))
        return idx

    def create_timer(self, duration_ms: int) -> int:
        idx = self.cursor
        self.cursor += 1
        if idx < len(self.schedules):
            kind, recorded, _ = self.schedules[idx]
            if kind != "timer" or recorded != duration_ms:
                raise NondeterminismDetected(
                    f"replay created timer({duration_ms}) at step {idx}, "
                    f"history recorded {kind} {recorded!r}")
        else:
            self.schedules.append(("timer", duration_ms, None))
            self.emissions.append(("timer", idx, duration_ms, None))
        return idx

    def resolved(self, idx: int) -> bool:
        return idx in self.results

    # -- history ----------------------------------------------------------------

    def _stored_bytes(self, payload: Payload) -> int:
        raw = payload_bytes(payload)
        threshold = self.engine.profile.compression_threshold_bytes
        if threshold is not None and raw > threshold:
            return max(1, math.ceil(raw * self.engine.profile.compression_ratio))
        return raw

    def _append(self, kind: str, activity=None, payload=None) -> HistoryEvent:
        event = HistoryEvent(
            seq=len(self.history) + 1,
            kind=kind,
            activity=activity,
            payload=payload,
            stored_bytes=self._stored_bytes(payload),
            time=self.sim.now,
        )
        self.history.append(event)
        return event

    def preload(self, events: list[HistoryEvent]) -> None:
        """Rebuild session state from a (possibly truncated) history."""
        for ev in events:
            self.history.append(HistoryEvent(ev.seq, ev.kind, ev.activity,
                                             ev.payload, ev.stored_bytes, ev.time))
            if ev.kind == HistoryKind.ACTIVITY_SCHEDULED:
                fn, _ = _split_ref(ev.activity)
                if fn.startswith("timer:"):
                    self.schedules.append(("timer", int(fn.split(":", 1)[1]), None))
                else:
                    self.schedules.append(("activity", fn, ev.payload))
            elif ev.kind == HistoryKind.ACTIVITY_COMPLETED:
                fn, idx = _split_ref(ev.activity)
                value = ev.payload
                if isinstance(value, dict) and "__failed__" in value:
                    value = Failure(value["__failed__"])
                self.results[idx] = value
            elif ev.kind == HistoryKind.TIMER_FIRED:
                _, idx = _split_ref(ev.activity)
                self.results[idx] = None
            elif ev.kind == HistoryKind.ORCHESTRATION_COMPLETED:
                self.finished = True
                self.output = ev.payload

    # -- lifecycle ----------------------------------------------------------------

    def begin(self) -> None:
        if self.finished:
            self.sim.schedule(0, lambda: self.sim.trigger_event(
                Event(self.done_key, self.output)))
            return
        if not self.history:
            self._append(HistoryKind.ORCHESTRATION_STARTED, payload=self.input)
        else:
            # resume: re-dispatch in-flight work recorded as scheduled but not done
            for idx, (kind, arg, payload) in enumerate(self.schedules):
                if idx in self.results:
                    continue
                if kind == "activity":
                    self._dispatch_activity(idx, arg, payload)
                else:
                    self.sim.schedule(arg, lambda idx=idx, arg=arg: self._timer_fired(idx, arg))
        self._spawn_pass()

    def _spawn_pass(self) -> None:
        self.pass_running = True
        self.pass_index += 1
        if self.pass_index > 1:
            self.runctx.replay_count += 1
            if self.replay_spec_hook is not None:
                self.spec = self.replay_spec_hook(self.pass_index, self.spec)
        self.sim.spawn(self.orchestrator_fn, self.serial, parent=self.wrapper_id,
                       orchestrator=True, on_complete=self._pass_done)

    def orchestrator_pass(self):
        """Behavior of one orchestrator run (a replay, or the live instance)."""
        opts = self.engine.options
        sim = self.sim
        self.current_record_id = sim.current_invocation_id

        if opts.extended_sessions:
            if opts.replay_start_ms:
                yield Sleep(sim.lat(opts.replay_start_ms))
            self.cursor = 0
            self.gen = _eval(self.spec, self.input, self)
            while True:
                status = yield from self._drive()
                if status != "blocked":
                    self._finish()
                    return
                yield SuspendOn(self.wake_key)
        else:
            consumed = len(self.history)
            cost = opts.replay_start_ms + round(opts.replay_per_event_ms * consumed)
            cost += self._decompress_cost()
            if cost:
                yield Sleep(sim.lat(cost))
            self.cursor = 0
            self.gen = _eval(self.spec, self.input, self)
            status = yield from self._drive()
            self.gen = None
            if status != "blocked":
                self._finish()

    def _decompress_cost(self) -> int:
        cost = 0
        for ev in self.history:
            if ev.payload is not None and ev.stored_bytes < payload_bytes(ev.payload):
                cost += self.engine.latency.transfer_ms(ev.stored_bytes)
        return cost

    def _drive(self):
        while True:
            try:
                self.gen.send(None)
            except StopIteration as stop:
                yield from self._flush()
                self.output = stop.value
                self.finished = True
                return "done"
            except _ActivityFault as fault:
                yield from self._flush()
                self.output = Failure(str(fault))
                self.finished = True
                return "failed"
            yield from self._flush()
            return "blocked"

    def _flush(self):
        latency = self.engine.latency
        sim = self.sim
        while self.emissions:
            kind, idx, arg, payload = self.emissions.pop(0)
            self.runctx.transitions += 1
            if kind == "activity":
                self._append(HistoryKind.ACTIVITY_SCHEDULED,
                             activity=_ref(arg, idx), payload=payload)
                cost = latency.log_write_ms + latency.transfer_ms(payload_bytes(payload))
                if cost:
                    yield Sleep(sim.lat(cost))
                self._dispatch_activity(idx, arg, payload)
            else:
                self._append(HistoryKind.ACTIVITY_SCHEDULED,
                             activity=_ref(f"timer:{arg}", idx), payload=None)
                if latency.log_write_ms:
                    yield Sleep(sim.lat(latency.log_write_ms))
                sim.schedule(arg, lambda idx=idx, arg=arg: self._timer_fired(idx, arg))

    def _finish(self) -> None:
        # lifecycle bookkeeping (started/completed) rides along with other
        # storage operations; only activity events pay the log-write latency
        out = self.output
        payload = {"__failed__": out.message} if isinstance(out, Failure) else out
        self._append(HistoryKind.ORCHESTRATION_COMPLETED, payload=payload)

    def _dispatch_activity(self, idx: int, fn: str, payload: Payload) -> None:
        self.sim.spawn(fn, payload, parent=self.current_record_id or self.wrapper_id,
                       on_complete=lambda rec: self._activity_done(idx, rec))

    def _activity_done(self, idx: int, record) -> None:
        if record.state is InvocationState.COMPLETED:
            value = record.output
        else:
            value = Failure(record.failure or f"{record.function} failed")
        self._commit(idx, value, HistoryKind.ACTIVITY_COMPLETED, _ref(record.function, idx))

    def _timer_fired(self, idx: int, duration_ms: int) -> None:
        self._commit(idx, None, HistoryKind.TIMER_FIRED, _ref(f"timer:{duration_ms}", idx))

    def _commit(self, idx: int, value: Payload, kind: str, activity: str) -> None:
        """Queue the completion write on the session's serial history store."""
        pending = len(self.schedules) - len(self.results)
        payload = {"__failed__": value.message} if isinstance(value, Failure) else value
        duration = self.sim.lat(self.engine.latency.log_write_ms)
        duration += self.engine.latency.transfer_ms(self._stored_bytes(payload))
        duration += self.sim.lat(round(self.engine.options.pending_poll_ms * pending))
        self.commits.enqueue(duration, lambda: self._completed(idx, value, kind, activity))

    def _completed(self, idx: int, value: Payload, kind: str, activity: str) -> None:
        if self.finished:
            return
        payload = {"__failed__": value.message} if isinstance(value, Failure) else value
        self._append(kind, activity=activity, payload=payload)
        self.results[idx] = value
        if self.engine.options.extended_sessions:
            self.sim.trigger_event(Event(self.wake_key))
        elif self.pass_running:
            self.dirty = True
        else:
            self._schedule_pass()

    def _schedule_pass(self) -> None:
        self.sim.schedule(self.sim.lat(self.engine.latency.queue_latency_ms),
                          self._spawn_pass)

    def _pass_done(self, record) -> None:
        self.pass_running = False
        if self.finished:
            self.sim.trigger_event(Event(self.done_key, self.output))
        elif self.dirty:
            self.dirty = False
            self._schedule_pass()


def _ref(activity: str, idx: int) -> str:
    return f"{activity}[{idx}]"


def _split_ref(ref: str) -> tuple[str, int]:
    base, _, idx = ref.rpartition("[")
    return base, int(idx.rstrip("]"))


def _eval(node, state, session: _Session):
    """Deterministic orchestrator body: yields until awaited work resolves."""
    if isinstance(node, Task):
        idx = session.call_activity(node.function, state)
        while not session.resolved(idx):
            yield _POLL
        value = session.results[idx]
        if isinstance(value, Failure):
            raise _ActivityFault(f"task {node.function!r} failed: {value.message}")
        return value
    if isinstance(node, Sequence):
        for child in node.nodes:
            state = yield from _eval(child, state, session)
        return state
    if isinstance(node, Repeat):
        for _ in range(node.count):
            state = yield from _eval(node.node, state, session)
        return state
    if isinstance(node, Wait):
        idx = session.create_timer(node.duration_ms)
        while not session.resolved(idx):
            yield _POLL
        return state
    if isinstance(node, Choice):
        arm = node.then_node if node.predicate.evaluate(state) else node.else_node
        return (yield from _eval(arm, state, session))
    if isinstance(node, Retry):
        for attempt in range(1, node.max_attempts + 1):
            try:
                return (yield from _eval(node.node, state, session))
            except _ActivityFault:
                if attempt == node.max_attempts:
                    raise
                idx = session.create_timer(node.backoff_ms)
                while not session.resolved(idx):
                    yield _POLL
    if isinstance(node, Parallel):
        gens = [_eval(branch, state, session) for branch in node.branches]
        done: dict[int, Payload] = {}
        while True:
            for i, gen in enumerate(gens):
                if i in done:
                    continue
                try:
                    gen.send(None)
                except StopIteration as stop:
                    done[i] = stop.value
            if len(done) == len(gens):
                return [done[i] for i in range(len(gens))]
            yield _POLL
    raise UnsupportedState(f"event-sourcing engine cannot run node {node!r}")
