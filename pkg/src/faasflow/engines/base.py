"""Shared engine machinery: results, history events, and the run harness."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Callable, Iterable

from ..errors import (
    ConfigError,
    ParallelUnsupported,
    SuspendLimitExceeded,
    TooManyActions,
    WorkflowFailed,
)
from ..profiles import CalibrationProfile, EngineProfile, default_profile
from ..runtime import (
    DEFAULT_SUSPEND_LIMIT_MS,
    FunctionDef,
    InvocationRecord,
    LatencyModel,
    Payload,
    Simulation,
)
from ..workflow import Node, action_count, has_parallel, normalize


class HistoryKind:
    ORCHESTRATION_STARTED = "OrchestrationStarted"
    ACTIVITY_SCHEDULED = "ActivityScheduled"
    ACTIVITY_COMPLETED = "ActivityCompleted"
    TIMER_FIRED = "TimerFired"
    EXTERNAL_EVENT = "ExternalEvent"
    ORCHESTRATION_COMPLETED = "OrchestrationCompleted"


@dataclass
class HistoryEvent:
    """One entry of an event-sourcing history log.

    stored_bytes is the persisted size: payloads above the engine's
    compression threshold are stored compressed, so stored_bytes can be
    smaller than the raw payload size.
    """

    seq: int
    kind: str
    activity: str | None
    payload: Payload
    stored_bytes: int
    time: int

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "activity": self.activity,
            "payload": self.payload,
            "stored_bytes": self.stored_bytes,
            "time": self.time,
        }


@dataclass
class WorkflowResult:
    """Everything one workflow run produced."""

    output: Payload
    wall_time_ms: int
    trace: list[InvocationRecord]
    transitions: int
    history: list[HistoryEvent] | None = None
    extra_histories: list[list[HistoryEvent]] = field(default_factory=list)
    replay_count: int = 0
    engine: str = ""

    def all_history_events(self) -> list[HistoryEvent]:
        events = list(self.history or [])
        for extra in self.extra_histories:
            events.extend(extra)
        return events

    def export_history(self, path) -> None:
        import json

        with open(path, "w", encoding="utf-8") as fp:
            for event in self.all_history_events():
                fp.write(json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":")))
                fp.write("\n")


class RunContext:
    """Mutable counters shared by every orchestration session in one run."""

    def __init__(self) -> None:
        self.transitions = 0
        self.replay_count = 0
        self.histories: list[list[HistoryEvent]] = []
        self._keys = 0

    def next_key(self, prefix: str = "k") -> str:
        self._keys += 1
        return f"{prefix}{self._keys}"


class SerialActor:
    """A single-threaded worker: queued jobs execute one at a time.

    Each job occupies the worker for duration_ms of virtual time; its
    callback fires when the job finishes. Used for components the real
    platforms serialize (a synchronous scheduler, an orchestrator session).
    """

    def __init__(self, sim: Simulation):
        self.sim = sim
        self.busy_until = 0

    def enqueue(self, duration_ms: int, done: Callable[[], None]) -> None:
        start = max(self.sim.now, self.busy_until)
        end = start + max(0, duration_ms)
        self.busy_until = end
        self.sim.schedule_at(end, done)


class TokenBucket:
    """Token bucket over virtual time: steady refill with burst capacity."""

    def __init__(self, steady_per_second: int, burst: int):
        self.rate = steady_per_second
        self.burst = burst
        self.tokens = float(burst)
        self._last = 0

    def take(self, now_ms: int, n: int = 1) -> bool:
        elapsed = now_ms - self._last
        if elapsed > 0:
            self.tokens = min(float(self.burst), self.tokens + elapsed * self.rate / 1000.0)
            self._last = now_ms
        if self.tokens >= n:
            self.tokens -= n
            return True
        return False


class Engine:
    """Base class: builds the simulation, runs a spec, collects the result.

    Subclasses implement _start (kick off the orchestration inside the
    simulation) and usually register_composition (expose a composition as a
    platform function; client-scheduler style engines cannot).
    """

    id: str = ""
    options_cls: type | None = None

    def __init__(
        self,
        latency: LatencyModel | None = None,
        profile: EngineProfile | None = None,
        *,
        jitter: float = 0.0,
        seed: int = 0,
        suspend_limit_ms: int = DEFAULT_SUSPEND_LIMIT_MS,
        **options: Any,
    ):
        self.latency = latency or LatencyModel()
        self.profile = profile or default_profile(self.id)
        self.jitter = jitter
        self.seed = seed
        self.suspend_limit_ms = suspend_limit_ms
        if self.options_cls is not None:
            known = {f.name for f in fields(self.options_cls)}
            unknown = set(options) - known
            if unknown:
                raise ConfigError(
                    f"unknown option(s) for engine {self.id!r}: {', '.join(sorted(unknown))}")
            self.options = self.options_cls(**options)
        elif options:
            raise ConfigError(
                f"engine {self.id!r} takes no options, got {', '.join(sorted(options))}")
        else:
            self.options = None

    @classmethod
    def from_profile(cls, calibration: CalibrationProfile, **overrides: Any) -> "Engine":
        """Build an engine from a calibration profile file's contents."""
        opts = dict(calibration.extras)
        opts.update(overrides)
        return cls(
            latency=calibration.latency,
            profile=calibration.engine_profile(cls.id),
            **opts,
        )

    # -- harness -----------------------------------------------------------

    def new_simulation(self) -> Simulation:
        return Simulation(
            self.latency,
            suspend_limit_ms=self.suspend_limit_ms,
            jitter=self.jitter,
            seed=self.seed,
        )

    def run(
        self,
        spec: Node,
        payload: Payload = None,
        *,
        functions: Iterable[FunctionDef] = (),
        sim: Simulation | None = None,
        **kwargs: Any,
    ) -> WorkflowResult:
        sim = sim or self.new_simulation()
        for fdef in functions:
            if not sim.has_function(fdef.name):
                sim.register_function(fdef)
        spec = normalize(spec)
        self._precheck(spec)
        ctx = RunContext()
        started = sim.now
        box: dict[str, Any] = {}
        self._start(sim, spec, payload, ctx, lambda out: box.__setitem__("output", out), **kwargs)
        sim.run_until(lambda: "output" in box)
        if "output" not in box:
            raise WorkflowFailed("workflow did not complete (event queue drained)")
        output = box["output"]
        if isinstance(output, _RunFailure):
            if output.message == "SuspendLimitExceeded":
                raise SuspendLimitExceeded(output.message)
            raise WorkflowFailed(output.message)
        return WorkflowResult(
            output=output,
            wall_time_ms=sim.now - started,
            trace=list(sim.records),
            transitions=ctx.transitions,
            history=ctx.histories[0] if ctx.histories else None,
            extra_histories=ctx.histories[1:],
            replay_count=ctx.replay_count,
            engine=self.id,
        )

    def _precheck(self, spec: Node) -> None:
        limit = self.profile.max_actions
        if limit is not None:
            count = action_count(spec)
            if count > limit:
                raise TooManyActions(count, limit)
        if not self.profile.supports_parallel and has_parallel(spec):
            raise ParallelUnsupported(f"engine {self.id!r} does not run parallel branches")

    def _start(self, sim, spec, payload, ctx, on_done, **kwargs) -> None:
        """Default launch path: expose the spec as a function and invoke it."""
        name = self.register_composition(sim, spec, "workflow.main", ctx, **kwargs)

        def finished(record: InvocationRecord) -> None:
            if record.state.value == "completed":
                on_done(record.output)
            else:
                on_done(_RunFailure(record.failure or "workflow failed"))

        sim.spawn(name, payload, on_complete=finished)

    def register_composition(self, sim: Simulation, spec: Node, name: str,
                             ctx: RunContext | None = None, **kwargs) -> str:
        raise NotImplementedError


@dataclass
class _RunFailure:
    """Internal marker passed through on_done when a workflow fails."""

    message: str
