"""Orchestration engines behind one interface.

Engine ids: asf (external client scheduler), composer (conductor actions),
sequences (native static chains), adf (event sourcing), suspend
(suspend-API orchestrator), inline (orchestration inside a function).
"""

from __future__ import annotations

from typing import Iterable

from ..errors import ConfigError
from ..runtime import FunctionDef, LatencyModel, Payload
from ..workflow import Node, Sequence, Task
from .base import Engine, HistoryEvent, HistoryKind, RunContext, WorkflowResult
from .client_scheduler import ClientSchedulerEngine
from .event_sourcing import EventSourcingEngine
from .inline import InlineEngine
from .reactive import ConductorEngine, NativeSequenceEngine
from .suspend import SuspendEngine

ENGINES: dict[str, type[Engine]] = {
    cls.id: cls
    for cls in (
        ClientSchedulerEngine,
        ConductorEngine,
        NativeSequenceEngine,
        EventSourcingEngine,
        SuspendEngine,
        InlineEngine,
    )
}


def engine_class(engine_id: str) -> type[Engine]:
    try:
        return ENGINES[engine_id]
    except KeyError:
        raise ConfigError(
            f"unknown engine {engine_id!r}; expected one of {', '.join(sorted(ENGINES))}"
        ) from None


def make_engine(engine_id: str, latency: LatencyModel | None = None, **kwargs) -> Engine:
    return engine_class(engine_id)(latency, **kwargs)


# -- one call per engine, mirroring the platform operations -------------------

def run_client_scheduler(spec: Node, payload: Payload = None,
                         latency: LatencyModel | None = None, *,
                         functions: Iterable[FunctionDef] = (), **kwargs) -> WorkflowResult:
    return ClientSchedulerEngine(latency, **kwargs).run(spec, payload, functions=functions)


def run_reactive_conductor(spec: Node, payload: Payload = None,
                           latency: LatencyModel | None = None, *,
                           functions: Iterable[FunctionDef] = (), **kwargs) -> WorkflowResult:
    return ConductorEngine(latency, **kwargs).run(spec, payload, functions=functions)


def run_sequence_native(function_list: Iterable[str], payload: Payload = None,
                        latency: LatencyModel | None = None, *,
                        functions: Iterable[FunctionDef] = (), **kwargs) -> WorkflowResult:
    spec = Sequence(tuple(Task(name) for name in function_list))
    return NativeSequenceEngine(latency, **kwargs).run(spec, payload, functions=functions)


def run_event_sourcing(spec: Node, payload: Payload = None,
                       latency: LatencyModel | None = None, *,
                       extended_sessions: bool = False,
                       functions: Iterable[FunctionDef] = (),
                       preload_history=None, replay_spec_hook=None,
                       **kwargs) -> WorkflowResult:
    engine = EventSourcingEngine(latency, extended_sessions=extended_sessions, **kwargs)
    return engine.run(spec, payload, functions=functions,
                      preload_history=preload_history, replay_spec_hook=replay_spec_hook)


def run_suspend_orchestrator(spec: Node, payload: Payload = None,
                             latency: LatencyModel | None = None, *,
                             functions: Iterable[FunctionDef] = (), **kwargs) -> WorkflowResult:
    return SuspendEngine(latency, **kwargs).run(spec, payload, functions=functions)


def run_inline_orchestrator(spec: Node, payload: Payload = None,
                            latency: LatencyModel | None = None, *,
                            functions: Iterable[FunctionDef] = (), **kwargs) -> WorkflowResult:
    return InlineEngine(latency, **kwargs).run(spec, payload, functions=functions)
