"""Reactive-core engines: conductor compositions and native sequences.

Both expose compositions as ordinary platform functions (substitution
holds) and wait for results through the event bus instead of blocking, so
orchestration shells accrue no billed time while tasks run. The conductor
engine runs a billed conductor action between tasks to decide the next
step; native sequences are static chains with no decision function at all.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SimulatedFault, StateTooLarge, UnsupportedState
from ..runtime import (
    CallAsync,
    DurableTimer,
    Failure,
    FunctionDef,
    Sleep,
    SuspendOn,
    payload_bytes,
)
from ..workflow import Choice, Parallel, Repeat, Retry, Sequence, Task, Wait
from .base import Engine, RunContext


class _TaskFault(Exception):
    """Internal: a task of this composition failed."""


@dataclass
class ConductorOptions:
    conductor_exec_ms: int = 0  # billed duration of one conductor decision


class ConductorEngine(Engine):
    """Compositions synthesized into conductor actions."""

    id = "composer"
    options_cls = ConductorOptions

    def register_composition(self, sim, spec, name, ctx=None, **kwargs) -> str:
        ctx = ctx or RunContext()
        self._precheck(spec)
        conductor_name = f"{name}.conductor"
        if not sim.has_function(conductor_name):
            sim.register_function(FunctionDef(
                conductor_name,
                _conductor_behavior(self.options.conductor_exec_ms),
                orchestrator=True,
            ))
        engine = self

        def crossing(value) -> int:
            size = payload_bytes(value)
            limit = engine.profile.max_state_bytes
            if limit is not None and size > limit:
                raise StateTooLarge(size, limit)
            return sim.transfer_ms(size)

        def conductor_round():
            ctx.transitions += 1
            key = ctx.next_key(f"{name}.c")
            yield CallAsync(conductor_name, None, key)
            yield SuspendOn(key)

        def orch(node, state):
            if isinstance(node, Task):
                yield from conductor_round()
                cost = crossing(state)
                if cost:
                    yield DurableTimer(cost)
                key = ctx.next_key(f"{name}.t")
                yield CallAsync(node.function, state, key)
                result = yield SuspendOn(key)
                if isinstance(result, Failure):
                    raise _TaskFault(f"task {node.function!r} failed: {result.message}")
                cost = crossing(result)
                if cost:
                    yield DurableTimer(cost)
                return result
            if isinstance(node, Sequence):
                for child in node.nodes:
                    state = yield from orch(child, state)
                return state
            if isinstance(node, Repeat):
                for _ in range(node.count):
                    state = yield from orch(node.node, state)
                return state
            if isinstance(node, Choice):
                arm = node.then_node if node.predicate.evaluate(state) else node.else_node
                return (yield from orch(arm, state))
            if isinstance(node, Retry):
                for attempt in range(1, node.max_attempts + 1):
                    try:
                        return (yield from orch(node.node, state))
                    except _TaskFault:
                        if attempt == node.max_attempts:
                            raise
                        yield DurableTimer(node.backoff_ms)
            if isinstance(node, Wait):
                yield DurableTimer(node.duration_ms)
                return state
            raise UnsupportedState(f"conductor engine cannot run node {node!r}")

        def behavior(payload):
            try:
                state = yield from orch(spec, payload)
                yield from conductor_round()  # final run assembles the result
            except _TaskFault as fault:
                raise SimulatedFault(str(fault))
            write = sim.lat(engine.latency.log_write_ms)
            if write:
                yield DurableTimer(write)  # composition result persisted
            return state

        sim.register_function(FunctionDef(name, behavior, orchestrator=True))
        return name


class NativeSequenceEngine(Engine):
    """Statically chained sequences built into the reactive core."""

    id = "sequences"
    options_cls = None

    def register_composition(self, sim, spec, name, ctx=None, **kwargs) -> str:
        ctx = ctx or RunContext()
        self._precheck(spec)
        steps = flatten_chain(spec)
        engine = self

        def crossing(value) -> int:
            size = payload_bytes(value)
            limit = engine.profile.max_state_bytes
            if limit is not None and size > limit:
                raise StateTooLarge(size, limit)
            return sim.transfer_ms(size)

        def behavior(payload):
            state = payload
            for fn in steps:
                ctx.transitions += 1
                cost = crossing(state)
                if cost:
                    yield DurableTimer(cost)
                key = ctx.next_key(f"{name}.s")
                yield CallAsync(fn, state, key)
                result = yield SuspendOn(key)
                if isinstance(result, Failure):
                    raise SimulatedFault(f"step {fn!r} failed: {result.message}")
                cost = crossing(result)
                if cost:
                    yield DurableTimer(cost)
                state = result
            write = sim.lat(engine.latency.log_write_ms)
            if write:
                yield DurableTimer(write)
            return state

        sim.register_function(FunctionDef(name, behavior, orchestrator=True))
        return name


def flatten_chain(node) -> list[str]:
    """Reduce a spec to a static list of function names, or refuse."""
    if isinstance(node, Task):
        return [node.function]
    if isinstance(node, Sequence):
        out: list[str] = []
        for child in node.nodes:
            out.extend(flatten_chain(child))
        return out
    if isinstance(node, Repeat):
        return flatten_chain(node.node) * node.count
    raise UnsupportedState(
        f"native sequences run static chains only, cannot chain {node!r}")


def _conductor_behavior(exec_ms: int):
    def run(payload):
        if exec_ms:
            yield Sleep(exec_ms)
        return payload
    return run
