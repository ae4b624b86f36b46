"""Orchestration inside a plain serverless function.

The orchestrator calls children synchronously (or fans out and busy-waits on
the join), so it is billed for the whole time its children run. This is the
baseline the trilemma verifier must flag for double billing.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import FunctionFailed, SimulatedFault, UnsupportedState
from ..runtime import BusyJoin, Call, CallAsync, Failure, FunctionDef, Sleep
from ..workflow import Choice, Parallel, Repeat, Retry, Sequence, Task, Wait
from .base import Engine, RunContext


@dataclass
class InlineOptions:
    pass


class InlineEngine(Engine):
    id = "inline"
    options_cls = InlineOptions

    def register_composition(self, sim, spec, name, ctx=None, **kwargs) -> str:
        ctx = ctx or RunContext()
        self._precheck(spec)
        spec = self._lift_branches(sim, spec, name, ctx)

        def orch(node, state):
            if isinstance(node, Task):
                ctx.transitions += 1
                return (yield Call(node.function, state))
            if isinstance(node, Sequence):
                for child in node.nodes:
                    state = yield from orch(child, state)
                return state
            if isinstance(node, Repeat):
                for _ in range(node.count):
                    state = yield from orch(node.node, state)
                return state
            if isinstance(node, Parallel):
                keys = []
                for branch in node.branches:
                    ctx.transitions += 1
                    key = ctx.next_key(f"{name}.j")
                    yield CallAsync(branch.function, state, key)
                    keys.append(key)
                results = yield BusyJoin(tuple(keys))
                outputs = []
                for i, key in enumerate(keys):
                    value = results[key]
                    if isinstance(value, Failure):
                        raise SimulatedFault(f"branch {i} failed: {value.message}")
                    outputs.append(value)
                return outputs
            if isinstance(node, Choice):
                arm = node.then_node if node.predicate.evaluate(state) else node.else_node
                return (yield from orch(arm, state))
            if isinstance(node, Retry):
                for attempt in range(1, node.max_attempts + 1):
                    try:
                        return (yield from orch(node.node, state))
                    except (FunctionFailed, SimulatedFault):
                        if attempt == node.max_attempts:
                            raise
                        yield Sleep(node.backoff_ms)
            if isinstance(node, Wait):
                yield Sleep(node.duration_ms)  # busy wait: inline pays for it
                return state
            raise UnsupportedState(f"inline orchestrator cannot run node {node!r}")

        def behavior(payload):
            return orch(spec, payload)

        sim.register_function(FunctionDef(name, behavior, orchestrator=True))
        return name

    def _lift_branches(self, sim, node, name, ctx):
        if isinstance(node, Sequence):
            return Sequence(tuple(self._lift_branches(sim, c, name, ctx) for c in node.nodes))
        if isinstance(node, Repeat):
            return Repeat(node.count, self._lift_branches(sim, node.node, name, ctx))
        if isinstance(node, Choice):
            return Choice(node.predicate,
                          self._lift_branches(sim, node.then_node, name, ctx),
                          self._lift_branches(sim, node.else_node, name, ctx))
        if isinstance(node, Retry):
            return Retry(self._lift_branches(sim, node.node, name, ctx),
                         node.max_attempts, node.backoff_ms)
        if isinstance(node, Parallel):
            branches = []
            for branch in node.branches:
                if isinstance(branch, Task):
                    branches.append(branch)
                else:
                    sub = self.register_composition(
                        sim, branch, f"{name}.b{len(branches)}-{ctx.next_key('n')}", ctx)
                    branches.append(Task(sub))
            return Parallel(tuple(branches))
        return node
