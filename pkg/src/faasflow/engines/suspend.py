"""Orchestrator built on the function suspend API.

The orchestrator is one ordinary function. For every task it dispatches the
child asynchronously and suspends itself on the completion event, so its
billed time is exactly the dispatch slices; waits cost nothing. Fan-in works
by suspending once per branch completion key in branch order (early
completions are latched by the runtime, so arrival order does not matter).
Compositions are plain functions and nest freely.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SimulatedFault, UnsupportedState
from ..runtime import CallAsync, DurableTimer, Failure, FunctionDef, Sleep, SuspendOn
from ..workflow import Choice, Parallel, Repeat, Retry, Sequence, Task, Wait
from .base import Engine, RunContext


class _TaskFault(Exception):
    pass


@dataclass
class SuspendOptions:
    dispatch_slice_ms: int = 0  # billed orchestrator work per dispatch


class SuspendEngine(Engine):
    id = "suspend"
    options_cls = SuspendOptions

    def register_composition(self, sim, spec, name, ctx=None, **kwargs) -> str:
        ctx = ctx or RunContext()
        self._precheck(spec)
        spec = self._lift_branches(sim, spec, name, ctx)
        slice_ms = self.options.dispatch_slice_ms

        def dispatch(function, state):
            if slice_ms:
                yield Sleep(slice_ms)
            ctx.transitions += 1
            key = ctx.next_key(f"{name}.d")
            yield CallAsync(function, state, key)
            return key

        def orch(node, state):
            if isinstance(node, Task):
                key = yield from dispatch(node.function, state)
                result = yield SuspendOn(key)
                if isinstance(result, Failure):
                    raise _TaskFault(f"task {node.function!r} failed: {result.message}")
                return result
            if isinstance(node, Sequence):
                for child in node.nodes:
                    state = yield from orch(child, state)
                return state
            if isinstance(node, Repeat):
                for _ in range(node.count):
                    state = yield from orch(node.node, state)
                return state
            if isinstance(node, Parallel):
                # all branches are Task nodes after lifting
                keys = []
                for branch in node.branches:
                    keys.append((yield from dispatch(branch.function, state)))
                outputs = []
                for i, key in enumerate(keys):
                    result = yield SuspendOn(key)
                    if isinstance(result, Failure):
                        raise _TaskFault(f"branch {i} failed: {result.message}")
                    outputs.append(result)
                return outputs
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
            raise UnsupportedState(f"suspend orchestrator cannot run node {node!r}")

        def behavior(payload):
            try:
                return (yield from orch(spec, payload))
            except _TaskFault as fault:
                raise SimulatedFault(str(fault))

        sim.register_function(FunctionDef(name, behavior, orchestrator=True))
        return name

    def _lift_branches(self, sim, node, name, ctx):
        """Register non-task parallel branches as compositions of their own."""
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
            for i, branch in enumerate(node.branches):
                if isinstance(branch, Task):
                    branches.append(branch)
                else:
                    sub = self.register_composition(
                        sim, branch, f"{name}.b{len(branches)}-{ctx.next_key('n')}", ctx)
                    branches.append(Task(sub))
            return Parallel(tuple(branches))
        return node
