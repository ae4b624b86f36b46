"""External client scheduler engine.

The scheduler walks the state machine outside the platform: for every state
entered it reads the persisted state, dispatches the function synchronously,
and writes the result back to the transition log. The scheduler itself is
not a platform function, so it produces no invocation records and the
composition cannot be invoked as a function (substitution fails by design).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import CompositionNotRegistrable, RateLimited, StateTooLarge, WorkflowFailed
from ..runtime import InvocationState, payload_bytes
from ..workflow import Choice, Parallel, Retry, Sequence, Task, Wait, expand_repeats
from .base import Engine, RunContext, SerialActor, TokenBucket


@dataclass
class ClientSchedulerOptions:
    join_scan_ms: float = 0.0       # per-branch status scan on each parallel completion
    dispatch_mode: str = "serial"   # "serial" or "concurrent" branch dispatch


class ClientSchedulerEngine(Engine):
    id = "asf"
    options_cls = ClientSchedulerOptions

    def register_composition(self, sim, spec, name, ctx=None) -> str:
        raise CompositionNotRegistrable(
            "the client scheduler is external to the platform; "
            "its compositions are not functions")

    def _start(self, sim, spec, payload, ctx: RunContext, on_done) -> None:
        spec = expand_repeats(spec)
        actor = SerialActor(sim)
        rate = self.profile.transition_rate_limit
        bucket = TokenBucket(*rate) if rate else None
        log_ms = self.latency.log_write_ms
        max_state = self.profile.max_state_bytes

        def crossing_cost(value) -> int:
            size = payload_bytes(value)
            if max_state is not None and size > max_state:
                raise StateTooLarge(size, max_state)
            return sim.transfer_ms(size)

        def transition(value) -> int:
            """Account one state entry; returns the log-read duration."""
            ctx.transitions += 1
            if bucket is not None and not bucket.take(sim.now):
                raise RateLimited(
                    f"transition rate exceeded ({rate[0]}/s, burst {rate[1]})")
            return sim.lat(log_ms) + crossing_cost(value)

        def exec_node(node, state, done, fail, serialized=True):
            enqueue = actor.enqueue if serialized else _immediate(sim)

            if isinstance(node, Sequence):
                def step(i, value):
                    if i == len(node.nodes):
                        done(value)
                    else:
                        exec_node(node.nodes[i], value, lambda out: step(i + 1, out),
                                  fail, serialized)
                step(0, state)

            elif isinstance(node, Task):
                def entry():
                    enqueue(transition(state), dispatch)

                def dispatch():
                    sim.spawn(node.function, state, on_complete=finished)

                def finished(record):
                    ok = record.state is InvocationState.COMPLETED
                    cost = sim.lat(log_ms) + (crossing_cost(record.output) if ok else 0)
                    actor.enqueue(cost, lambda: settle(record))

                def settle(record):
                    if record.state is InvocationState.COMPLETED:
                        done(record.output)
                    else:
                        fail(WorkflowFailed(
                            f"task {node.function!r} failed: {record.failure}"))
                entry()

            elif isinstance(node, Wait):
                def entry():
                    enqueue(transition(state), lambda: sim.schedule(node.duration_ms, exit_))

                def exit_():
                    actor.enqueue(sim.lat(log_ms), lambda: done(state))
                entry()

            elif isinstance(node, Choice):
                def entry():
                    enqueue(transition(state), decide)

                def decide():
                    arm = node.then_node if node.predicate.evaluate(state) else node.else_node
                    actor.enqueue(sim.lat(log_ms),
                                  lambda: exec_node(arm, state, done, fail, serialized))
                entry()

            elif isinstance(node, Parallel):
                branches = node.branches
                outputs: list = [None] * len(branches)
                status = {"completed": 0, "settled": False}
                concurrent = self.options.dispatch_mode == "concurrent"
                scan = round(self.options.join_scan_ms * len(branches))

                def branch_done(i, out):
                    outputs[i] = out
                    status["completed"] += 1
                    actor.enqueue(sim.lat(scan), join_check)

                def branch_failed(err):
                    if not status["settled"]:
                        status["settled"] = True
                        actor.enqueue(sim.lat(scan), lambda: fail(err))

                def join_check():
                    if status["settled"] or status["completed"] < len(branches):
                        return
                    status["settled"] = True
                    cost = sim.lat(log_ms) + crossing_cost(list(outputs))
                    actor.enqueue(cost, lambda: done(list(outputs)))

                def entry():
                    enqueue(transition(state), fan)

                def fan():
                    for i, branch in enumerate(branches):
                        exec_node(branch, state,
                                  lambda out, i=i: branch_done(i, out),
                                  branch_failed,
                                  serialized=not concurrent)
                entry()

            elif isinstance(node, Retry):
                def attempt(k):
                    exec_node(node.node, state, done,
                              lambda err: give_or_retry(k, err), serialized)

                def give_or_retry(k, err):
                    if k < node.max_attempts:
                        sim.schedule(node.backoff_ms, lambda: attempt(k + 1))
                    else:
                        fail(err)
                attempt(1)

            else:
                raise WorkflowFailed(f"client scheduler cannot run node {node!r}")

        def top_fail(err):
            raise err

        exec_node(spec, payload, on_done, top_fail)


def _immediate(sim):
    """Concurrent dispatch path: costs elapse without the scheduler queue."""
    def enqueue(duration_ms, done):
        sim.schedule(duration_ms, done)
    return enqueue
