"""Automated verification of the three composition constraints.

A mechanism is safe when (1) it treats composed functions as black boxes,
(2) its compositions are themselves invocable functions that nest
(substitution), and (3) the orchestrator is never billed while the functions
it waits on are billed (no double billing). The checks are architectural:
verdicts do not depend on the latency model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .engines import Engine, make_engine
from .engines.base import RunContext
from .errors import CompositionNotRegistrable, EngineError
from .runtime import FunctionDef, InvocationRecord, LatencyModel, Payload, sleep_behavior
from .workflow import Node, Sequence, Task, seq


@dataclass
class TrilemmaVerdict:
    black_box: bool
    substitution: bool
    no_double_billing: bool
    evidence: list[str] = field(default_factory=list)

    @property
    def st_safe(self) -> bool:
        return self.black_box and self.substitution and self.no_double_billing

    def to_dict(self) -> dict:
        return {
            "black_box": self.black_box,
            "substitution": self.substitution,
            "no_double_billing": self.no_double_billing,
            "st_safe": self.st_safe,
            "evidence": list(self.evidence),
        }


class SealedBehavior:
    """A behavior that records any attempt to look inside it.

    Engines must only call it; touching any other attribute counts as
    introspection and voids the black-box property.
    """

    def __init__(self, inner):
        self.__dict__["_inner"] = inner
        self.__dict__["inspected"] = False

    def __call__(self, payload):
        return self.__dict__["_inner"](payload)

    def __getattr__(self, name):
        self.__dict__["inspected"] = True
        raise AttributeError(f"sealed behavior has no attribute {name!r}")


def detect_double_billing(trace: Iterable[InvocationRecord],
                          epsilon_ms: int = 1) -> list[tuple[str, str, int]]:
    """Pairs (orchestrator id, descendant id, overlap ms) where an
    orchestrator's billed time overlaps a descendant's by more than epsilon."""
    records = list(trace)
    children: dict[str, list[InvocationRecord]] = {}
    for record in records:
        if record.parent is not None:
            children.setdefault(record.parent, []).append(record)

    findings: list[tuple[str, str, int]] = []
    for record in records:
        if not record.orchestrator or not record.billed_intervals:
            continue
        stack = list(children.get(record.id, []))
        descendants = []
        while stack:
            node = stack.pop()
            descendants.append(node)
            stack.extend(children.get(node.id, []))
        descendants.sort(key=lambda r: r.id)
        for child in descendants:
            overlap = _overlap_ms(record.billed_intervals, child.billed_intervals)
            if overlap > epsilon_ms:
                findings.append((record.id, child.id, overlap))
    return findings


def _overlap_ms(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> int:
    total = 0
    for a0, a1 in a:
        for b0, b1 in b:
            total += max(0, min(a1, b1) - max(a0, b0))
    return total


def check_substitution(engine: Engine, spec: Node,
                       functions: Iterable[FunctionDef] = (),
                       payload: Payload = None) -> bool:
    """True when the composition registers as a function, runs via a plain
    invoke, and nests as a task of another composition with the right output."""
    functions = list(functions)
    expected = engine.run(spec, payload, functions=functions).output

    sim = engine.new_simulation()
    for fdef in functions:
        sim.register_function(fdef)
    ctx = RunContext()
    try:
        name = engine.register_composition(sim, spec, "workflow.sub", ctx)
    except CompositionNotRegistrable:
        return False

    direct = sim.invoke(name, payload)
    if direct.output != expected:
        return False

    outer_name = engine.register_composition(sim, Sequence((Task(name),)),
                                             "workflow.outer", ctx)
    nested = sim.invoke(outer_name, payload)
    return nested.output == expected


def verify_trilemma(engine: Engine, spec: Node,
                    functions: Iterable[FunctionDef] = (),
                    payload: Payload = None,
                    epsilon_ms: int = 1) -> TrilemmaVerdict:
    """Run the three probes against one engine and composition."""
    functions = list(functions)
    evidence: list[str] = []

    # black box: run with sealed behaviors and watch for introspection
    sealed = [FunctionDef(f.name, SealedBehavior(f.behavior), f.max_payload_bytes)
              for f in functions]
    result = engine.run(spec, payload, functions=sealed)
    black_box = not any(f.behavior.inspected for f in sealed)
    if not black_box:
        touched = [f.name for f in sealed if f.behavior.inspected]
        evidence.append(f"behavior internals inspected: {', '.join(touched)}")

    overlaps = detect_double_billing(result.trace, epsilon_ms)
    no_double_billing = not overlaps
    for orch, child, ms in overlaps:
        evidence.append(f"double billing: {orch} overlaps {child} for {ms} ms")

    substitution = check_substitution(engine, spec, functions, payload)
    if not substitution:
        evidence.append("composition cannot be invoked or nested as a function")

    return TrilemmaVerdict(black_box, substitution, no_double_billing, evidence)


def default_probe_spec() -> tuple[Node, list[FunctionDef]]:
    """A small composition and its functions for verification runs."""
    functions = [FunctionDef("probe.sleep", sleep_behavior(50))]
    return seq(2, "probe.sleep"), functions


def verify_engine(engine_id: str, spec: Node | None = None,
                  functions: Iterable[FunctionDef] = (),
                  payload: Payload = None,
                  latency: LatencyModel | None = None,
                  **engine_opts) -> TrilemmaVerdict:
    """Convenience entry point used by the CLI."""
    engine = make_engine(engine_id, latency, **engine_opts)
    if spec is None:
        spec, functions = default_probe_spec()
    return verify_trilemma(engine, spec, functions, payload)
