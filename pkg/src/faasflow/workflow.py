"""Workflow composition tree and builder combinators.

Nodes are immutable values, safe to share. A composition is just its root
node; engines interpret the tree, so the same spec can run on any of them.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Any, Union

from .errors import InvalidCount, ValidationError


class Node:
    """Base class for composition tree nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Task(Node):
    """Invoke one registered function."""

    function: str


@dataclass(frozen=True)
class Sequence(Node):
    """Run nodes one after another, threading the payload through."""

    nodes: tuple = ()


@dataclass(frozen=True)
class Parallel(Node):
    """Run every branch on the same input; output is the ordered list of
    branch outputs (by branch index, regardless of completion order)."""

    branches: tuple = ()

    def __post_init__(self) -> None:
        if len(self.branches) < 1:
            raise InvalidCount("parallel needs at least one branch")


@dataclass(frozen=True)
class Predicate:
    """Comparison on a named payload field: op is one of eq, lt, gt."""

    field: str
    op: str
    value: Union[str, int, float]

    def __post_init__(self) -> None:
        if self.op not in ("eq", "lt", "gt"):
            raise ValidationError(f"unknown predicate op {self.op!r}")

    def evaluate(self, payload: Any) -> bool:
        if not isinstance(payload, dict) or self.field not in payload:
            return False
        actual = payload[self.field]
        if self.op == "eq":
            return actual == self.value
        if not isinstance(actual, (int, float)) or not isinstance(self.value, (int, float)):
            return False
        return actual < self.value if self.op == "lt" else actual > self.value


@dataclass(frozen=True)
class Choice(Node):
    """Branch on a payload predicate."""

    predicate: Predicate
    then_node: Node
    else_node: Node


@dataclass(frozen=True)
class Retry(Node):
    """Re-attempt a node on failure, with a fixed backoff between tries."""

    node: Node
    max_attempts: int = 1
    backoff_ms: int = 0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise InvalidCount("retry needs max_attempts >= 1")
        if self.backoff_ms < 0:
            raise InvalidCount("retry backoff must be >= 0")


@dataclass(frozen=True)
class Repeat(Node):
    """Run a node count times in series."""

    count: int
    node: Node

    def __post_init__(self) -> None:
        if self.count < 1:
            raise InvalidCount("repeat count must be >= 1")


@dataclass(frozen=True)
class Wait(Node):
    """Pause the workflow for a fixed virtual duration."""

    duration_ms: int

    def __post_init__(self) -> None:
        if self.duration_ms < 0:
            raise InvalidCount("wait duration must be >= 0")


CompositionSpec = Node


# --- builder combinators -----------------------------------------------------

def task(function: str) -> Task:
    return Task(function)


def chain(*nodes: Node) -> Sequence:
    return Sequence(tuple(nodes))


def seq(n: int, function: str) -> Node:
    """A sequence of n invocations of the same function."""
    if n < 1:
        raise InvalidCount(f"sequence length must be >= 1, got {n}")
    return Repeat(n, Task(function))


def fan_out(n: int, function: str) -> Parallel:
    """n parallel invocations of the same function."""
    if n < 1:
        raise InvalidCount(f"fan-out width must be >= 1, got {n}")
    return Parallel(tuple(Task(function) for _ in range(n)))


def choose(field: str, op: str, value, then_node: Node, else_node: Node) -> Choice:
    return Choice(Predicate(field, op, value), then_node, else_node)


# --- structural operations ----------------------------------------------------

def normalize(node: Node) -> Node:
    """Collapse trivial wrappers; idempotent."""
    if isinstance(node, Repeat):
        inner = normalize(node.node)
        return inner if node.count == 1 else Repeat(node.count, inner)
    if isinstance(node, Sequence):
        flat: list[Node] = []
        for child in node.nodes:
            child = normalize(child)
            if isinstance(child, Sequence):
                flat.extend(child.nodes)
            else:
                flat.append(child)
        if len(flat) == 1:
            return flat[0]
        return Sequence(tuple(flat))
    if isinstance(node, Parallel):
        return Parallel(tuple(normalize(b) for b in node.branches))
    if isinstance(node, Choice):
        return Choice(node.predicate, normalize(node.then_node), normalize(node.else_node))
    if isinstance(node, Retry):
        inner = normalize(node.node)
        return inner if node.max_attempts == 1 else Retry(inner, node.max_attempts, node.backoff_ms)
    return node


def expand_repeats(node: Node) -> Node:
    """Rewrite Repeat(n, x) into an explicit n-element Sequence."""
    if isinstance(node, Repeat):
        inner = expand_repeats(node.node)
        return Sequence(tuple(inner for _ in range(node.count)))
    if isinstance(node, Sequence):
        return Sequence(tuple(expand_repeats(c) for c in node.nodes))
    if isinstance(node, Parallel):
        return Parallel(tuple(expand_repeats(b) for b in node.branches))
    if isinstance(node, Choice):
        return Choice(node.predicate, expand_repeats(node.then_node), expand_repeats(node.else_node))
    if isinstance(node, Retry):
        return Retry(expand_repeats(node.node), node.max_attempts, node.backoff_ms)
    return node


def action_count(node: Node) -> int:
    """Static count of task occurrences, with repeats expanded and both
    choice arms counted (an upper bound on what a run can execute)."""
    if isinstance(node, Task):
        return 1
    if isinstance(node, Sequence):
        return sum(action_count(c) for c in node.nodes)
    if isinstance(node, Parallel):
        return sum(action_count(b) for b in node.branches)
    if isinstance(node, Choice):
        return action_count(node.then_node) + action_count(node.else_node)
    if isinstance(node, Retry):
        return action_count(node.node)
    if isinstance(node, Repeat):
        return node.count * action_count(node.node)
    return 0


def function_names(node: Node) -> Counter:
    """Multiset of referenced function names, repeats expanded."""
    if isinstance(node, Task):
        return Counter({node.function: 1})
    counts: Counter = Counter()
    if isinstance(node, Sequence):
        for c in node.nodes:
            counts += function_names(c)
    elif isinstance(node, Parallel):
        for b in node.branches:
            counts += function_names(b)
    elif isinstance(node, Choice):
        counts += function_names(node.then_node)
        counts += function_names(node.else_node)
    elif isinstance(node, Retry):
        counts += function_names(node.node)
    elif isinstance(node, Repeat):
        inner = function_names(node.node)
        for name, k in inner.items():
            counts[name] = k * node.count
    return counts


def has_parallel(node: Node) -> bool:
    if isinstance(node, Parallel):
        return True
    if isinstance(node, Sequence):
        return any(has_parallel(c) for c in node.nodes)
    if isinstance(node, Choice):
        return has_parallel(node.then_node) or has_parallel(node.else_node)
    if isinstance(node, (Retry, Repeat)):
        return has_parallel(node.node)
    return False


# --- JSON codec ----------------------------------------------------------------

def to_dict(node: Node) -> dict:
    if isinstance(node, Task):
        return {"kind": "task", "function": node.function}
    if isinstance(node, Sequence):
        return {"kind": "sequence", "nodes": [to_dict(c) for c in node.nodes]}
    if isinstance(node, Parallel):
        return {"kind": "parallel", "branches": [to_dict(b) for b in node.branches]}
    if isinstance(node, Choice):
        return {
            "kind": "choice",
            "field": node.predicate.field,
            "op": node.predicate.op,
            "value": node.predicate.value,
            "then": to_dict(node.then_node),
            "else": to_dict(node.else_node),
        }
    if isinstance(node, Retry):
        return {"kind": "retry", "node": to_dict(node.node),
                "max_attempts": node.max_attempts, "backoff_ms": node.backoff_ms}
    if isinstance(node, Repeat):
        return {"kind": "repeat", "count": node.count, "node": to_dict(node.node)}
    if isinstance(node, Wait):
        return {"kind": "wait", "duration_ms": node.duration_ms}
    raise ValidationError(f"cannot serialize node {node!r}")


def from_dict(doc: dict) -> Node:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValidationError("composition node must be an object with a 'kind'")
    kind = doc["kind"]
    try:
        if kind == "task":
            return Task(doc["function"])
        if kind == "sequence":
            return Sequence(tuple(from_dict(c) for c in doc["nodes"]))
        if kind == "parallel":
            return Parallel(tuple(from_dict(b) for b in doc["branches"]))
        if kind == "choice":
            return Choice(Predicate(doc["field"], doc["op"], doc["value"]),
                          from_dict(doc["then"]), from_dict(doc["else"]))
        if kind == "retry":
            return Retry(from_dict(doc["node"]), doc.get("max_attempts", 1),
                         doc.get("backoff_ms", 0))
        if kind == "repeat":
            return Repeat(doc["count"], from_dict(doc["node"]))
        if kind == "wait":
            return Wait(doc["duration_ms"])
    except KeyError as missing:
        raise ValidationError(f"{kind} node is missing field {missing}") from None
    raise ValidationError(f"unknown node kind {kind!r}")
