"""Seeded random workflow generator plus an independent evaluation oracle.

The oracle mirrors function and predicate semantics in plain Python without
going through the simulator, so engine outputs can be checked against it.
"""

import random

from faasflow import FunctionDef, scripted_behavior, sleep_behavior
from faasflow.workflow import (
    Choice,
    Parallel,
    Predicate,
    Repeat,
    Retry,
    Sequence,
    Task,
    Wait,
)

FUNCTION_NAMES = ("relay10", "relay25", "tagA", "tagB")


def make_functions():
    return [
        FunctionDef("relay10", sleep_behavior(10)),
        FunctionDef("relay25", sleep_behavior(25)),
        FunctionDef("tagA", scripted_behavior([("sleep", 5), ("tag", "A")])),
        FunctionDef("tagB", scripted_behavior([("sleep", 15), ("tag", "B")])),
    ]


def mirror_call(name, payload):
    """Pure-Python twin of the registered behaviors."""
    if name in ("relay10", "relay25"):
        return payload
    label = name[-1]
    if isinstance(payload, dict):
        out = dict(payload)
    else:
        out = {"value": payload}
    out["via"] = list(out.get("via", [])) + [label]
    return out


def evaluate(node, payload):
    """Direct evaluation of a composition tree, independent of any engine."""
    if isinstance(node, Task):
        return mirror_call(node.function, payload)
    if isinstance(node, Sequence):
        for child in node.nodes:
            payload = evaluate(child, payload)
        return payload
    if isinstance(node, Repeat):
        for _ in range(node.count):
            payload = evaluate(node.node, payload)
        return payload
    if isinstance(node, Parallel):
        return [evaluate(branch, payload) for branch in node.branches]
    if isinstance(node, Choice):
        taken = node.then_node if _predicate_holds(node.predicate, payload) else node.else_node
        return evaluate(taken, payload)
    if isinstance(node, Retry):
        return evaluate(node.node, payload)
    if isinstance(node, Wait):
        return payload
    raise AssertionError(f"oracle cannot evaluate {node!r}")


def _predicate_holds(pred: Predicate, payload) -> bool:
    if not isinstance(payload, dict) or pred.field not in payload:
        return False
    actual = payload[pred.field]
    if pred.op == "eq":
        return actual == pred.value
    if not isinstance(actual, (int, float)):
        return False
    return actual < pred.value if pred.op == "lt" else actual > pred.value


def random_spec(rng: random.Random, max_depth=4, max_tasks=20,
                allow_parallel=True, linear_only=False):
    """A random composition with at most max_tasks task occurrences."""
    budget = [rng.randint(1, max_tasks)]

    def leaf():
        budget[0] -= 1
        return Task(rng.choice(FUNCTION_NAMES))

    def build(depth):
        if budget[0] <= 0:
            budget[0] = 1  # every composition runs at least one task
        if depth >= max_depth or budget[0] == 1 or rng.random() < 0.3:
            return leaf()
        if linear_only:
            kinds = ["sequence", "repeat"]
        else:
            kinds = ["sequence", "repeat", "choice", "retry", "wait_seq"]
            if allow_parallel:
                kinds.append("parallel")
        kind = rng.choice(kinds)
        if kind == "sequence":
            width = rng.randint(2, min(3, budget[0]))
            return Sequence(tuple(build(depth + 1) for _ in range(width)))
        if kind == "repeat":
            count = rng.randint(2, 3)
            inner_budget = max(1, budget[0] // count)
            saved = budget[0]
            budget[0] = inner_budget
            inner = build(depth + 1)
            budget[0] = max(0, saved - count * (inner_budget - budget[0]))
            return Repeat(count, inner)
        if kind == "parallel":
            width = rng.randint(2, min(3, budget[0]))
            return Parallel(tuple(build(depth + 1) for _ in range(width)))
        if kind == "choice":
            pred = Predicate("v", rng.choice(["eq", "lt", "gt"]), rng.randint(0, 10))
            return Choice(pred, build(depth + 1), build(depth + 1))
        if kind == "retry":
            return Retry(build(depth + 1), rng.randint(2, 3), rng.randint(0, 20))
        return Sequence((Wait(rng.randint(0, 30)), build(depth + 1)))

    return build(0)


def random_payload(rng: random.Random):
    return {"v": rng.randint(0, 10)}
