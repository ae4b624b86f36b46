"""JSON state-machine DSL: a documented subset of the Amazon States Language.

Supported state types: Task, Parallel, Choice, Wait, Pass. Wait takes
"Milliseconds" (the platform clock is virtual ms). Choice takes a single
condition with Then/Else targets. InputPath/OutputPath, Map, catchers and
intrinsic functions are out of scope.

Example:

    {
      "Comment": "A Sequence state machine",
      "StartAt": "1",
      "States": {
        "1": {"Type": "Task", "Resource": "sleepAction", "Next": "2"},
        "2": {"Type": "Task", "Resource": "sleepAction", "End": true}
      }
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ParseError, UnsupportedState, ValidationError
from .workflow import Choice, Node, Parallel, Predicate, Sequence, Task, Wait

STATE_TYPES = ("Task", "Parallel", "Choice", "Wait", "Pass")

_CONDITIONS = {
    "NumericEquals": "eq",
    "NumericLessThan": "lt",
    "NumericGreaterThan": "gt",
    "StringEquals": "eq",
}


@dataclass
class StateDef:
    """One named state of a machine."""

    type: str
    resource: str | None = None
    next: str | None = None
    end: bool = False
    branches: list["StateMachineDoc"] = field(default_factory=list)
    milliseconds: int = 0
    variable: str | None = None
    condition: str | None = None
    value: Any = None
    then: str | None = None
    orelse: str | None = None


@dataclass
class StateMachineDoc:
    """A validated state machine document."""

    start_at: str
    states: dict[str, StateDef]
    comment: str = ""


def parse_state_machine(text: str) -> StateMachineDoc:
    """Parse and validate a DSL document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, err.pos) from None
    if not isinstance(raw, dict):
        raise ParseError("document root must be an object")
    doc = _build_doc(raw, where="machine")
    validate_doc(doc)
    return doc


def _build_doc(raw: dict, where: str) -> StateMachineDoc:
    if "StartAt" not in raw:
        raise ValidationError(f"{where}: missing StartAt")
    states_raw = raw.get("States")
    if not isinstance(states_raw, dict) or not states_raw:
        raise ValidationError(f"{where}: States must be a non-empty object")
    states: dict[str, StateDef] = {}
    for name, body in states_raw.items():
        if not isinstance(body, dict):
            raise ValidationError(f"state {name!r}: must be an object")
        states[name] = _build_state(name, body)
    return StateMachineDoc(start_at=str(raw["StartAt"]), states=states,
                           comment=str(raw.get("Comment", "")))


def _build_state(name: str, body: dict) -> StateDef:
    stype = body.get("Type")
    if stype not in STATE_TYPES:
        raise ValidationError(f"state {name!r}: unknown Type {stype!r}")
    state = StateDef(type=stype, next=body.get("Next"), end=bool(body.get("End", False)))
    if stype == "Task":
        if not body.get("Resource"):
            raise ValidationError(f"state {name!r}: Task needs a Resource")
        state.resource = str(body["Resource"])
    elif stype == "Parallel":
        branches = body.get("Branches")
        if not isinstance(branches, list) or not branches:
            raise ValidationError(f"state {name!r}: Parallel needs at least one branch")
        state.branches = [_build_doc(b, where=f"state {name!r} branch {i}")
                          for i, b in enumerate(branches)]
    elif stype == "Wait":
        ms = body.get("Milliseconds")
        if not isinstance(ms, int) or ms < 0:
            raise ValidationError(f"state {name!r}: Wait needs integer Milliseconds >= 0")
        state.milliseconds = ms
    elif stype == "Choice":
        cond = body.get("Condition")
        if cond not in _CONDITIONS:
            raise ValidationError(f"state {name!r}: unsupported Condition {cond!r}")
        if not body.get("Variable"):
            raise ValidationError(f"state {name!r}: Choice needs a Variable")
        if "Value" not in body:
            raise ValidationError(f"state {name!r}: Choice needs a Value")
        if not body.get("Then") or not body.get("Else"):
            raise ValidationError(f"state {name!r}: Choice needs Then and Else")
        state.variable = str(body["Variable"])
        state.condition = cond
        state.value = body["Value"]
        state.then = str(body["Then"])
        state.orelse = str(body["Else"])
    return state


def validate_doc(doc: StateMachineDoc) -> None:
    """Enforce structural rules: targets exist, no unreachable states,
    every path ends (the transition graph is acyclic)."""
    states = doc.states
    if doc.start_at not in states:
        raise ValidationError(f"StartAt {doc.start_at!r} is not a state")
    for name, state in states.items():
        for target in _targets(state):
            if target not in states:
                raise ValidationError(f"state {name!r}: target {target!r} does not exist")
        if state.type == "Choice":
            if state.next or state.end:
                raise ValidationError(f"state {name!r}: Choice uses Then/Else, not Next/End")
        elif state.next is None and not state.end:
            raise ValidationError(f"state {name!r}: needs Next or End")
        elif state.next is not None and state.end:
            raise ValidationError(f"state {name!r}: Next and End are exclusive")

    # reachability from StartAt
    seen: set[str] = set()
    stack = [doc.start_at]
    while stack:
        name = stack.pop()
        if name in seen:
            continue
        seen.add(name)
        stack.extend(_targets(states[name]))
    unreachable = sorted(set(states) - seen)
    if unreachable:
        raise ValidationError(f"unreachable states: {', '.join(unreachable)}")

    # acyclicity: a cycle would mean a path that never reaches an end state
    color: dict[str, int] = {}

    def visit(name: str) -> None:
        mark = color.get(name, 0)
        if mark == 1:
            raise ValidationError(f"cycle through state {name!r} never reaches an end state")
        if mark == 2:
            return
        color[name] = 1
        for target in _targets(states[name]):
            visit(target)
        color[name] = 2

    visit(doc.start_at)

    for branch_doc in _branch_docs(doc):
        validate_doc(branch_doc)


def _targets(state: StateDef) -> list[str]:
    if state.type == "Choice":
        return [t for t in (state.then, state.orelse) if t]
    return [state.next] if state.next else []


def _branch_docs(doc: StateMachineDoc):
    for state in doc.states.values():
        yield from state.branches


def serialize_state_machine(doc: StateMachineDoc) -> str:
    """Render a document back to DSL text; parse(serialize(doc)) == doc."""
    return json.dumps(_doc_to_raw(doc), indent=2, sort_keys=False)


def _doc_to_raw(doc: StateMachineDoc) -> dict:
    raw: dict = {}
    if doc.comment:
        raw["Comment"] = doc.comment
    raw["StartAt"] = doc.start_at
    states: dict = {}
    for name, state in doc.states.items():
        body: dict = {"Type": state.type}
        if state.type == "Task":
            body["Resource"] = state.resource
        elif state.type == "Parallel":
            body["Branches"] = [_doc_to_raw(b) for b in state.branches]
        elif state.type == "Wait":
            body["Milliseconds"] = state.milliseconds
        elif state.type == "Choice":
            body["Variable"] = state.variable
            body["Condition"] = state.condition
            body["Value"] = state.value
            body["Then"] = state.then
            body["Else"] = state.orelse
        if state.type != "Choice":
            if state.end:
                body["End"] = True
            else:
                body["Next"] = state.next
        states[name] = body
    raw["States"] = states
    return raw


def compile_state_machine(doc: StateMachineDoc) -> Node:
    """Lower a document to a composition tree.

    Linear chains become Sequence nodes; a Parallel state becomes a Parallel
    node with one compiled branch per sub-machine. Both arms of a Choice
    carry their own continuation, so converging diamonds are duplicated
    (the result is a tree, not a graph).
    """
    return _compile_chain(doc, doc.start_at)


def _compile_chain(doc: StateMachineDoc, start: str) -> Node:
    nodes: list[Node] = []
    name: str | None = start
    while name is not None:
        state = doc.states.get(name)
        if state is None:
            raise ValidationError(f"state {name!r} does not exist")
        if state.type == "Task":
            nodes.append(Task(state.resource))
        elif state.type == "Parallel":
            nodes.append(Parallel(tuple(compile_state_machine(b) for b in state.branches)))
        elif state.type == "Wait":
            nodes.append(Wait(state.milliseconds))
        elif state.type == "Pass":
            pass  # identity
        elif state.type == "Choice":
            predicate = Predicate(state.variable, _CONDITIONS[state.condition], state.value)
            arm_then = _compile_chain(doc, state.then)
            arm_else = _compile_chain(doc, state.orelse)
            nodes.append(Choice(predicate, arm_then, arm_else))
            name = None
            break
        else:
            raise UnsupportedState(f"state type {state.type!r} cannot be compiled")
        name = state.next
    if len(nodes) == 1:
        return nodes[0]
    return Sequence(tuple(nodes))


def sequence_machine(n: int, resource: str, comment: str = "A Sequence state machine") -> StateMachineDoc:
    """Build the n-step task chain used throughout the benchmarks."""
    states = {}
    for i in range(1, n + 1):
        state = StateDef(type="Task", resource=resource)
        if i == n:
            state.end = True
        else:
            state.next = str(i + 1)
        states[str(i)] = state
    return StateMachineDoc(start_at="1", states=states, comment=comment)


def parallel_machine(n: int, resource: str, comment: str = "A state machine with parallel states") -> StateMachineDoc:
    """Build a single Parallel state with n single-task branches."""
    branches = []
    for i in range(n):
        name = str(i + 1)
        branches.append(StateMachineDoc(
            start_at=name,
            states={name: StateDef(type="Task", resource=resource, end=True)},
        ))
    return StateMachineDoc(
        start_at="Parallel",
        states={"Parallel": StateDef(type="Parallel", branches=branches, end=True)},
        comment=comment,
    )
