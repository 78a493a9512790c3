"""Task-graph data model: tasks, actions, validation and graph metrics.

A task body is a straight-line sequence of actions (no branching).  The
spawn relation forms a forest rooted at the graph's root tasks; any
further ordering is expressed through completion polls and wait actions.
Time is measured in integer ticks so every derived quantity is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Union

TaskId = int


class DeferMode(str, Enum):
    """How a spawn wants the child to be scheduled."""

    RUNTIME_CHOICE = "runtime"
    MUST_DEFER = "must_defer"
    UNDEFERRED = "undeferred"


class YieldMode(str, Enum):
    DEFAULT = "default"
    LATENCY = "latency"
    THROUGHPUT = "throughput"


class WaitMode(str, Enum):
    THROUGHPUT = "throughput"
    LATENCY = "latency"


@dataclass(frozen=True)
class Compute:
    """Run for `duration` ticks without a scheduling point."""

    duration: int


@dataclass(frozen=True)
class Spawn:
    """Create child task `child` with the given defer request."""

    child: TaskId
    defer: DeferMode = DeferMode.RUNTIME_CHOICE


@dataclass(frozen=True)
class PollOutcome:
    """Busy-wait until `target` has completed, yielding between checks.

    Each failed re-check costs up to `poll_cost` ticks of spinning; a
    check that finds the target complete is free.
    """

    target: TaskId
    yield_mode: YieldMode = YieldMode.DEFAULT
    poll_cost: int = 0


@dataclass(frozen=True)
class TaskwaitChildren:
    """Wait for the direct children spawned so far (not their descendants)."""

    mode: WaitMode = WaitMode.THROUGHPUT


@dataclass(frozen=True)
class TaskgroupEnd:
    """Wait for all descendants spawned since the previous group end."""

    mode: WaitMode = WaitMode.THROUGHPUT


Action = Union[Compute, Spawn, PollOutcome, TaskwaitChildren, TaskgroupEnd]


@dataclass(frozen=True)
class TaskSpec:
    """One task: identity, scheduling attributes and its action sequence.

    A tied task, once started, resumes only on the thread that first ran
    it; an untied task may be resumed anywhere.  Higher priority means
    more urgent; the default is 0.
    """

    id: TaskId
    actions: tuple = ()
    priority: int = 0
    tied: bool = True
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))


@dataclass(frozen=True)
class TaskGraph:
    """Immutable task forest; `roots` lists the initial pool in order."""

    tasks: tuple = ()
    roots: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "roots", tuple(self.roots))

    def task(self, task_id: TaskId) -> TaskSpec:
        return self.tasks[task_id]

    def __len__(self) -> int:
        return len(self.tasks)


@dataclass(frozen=True)
class Violation:
    """A broken structural rule, named after the rule and offending task."""

    kind: str
    task: TaskId
    detail: str = ""


class CyclicDependencyError(Exception):
    """Poll edges combined with spawn/wait edges form a cycle."""


def spawn_parents(graph: TaskGraph) -> dict:
    """Map child id -> (parent id, action index of the spawn).

    Only the first spawn of each child is recorded; validate() flags
    duplicates separately.
    """
    parents = {}
    for spec in graph.tasks:
        for idx, action in enumerate(spec.actions):
            if isinstance(action, Spawn) and action.child not in parents:
                parents[action.child] = (spec.id, idx)
    return parents


def validate(graph: TaskGraph) -> list:
    """Check every structural invariant; violations are data, not errors."""
    violations = []
    n = len(graph.tasks)
    ids = [spec.id for spec in graph.tasks]
    if ids != list(range(n)):
        for pos, spec in enumerate(graph.tasks):
            if spec.id != pos:
                violations.append(Violation("BadId", spec.id, f"expected id {pos}"))
        return violations

    known = set(range(n))
    root_set = set()
    for root in graph.roots:
        if root not in known:
            violations.append(Violation("UnknownRoot", root))
        elif root in root_set:
            violations.append(Violation("DuplicateRoot", root))
        root_set.add(root)

    spawn_count = {task_id: 0 for task_id in range(n)}
    for spec in graph.tasks:
        for action in spec.actions:
            if isinstance(action, Compute):
                if action.duration <= 0:
                    violations.append(
                        Violation("NonPositiveDuration", spec.id, str(action.duration))
                    )
            elif isinstance(action, Spawn):
                if action.child not in known:
                    violations.append(Violation("UnknownSpawnTarget", spec.id, str(action.child)))
                    continue
                if action.child == spec.id:
                    violations.append(Violation("SelfSpawn", spec.id))
                spawn_count[action.child] += 1
                if spawn_count[action.child] == 2:
                    violations.append(Violation("DuplicateSpawn", action.child))
            elif isinstance(action, PollOutcome):
                if action.target not in known:
                    violations.append(Violation("UnknownPollTarget", spec.id, str(action.target)))
                if action.poll_cost < 0:
                    violations.append(Violation("NegativePollCost", spec.id))

    for task_id in range(n):
        spawned = spawn_count[task_id]
        if task_id in root_set:
            if spawned:
                violations.append(Violation("RootAlsoSpawned", task_id))
        elif spawned == 0:
            violations.append(Violation("UnspawnedTask", task_id))

    # Ancestor spawns show up as cycles when walking the parent relation.
    parents = spawn_parents(graph)
    for task_id in range(n):
        seen = set()
        cur = task_id
        while cur in parents:
            cur = parents[cur][0]
            if cur == task_id:
                violations.append(Violation("SpawnCycle", task_id))
                break
            if cur in seen:
                break
            seen.add(cur)

    return violations


def total_work(graph: TaskGraph) -> int:
    """Sum of all compute durations; poll spinning is contention-dependent
    and excluded."""
    work = 0
    for spec in graph.tasks:
        for action in spec.actions:
            if isinstance(action, Compute):
                work += action.duration
    return work


def _descendants(graph: TaskGraph, members, children_of) -> set:
    out = set()
    stack = list(members)
    while stack:
        cur = stack.pop()
        if cur in out:
            continue
        out.add(cur)
        stack.extend(children_of.get(cur, ()))
    return out


def critical_path(graph: TaskGraph):
    """Longest dependency-respecting chain of compute ticks.

    Returns (length, path) where path lists the tasks contributing
    compute along one maximal chain (consecutive repeats collapsed).
    Edge rules: action order within a task; a spawn precedes the child's
    first action; an undeferred spawn also serializes the child before
    the parent's next action; waits are preceded by their whole
    synchronization set; a poll is preceded by its target's completion.
    Ties between equal-length chains pick the smallest (task, action)
    step by step.
    """
    nodes = []  # (task, action_idx); a final (task, len(actions)) completion node
    node_index = {}
    for spec in graph.tasks:
        for idx in range(len(spec.actions) + 1):
            node_index[(spec.id, idx)] = len(nodes)
            nodes.append((spec.id, idx))

    def weight(node):
        task_id, idx = node
        actions = graph.task(task_id).actions
        if idx < len(actions) and isinstance(actions[idx], Compute):
            return actions[idx].duration
        return 0

    children_of = {}
    for child, (parent, _) in spawn_parents(graph).items():
        children_of.setdefault(parent, []).append(child)

    edges = [[] for _ in nodes]

    def add_edge(src, dst):
        edges[node_index[src]].append(node_index[dst])

    for spec in graph.tasks:
        children_so_far = []
        group_mark = 0
        for idx, action in enumerate(spec.actions):
            add_edge((spec.id, idx), (spec.id, idx + 1))
            if isinstance(action, Spawn):
                add_edge((spec.id, idx), (action.child, 0))
                children_so_far.append(action.child)
                if action.defer is DeferMode.UNDEFERRED:
                    child_last = len(graph.task(action.child).actions)
                    add_edge((action.child, child_last), (spec.id, idx + 1))
            elif isinstance(action, TaskwaitChildren):
                for child in children_so_far:
                    add_edge((child, len(graph.task(child).actions)), (spec.id, idx))
            elif isinstance(action, TaskgroupEnd):
                members = children_so_far[group_mark:]
                group_mark = len(children_so_far)
                for dep in _descendants(graph, members, children_of):
                    add_edge((dep, len(graph.task(dep).actions)), (spec.id, idx))
            elif isinstance(action, PollOutcome):
                add_edge((action.target, len(graph.task(action.target).actions)), (spec.id, idx))

    # Longest path over the DAG; Kahn order doubles as the cycle check.
    indeg = [0] * len(nodes)
    for src, outs in enumerate(edges):
        for dst in outs:
            indeg[dst] += 1
    ready = [i for i, d in enumerate(indeg) if d == 0]
    topo = []
    while ready:
        ready.sort(key=lambda i: nodes[i])
        cur = ready.pop(0)
        topo.append(cur)
        for dst in edges[cur]:
            indeg[dst] -= 1
            if indeg[dst] == 0:
                ready.append(dst)
    if len(topo) != len(nodes):
        raise CyclicDependencyError("poll/wait/spawn edges form a cycle")

    best = [0] * len(nodes)  # best length from node to any sink, inclusive
    succ = [None] * len(nodes)
    for i in reversed(topo):
        best_next, chosen = 0, None
        for dst in edges[i]:
            if best[dst] > best_next:
                best_next, chosen = best[dst], dst
            elif best[dst] == best_next and chosen is not None and nodes[dst] < nodes[chosen]:
                chosen = dst
        best[i] = weight(nodes[i]) + best_next
        succ[i] = chosen

    starts = [node_index[(root, 0)] for root in graph.roots]
    if not starts:
        return 0, []
    start = min(starts, key=lambda i: (-best[i], nodes[i]))
    length = best[start]

    path = []
    cur = start
    while cur is not None:
        task_id, _ = nodes[cur]
        if weight(nodes[cur]) > 0 and (not path or path[-1] != task_id):
            path.append(task_id)
        cur = succ[cur]
    return length, path


# --- JSON serialization -------------------------------------------------
#
# Layout: {"tasks": [...], "roots": [...]}; each task
# {"id", "priority", "tied", "label", "actions": [...]}; action objects
# are discriminated by their "type" field.  Field names are stable.


def _action_to_dict(action: Action) -> dict:
    if isinstance(action, Compute):
        return {"type": "compute", "duration": action.duration}
    if isinstance(action, Spawn):
        return {"type": "spawn", "child": action.child, "defer": action.defer.value}
    if isinstance(action, PollOutcome):
        return {
            "type": "poll",
            "target": action.target,
            "yield_mode": action.yield_mode.value,
            "poll_cost": action.poll_cost,
        }
    if isinstance(action, TaskwaitChildren):
        return {"type": "taskwait_children", "mode": action.mode.value}
    if isinstance(action, TaskgroupEnd):
        return {"type": "taskgroup_end", "mode": action.mode.value}
    raise TypeError(f"unknown action {action!r}")


def _action_from_dict(data: dict) -> Action:
    kind = data["type"]
    if kind == "compute":
        return Compute(duration=int(data["duration"]))
    if kind == "spawn":
        return Spawn(child=int(data["child"]), defer=DeferMode(data["defer"]))
    if kind == "poll":
        return PollOutcome(
            target=int(data["target"]),
            yield_mode=YieldMode(data["yield_mode"]),
            poll_cost=int(data["poll_cost"]),
        )
    if kind == "taskwait_children":
        return TaskwaitChildren(mode=WaitMode(data["mode"]))
    if kind == "taskgroup_end":
        return TaskgroupEnd(mode=WaitMode(data["mode"]))
    raise ValueError(f"unknown action type {kind!r}")


def graph_to_dict(graph: TaskGraph, meta: dict | None = None) -> dict:
    out = {}
    if meta:
        out["meta"] = dict(meta)
    out["tasks"] = [
        {
            "id": spec.id,
            "priority": spec.priority,
            "tied": spec.tied,
            "label": spec.label,
            "actions": [_action_to_dict(a) for a in spec.actions],
        }
        for spec in graph.tasks
    ]
    out["roots"] = list(graph.roots)
    return out


def graph_from_dict(data: dict) -> TaskGraph:
    tasks = tuple(
        TaskSpec(
            id=int(item["id"]),
            priority=int(item["priority"]),
            tied=bool(item["tied"]),
            label=str(item["label"]),
            actions=tuple(_action_from_dict(a) for a in item["actions"]),
        )
        for item in data["tasks"]
    )
    return TaskGraph(tasks=tasks, roots=tuple(int(r) for r in data["roots"]))


def graph_to_json(graph: TaskGraph, meta: dict | None = None) -> str:
    return json.dumps(graph_to_dict(graph, meta=meta), indent=2)


def graph_from_json(text: str) -> TaskGraph:
    return graph_from_dict(json.loads(text))
